// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatfit/tensor.hpp"

namespace splatfit {

// `.wgt` tensor container: "WGT1", u32 rank, rank x u32 dims, then the
// row-major float32 payload. Everything little-endian.

void write_wgt(std::ostream& out, const Tensor& t);
Tensor read_wgt(std::istream& in);

void save_wgt(const std::filesystem::path& path, const Tensor& t);
Tensor load_wgt(const std::filesystem::path& path);

/// Rounds every entry through float32, i.e. what a save/load cycle yields.
Tensor round_to_storage(const Tensor& t);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Several `.wgt` records back to back, plus a JSON manifest (same stem,
/// `.json` extension) naming each record in order. `extra` is merged into the
/// manifest under "meta".
void save_archive(const std::filesystem::path& wgt_path,
                  const std::vector<NamedTensor>& tensors,
                  const nlohmann::json& extra = nlohmann::json::object());

struct Archive {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

Archive load_archive(const std::filesystem::path& wgt_path);

std::filesystem::path manifest_path_for(const std::filesystem::path& wgt_path);

}  // namespace splatfit
