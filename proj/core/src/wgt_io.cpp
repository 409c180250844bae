// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/wgt_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

constexpr std::array<char, 4> kMagic{'W', 'G', 'T', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("wgt: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_wgt(std::ostream& out, const Tensor& t) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  std::vector<unsigned char> payload(t.size() * 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
    for (int b = 0; b < 4; ++b) payload[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw FormatError("wgt: write failed");
}

Tensor read_wgt(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw FormatError("wgt: bad magic");
  const auto rank = get_u32(in);
  if (rank > 16) throw FormatError("wgt: implausible rank");
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(in);
  const auto n = shape_volume(shape);
  std::vector<unsigned char> payload(n * 4);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
    throw FormatError("wgt: truncated payload");
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_wgt(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_wgt(out, t);
}

Tensor load_wgt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_wgt(in);
}

Tensor round_to_storage(const Tensor& t) {
  Tensor r = t;
  for (auto& v : r.values()) v = static_cast<double>(static_cast<float>(v));
  return r;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& wgt_path) {
  auto p = wgt_path;
  p.replace_extension(".json");
  return p;
}

void save_archive(const std::filesystem::path& wgt_path, const std::vector<NamedTensor>& tensors,
                  const nlohmann::json& extra) {
  std::ofstream out(wgt_path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + wgt_path.string() + " for writing");
  nlohmann::json manifest;
  manifest["format"] = "wgt-archive";
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& nt : tensors) {
    write_wgt(out, nt.value);
    manifest["tensors"].push_back({{"name", nt.name}, {"shape", nt.value.shape()}});
  }
  manifest["meta"] = extra;
  std::ofstream mf(manifest_path_for(wgt_path));
  if (!mf) throw FormatError("cannot write manifest for " + wgt_path.string());
  mf << manifest.dump(2) << '\n';
}

Archive load_archive(const std::filesystem::path& wgt_path) {
  std::ifstream mf(manifest_path_for(wgt_path));
  if (!mf) throw FormatError("missing manifest for " + wgt_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad archive manifest: ") + e.what());
  }
  std::ifstream in(wgt_path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + wgt_path.string());
  Archive archive;
  for (const auto& entry : manifest.at("tensors")) {
    Tensor t = read_wgt(in);
    if (t.shape() != entry.at("shape").get<Shape>()) {
      throw FormatError("archive entry " + entry.at("name").get<std::string>() + " has unexpected shape");
    }
    archive.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  archive.meta = manifest.value("meta", nlohmann::json::object());
  return archive;
}

const Tensor& Archive::get(const std::string& name) const {
  for (const auto& nt : tensors) {
    if (nt.name == name) return nt.value;
  }
  throw FormatError("archive has no tensor named " + name);
}

bool Archive::contains(const std::string& name) const {
  for (const auto& nt : tensors) {
    if (nt.name == name) return true;
  }
  return false;
}

}  // namespace splatfit
