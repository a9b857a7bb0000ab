#pragma once

// Checkpoint layout (little-endian):
//   u32 entry_count
//   entry_count x (u32 layer, u32 offset, u32 rows, u32 cols, u32 role)
//   f32 values[sum rows*cols]

#include <filesystem>
#include <fstream>
#include <vector>

#include "flsnn/compression.hpp"
#include "flsnn/core.hpp"

namespace flsnn {

inline std::vector<std::uint8_t> encode_checkpoint(const ParameterVector<float>& p) {
  p.check();
  std::vector<std::uint8_t> out;
  detail::put_u32(out, static_cast<std::uint32_t>(p.layout.entries.size()));
  for (const auto& e : p.layout.entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.layer));
    detail::put_u32(out, static_cast<std::uint32_t>(e.offset));
    detail::put_u32(out, static_cast<std::uint32_t>(e.rows));
    detail::put_u32(out, static_cast<std::uint32_t>(e.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(e.role));
  }
  for (auto v : p.values) detail::put_f32(out, v);
  return out;
}

inline ParameterVector<float> decode_checkpoint(std::span<const std::uint8_t> in) {
  const std::uint32_t count = detail::get_u32(in, 0);
  Layout layout;
  std::size_t at = 4;
  for (std::uint32_t i = 0; i < count; ++i, at += 20) {
    LayoutEntry e;
    e.layer = detail::get_u32(in, at);
    e.offset = detail::get_u32(in, at + 4);
    e.rows = detail::get_u32(in, at + 8);
    e.cols = detail::get_u32(in, at + 12);
    const auto role = detail::get_u32(in, at + 16);
    if (role > 1) throw std::runtime_error("checkpoint: bad block role");
    e.role = static_cast<BlockRole>(role);
    layout.entries.push_back(e);
  }
  ParameterVector<float> p(std::move(layout));
  if (in.size() != at + 4 * p.size()) throw std::runtime_error("checkpoint: payload length mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = std::bit_cast<float>(detail::get_u32(in, at + 4 * i));
  p.check();
  return p;
}

inline void write_checkpoint(const std::filesystem::path& path, const ParameterVector<float>& p) {
  const auto bytes = encode_checkpoint(p);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ParameterVector<float> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace flsnn
