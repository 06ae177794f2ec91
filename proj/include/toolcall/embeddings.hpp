#pragma once

// EMB1 embedding matrix files.
//
// Layout (all integers little-endian):
//   bytes 0..3        ASCII "EMB1"
//   bytes 4..7        uint32 header length H
//   bytes 8..8+H      UTF-8 JSON header {dtype:"f32", rows, cols, layer, model_id}
//   then rows*cols    IEEE-754 binary32 values, row-major

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toolcall/errors.hpp"

namespace toolcall {

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int layer = 0;
  std::string model_id;
  std::vector<float> values;  // row-major, rows * cols

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * cols, cols};
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

struct EmbeddingHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  int layer = 0;
  std::string model_id;
};

namespace detail {

inline constexpr std::array<char, 4> kEmbMagic{'E', 'M', 'B', '1'};

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

// Splits a "<magic><u32 H><json header>" prefix; returns the parsed header and
// the payload offset.
inline std::pair<nlohmann::json, std::size_t> split_framed_header(const std::string& bytes,
                                                                  const std::array<char, 4>& magic,
                                                                  const std::string& what) {
  if (bytes.size() < 8 || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
    throw FormatError(what + ": bad magic");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t header_len = get_u32_le(p + 4);
  if (bytes.size() - 8 < header_len) throw FormatError(what + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": malformed header: " + e.what());
  }
  if (!header.is_object()) throw FormatError(what + ": header is not an object");
  return {std::move(header), 8 + header_len};
}

inline std::string frame_header(const nlohmann::json& header, const std::array<char, 4>& magic) {
  const std::string text = header.dump();
  std::string out(magic.begin(), magic.end());
  put_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  return out;
}

inline void append_f32_le(std::string& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float v : values) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

inline EmbeddingHeader parse_embedding_header(const nlohmann::json& h) {
  try {
    if (h.at("dtype").get<std::string>() != "f32") throw FormatError("EMB1: unsupported dtype");
    EmbeddingHeader out;
    out.rows = h.at("rows").get<std::size_t>();
    out.cols = h.at("cols").get<std::size_t>();
    out.layer = h.at("layer").get<int>();
    out.model_id = h.at("model_id").get<std::string>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("EMB1: bad header field: ") + e.what());
  }
}

}  // namespace detail

inline std::string encode_embeddings(const EmbeddingMatrix& m) {
  if (m.values.size() != m.rows * m.cols) {
    throw InvalidArgument("embedding matrix shape does not match payload length");
  }
  for (float v : m.values) {
    if (!std::isfinite(v)) throw InvalidArgument("embedding matrix contains non-finite values");
  }
  nlohmann::json header = {{"dtype", "f32"}, {"rows", m.rows}, {"cols", m.cols},
                           {"layer", m.layer}, {"model_id", m.model_id}};
  std::string out = detail::frame_header(header, detail::kEmbMagic);
  detail::append_f32_le(out, m.values);
  return out;
}

inline EmbeddingMatrix decode_embeddings(const std::string& bytes) {
  auto [json_header, offset] = detail::split_framed_header(bytes, detail::kEmbMagic, "EMB1");
  const EmbeddingHeader h = detail::parse_embedding_header(json_header);
  const std::size_t expected = h.rows * h.cols * 4;
  const std::size_t available = bytes.size() - offset;
  if (available < expected) {
    throw FormatError("EMB1: truncated payload (" + std::to_string(available) + " of " +
                      std::to_string(expected) + " bytes)");
  }
  if (available > expected) {
    throw FormatError("EMB1: header/payload size mismatch (" + std::to_string(available - expected) +
                      " trailing bytes)");
  }
  EmbeddingMatrix m{h.rows, h.cols, h.layer, h.model_id, std::vector<float>(h.rows * h.cols)};
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = std::bit_cast<float>(detail::get_u32_le(p + 4 * i));
    if (!std::isfinite(m.values[i])) throw FormatError("EMB1: non-finite value at index " + std::to_string(i));
  }
  return m;
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_embeddings(m));
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(detail::read_file_bytes(path));
}

// Reads only the header; used by validation to check row references.
inline EmbeddingHeader read_embedding_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string prefix(8, '\0');
  in.read(prefix.data(), 8);
  if (in.gcount() != 8) throw FormatError("EMB1: bad magic");
  const auto len = detail::get_u32_le(reinterpret_cast<const unsigned char*>(prefix.data()) + 4);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (static_cast<std::size_t>(in.gcount()) != len) throw FormatError("EMB1: truncated header");
  auto [json_header, offset] = detail::split_framed_header(prefix + header, detail::kEmbMagic, "EMB1");
  (void)offset;
  return detail::parse_embedding_header(json_header);
}

}  // namespace toolcall
