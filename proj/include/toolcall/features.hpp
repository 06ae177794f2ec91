#pragma once

// Assembles per-record feature matrices from EMB1 layer files.
//
// Layer files for one condition sit in a single directory and are named
// "<condition>_L<layer, 3 digits>.emb1". A record's embedding_refs entry for
// the condition supplies its row, which is the same in every layer file.

#include <algorithm>
#include <filesystem>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "toolcall/embeddings.hpp"
#include "toolcall/errors.hpp"
#include "toolcall/standardizer.hpp"
#include "toolcall/synth.hpp"
#include "toolcall/trace_store.hpp"

namespace toolcall {

inline std::vector<int> discover_layers(const std::filesystem::path& dir, EmbeddingCondition c) {
  if (!std::filesystem::is_directory(dir)) throw Error("embedding directory not found: " + dir.string());
  const std::regex pattern(to_string(c) + "_L([0-9]+)\\.emb1");
  std::vector<int> layers;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) layers.push_back(std::stoi(m[1].str()));
  }
  std::sort(layers.begin(), layers.end());
  return layers;
}

inline std::vector<std::size_t> embedding_rows(const TraceSet& ts, EmbeddingCondition c) {
  std::vector<std::size_t> rows;
  rows.reserve(ts.size());
  for (const auto& r : ts.records) {
    auto it = r.embedding_refs.find(c);
    if (it == r.embedding_refs.end()) {
      throw MissingEmbedding("record " + r.instance_id + " has no " + to_string(c) + " embedding");
    }
    rows.push_back(it->second.row);
  }
  return rows;
}

// Gathers the referenced rows, promoting to 64-bit.
inline Matrix gather_rows(const EmbeddingMatrix& m, const std::vector<std::size_t>& rows) {
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows) throw MissingEmbedding("embedding row " + std::to_string(rows[i]) + " out of range");
    const auto src = m.row(rows[i]);
    for (std::size_t j = 0; j < m.cols; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = src[j];
  }
  return x;
}

inline Matrix feature_matrix(const TraceSet& ts, const std::filesystem::path& dir, EmbeddingCondition c, int layer) {
  const auto m = read_embeddings(dir / embedding_file_name(c, layer));
  return gather_rows(m, embedding_rows(ts, c));
}

}  // namespace toolcall
