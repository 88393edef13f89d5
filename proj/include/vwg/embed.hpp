#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vwg/error.hpp"
#include "vwg/rng.hpp"

namespace vwg {

// Trims surrounding ASCII whitespace and lowercases A-Z. Punctuation and
// digits pass through so amounts like "100.00" survive.
inline std::string normalize_token(const std::string& text) {
  auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  };
  std::size_t b = 0, e = text.size();
  while (b < e && is_space(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) {
    const char c = text[i];
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Pretrained vectors keyed by normalized token.
struct EmbeddingTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<float>> entries;
};

enum class EmbedMode { hashed, table_with_hashed_fallback };

// Maps token strings to unit-norm d-vectors. Tokens are wrapped as <token>
// and decomposed into byte n-grams; each n-gram hashes into one of 2^20
// buckets whose vector is drawn deterministically from the seed, so two
// tokens sharing subwords share summands. An optional pretrained table takes
// precedence for tokens it contains.
struct Embedder {
  int dim = 32;
  EmbedMode mode = EmbedMode::hashed;
  EmbeddingTable table;
  int ngram_min = 3;
  int ngram_max = 5;
  std::uint32_t bucket_count = 1u << 20;
  std::uint64_t seed = 0x5EEDC0DEULL;
};

namespace detail {

inline void add_bucket_vector(const Embedder& e, std::uint64_t bucket, std::vector<double>& acc) {
  Xoshiro256 rng(derive_seed(e.seed, bucket));
  const double scale = 1.0 / std::sqrt(static_cast<double>(e.dim));
  for (int i = 0; i < e.dim; ++i) acc[static_cast<std::size_t>(i)] += (2.0 * rng.next_double() - 1.0) * scale;
}

}  // namespace detail

inline std::vector<float> embed_token(const Embedder& e, const std::string& text) {
  const std::string tok = normalize_token(text);
  std::vector<float> out(static_cast<std::size_t>(e.dim), 0.0f);
  if (tok.empty()) return out;

  if (e.mode == EmbedMode::table_with_hashed_fallback) {
    const auto it = e.table.entries.find(tok);
    if (it != e.table.entries.end()) return it->second;
  }

  const std::string wrapped = "<" + tok + ">";
  std::vector<double> acc(static_cast<std::size_t>(e.dim), 0.0);
  for (int n = e.ngram_min; n <= e.ngram_max; ++n) {
    if (wrapped.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= wrapped.size(); ++i) {
      const std::uint64_t h = fnv1a64(wrapped.data() + i, static_cast<std::size_t>(n));
      detail::add_bucket_vector(e, h % e.bucket_count, acc);
    }
  }
  double norm2 = 0.0;
  for (double v : acc) norm2 += v * v;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (int i = 0; i < e.dim; ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)] * inv);
  }
  return out;
}

// word2vec text format: optional "count dim" first line, then one token and
// d floats per line. Tokens are normalized on load, last duplicate wins.
inline EmbeddingTable load_embedding_table(const std::string& path, int expected_dim) {
  std::ifstream is(path);
  if (!is) throw IoFailure("cannot open: " + path);
  EmbeddingTable table;
  table.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (first) {
      first = false;
      // header line is two integers: "count dim"
      long long count = 0, dim = 0;
      std::istringstream probe(line);
      std::string rest;
      if (probe >> count >> dim && !(probe >> rest)) {
        if (dim != expected_dim)
          throw DimensionMismatch(path + ": table dimension " + std::to_string(dim) + ", expected " +
                                  std::to_string(expected_dim));
        continue;
      }
    }
    std::string token;
    if (!(ss >> token)) throw MalformedLine(line_no, "missing token");
    std::vector<float> vec;
    double v = 0.0;
    while (ss >> v) vec.push_back(static_cast<float>(v));
    if (!ss.eof()) throw MalformedLine(line_no, "non-numeric vector component");
    if (static_cast<int>(vec.size()) != expected_dim)
      throw DimensionMismatch(path + " line " + std::to_string(line_no) + ": got " +
                              std::to_string(vec.size()) + " components, expected " +
                              std::to_string(expected_dim));
    for (float f : vec)
      if (!std::isfinite(f)) throw MalformedLine(line_no, "non-finite vector component");
    table.entries[normalize_token(token)] = std::move(vec);
  }
  return table;
}

}  // namespace vwg
