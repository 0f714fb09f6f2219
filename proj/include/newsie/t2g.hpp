#pragma once

// Text-to-graph adapter: pools token embeddings into one feature row per
// knowledge-base node and stacks graphs into disjoint-union batches.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "newsie/error.hpp"
#include "newsie/kb.hpp"
#include "newsie/matrix.hpp"
#include "newsie/text.hpp"

namespace newsie {

// (sentence index, word id) -> subword row indices
using OffsetKey = std::pair<std::size_t, WordId>;
using OffsetMap = std::map<OffsetKey, std::vector<std::size_t>>;

struct EmbeddingTable {
  Matrix rows;  // n_tokens x dim
  OffsetMap offsets;

  std::size_t n_tokens() const { return rows.rows(); }
  std::size_t dim() const { return rows.cols(); }
};

enum class DummyPolicy { Zero };

inline void validate(const EmbeddingTable& emb) {
  if (emb.dim() == 0) throw Error(Errc::DimMismatch, "embedding dim must be positive");
  if (!emb.rows.all_finite()) throw Error(Errc::InvalidFormat, "embedding rows contain NaN or Inf");
  for (const auto& [key, idx] : emb.offsets) {
    const auto name = std::to_string(key.first) + ":" + std::to_string(key.second);
    if (idx.empty()) throw Error(Errc::MissingOffset, "offsets entry " + name + " is empty");
    for (const auto i : idx)
      if (i >= emb.n_tokens())
        throw Error(Errc::IndexOutOfRange, "offsets entry " + name + " points past row " + std::to_string(i));
  }
}

// "EMB 1 <n> <dim>" then n lines of dim space-separated values.
inline Matrix parse_embedding_matrix(std::string_view content) {
  auto lines = text::split(content, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw Error(Errc::InvalidFormat, "embedding file is empty");

  const auto header = text::split(lines[0], ' ');
  std::size_t n = 0, dim = 0;
  const auto parse_size = [](std::string_view s, std::size_t& v) {
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && p == s.data() + s.size();
  };
  if (header.size() != 4 || header[0] != "EMB" || header[1] != "1" || !parse_size(header[2], n) ||
      !parse_size(header[3], dim))
    throw Error(Errc::InvalidFormat, "embedding header must read 'EMB 1 <n_tokens> <dim>'", 1);
  if (dim == 0) throw Error(Errc::DimMismatch, "embedding dim must be positive", 1);
  if (lines.size() - 1 != n)
    throw Error(Errc::DimMismatch,
                "header announces " + std::to_string(n) + " rows, file has " + std::to_string(lines.size() - 1));

  Matrix m(n, dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto vals = text::split(lines[r + 1], ' ');
    if (vals.size() != dim)
      throw Error(Errc::DimMismatch, "expected " + std::to_string(dim) + " values, found " + std::to_string(vals.size()),
                  r + 2);
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(vals[c].data(), vals[c].data() + vals[c].size(), v);
      if (ec != std::errc{} || p != vals[c].data() + vals[c].size() || !std::isfinite(v))
        throw Error(Errc::InvalidFormat, "bad value '" + std::string(vals[c]) + "'", r + 2);
      m(r, c) = v;
    }
  }
  return m;
}

// Shortest representation that round-trips each double exactly.
inline std::string format_double(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline std::string write_embedding_matrix(const Matrix& m) {
  std::string out = "EMB 1 " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(' ');
      out += format_double(m(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

// {"<sent>:<word>": [subword rows]}
inline OffsetMap parse_offsets(std::string_view content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFormat, std::string("offsets JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::InvalidFormat, "offsets JSON must be an object");
  OffsetMap out;
  for (const auto& [key, val] : j.items()) {
    const auto colon = key.find(':');
    std::size_t sent = 0;
    WordId word = 0;
    const auto* b = key.data();
    const auto* e = key.data() + key.size();
    const bool ok = colon != std::string::npos &&
                    std::from_chars(b, b + colon, sent).ptr == b + colon &&
                    std::from_chars(b + colon + 1, e, word).ptr == e && word >= 1;
    if (!ok) throw Error(Errc::InvalidFormat, "offsets key '" + key + "' is not <sent>:<word>");
    if (!val.is_array()) throw Error(Errc::InvalidFormat, "offsets entry '" + key + "' is not an array");
    std::vector<std::size_t> rows;
    for (const auto& v : val) {
      if (!v.is_number_unsigned()) throw Error(Errc::InvalidFormat, "offsets entry '" + key + "' holds a non-index");
      rows.push_back(v.get<std::size_t>());
    }
    out[{sent, word}] = std::move(rows);
  }
  return out;
}

inline std::string write_offsets(const OffsetMap& offsets) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, rows] : offsets) j[std::to_string(key.first) + ":" + std::to_string(key.second)] = rows;
  return j.dump() + "\n";
}

// Row k is the mean of every subword row of every word in node k's provenance.
inline Matrix pool_nodes(const KnowledgeBase& kb, const EmbeddingTable& emb, DummyPolicy policy = DummyPolicy::Zero) {
  validate(emb);
  (void)policy;  // Zero is the only policy; DUMMY rows stay zero.
  const std::size_t dim = emb.dim();
  Matrix out(kb.nodes.size(), dim);
  for (std::size_t k = 0; k < kb.nodes.size(); ++k) {
    const auto& node = kb.nodes[k];
    if (node.kind == NodeKind::Dummy) continue;
    auto row = out.row(k);
    std::size_t count = 0;
    for (const auto& span : node.provenance) {
      for (const WordId w : span.words) {
        const auto it = emb.offsets.find({span.sentence, w});
        if (it == emb.offsets.end())
          throw Error(Errc::MissingOffset, "no subword alignment for sentence " + std::to_string(span.sentence) +
                                               " word " + std::to_string(w) + " (node " + std::to_string(k) + ")");
        for (const auto r : it->second) {
          const auto src = emb.rows.row(r);
          for (std::size_t c = 0; c < dim; ++c) row[c] += src[c];
          ++count;
        }
      }
    }
    if (count == 0) throw Error(Errc::MissingOffset, "node " + std::to_string(k) + " has no words");
    for (auto& v : row) v /= static_cast<double>(count);
  }
  return out;
}

// One graph ready for batching: node features, symmetrized local edges, class id.
struct GraphSample {
  Matrix features;
  std::vector<std::pair<int, int>> edges;
  int label = -1;
};

inline GraphSample make_sample(const KnowledgeBase& kb, Matrix features, int label = -1) {
  if (features.rows() != kb.nodes.size())
    throw Error(Errc::DimMismatch, "feature rows (" + std::to_string(features.rows()) + ") != node count (" +
                                       std::to_string(kb.nodes.size()) + ")");
  GraphSample s;
  s.features = std::move(features);
  s.edges = to_edge_list(kb).first;
  s.label = label;
  return s;
}

struct GraphBatch {
  Matrix features;                          // (sum K_i) x dim
  std::vector<std::pair<int, int>> edges;   // global ids
  std::vector<std::size_t> graph_of;        // global node id -> graph index
  std::vector<std::size_t> offsets;         // graph i occupies [offsets[i], offsets[i+1])
  std::vector<int> labels;                  // per graph; -1 when unknown

  std::size_t num_graphs() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t num_nodes() const { return features.rows(); }
};

// Disjoint union: graph i's ids are shifted by the node counts of graphs 0..i-1.
inline GraphBatch assemble_batch(std::span<const GraphSample> items) {
  if (items.empty()) throw Error(Errc::EmptyBatch, "cannot assemble an empty batch");
  const std::size_t dim = items.front().features.cols();
  std::size_t total = 0;
  for (const auto& it : items) {
    if (it.features.cols() != dim)
      throw Error(Errc::DimMismatch, "feature dims differ within batch: " + std::to_string(dim) + " vs " +
                                         std::to_string(it.features.cols()));
    total += it.features.rows();
  }
  GraphBatch b;
  b.features = Matrix(total, dim);
  b.offsets.push_back(0);
  std::size_t base = 0;
  for (std::size_t g = 0; g < items.size(); ++g) {
    const auto& it = items[g];
    const auto k = it.features.rows();
    std::copy(it.features.data().begin(), it.features.data().end(),
              b.features.data().begin() + static_cast<std::ptrdiff_t>(base * dim));
    for (const auto& [s, d] : it.edges) {
      if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= k || static_cast<std::size_t>(d) >= k)
        throw Error(Errc::IndexOutOfRange, "edge (" + std::to_string(s) + "," + std::to_string(d) +
                                               ") outside graph " + std::to_string(g));
      b.edges.emplace_back(s + static_cast<int>(base), d + static_cast<int>(base));
    }
    b.graph_of.insert(b.graph_of.end(), k, g);
    base += k;
    b.offsets.push_back(base);
    b.labels.push_back(it.label);
  }
  return b;
}

inline GraphBatch assemble_batch(std::span<const std::pair<KnowledgeBase, EmbeddingTable>> items,
                                 const std::map<std::string, int>& class_ids = {},
                                 DummyPolicy policy = DummyPolicy::Zero) {
  std::vector<GraphSample> samples;
  samples.reserve(items.size());
  for (const auto& [kb, emb] : items) {
    int label = -1;
    if (kb.label) {
      const auto it = class_ids.find(*kb.label);
      if (it != class_ids.end()) label = it->second;
    }
    samples.push_back(make_sample(kb, pool_nodes(kb, emb, policy), label));
  }
  return assemble_batch(samples);
}

// Per-graph feature blocks, in batch order.
inline std::vector<Matrix> split_batch(const GraphBatch& b) {
  std::vector<Matrix> out;
  const std::size_t dim = b.features.cols();
  for (std::size_t g = 0; g < b.num_graphs(); ++g) {
    const auto lo = b.offsets[g], hi = b.offsets[g + 1];
    std::vector<double> data(b.features.data().begin() + static_cast<std::ptrdiff_t>(lo * dim),
                             b.features.data().begin() + static_cast<std::ptrdiff_t>(hi * dim));
    out.emplace_back(hi - lo, dim, std::move(data));
  }
  return out;
}

}  // namespace newsie
