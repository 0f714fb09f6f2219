#pragma once

// Knowledge-base graphs: classified frames aggregated into (Arg1, Pred, Arg2)
// tuples with token-span provenance for every node.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "newsie/clauses.hpp"
#include "newsie/error.hpp"
#include "newsie/extractor.hpp"
#include "newsie/text.hpp"

namespace newsie {

enum class NodeKind { Entity, Predicate, Dummy, FusedPredicate };
enum class EdgeLabel { Pred, Append };

inline std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Entity: return "ENTITY";
    case NodeKind::Predicate: return "PREDICATE";
    case NodeKind::Dummy: return "DUMMY";
    case NodeKind::FusedPredicate: return "FUSED_PREDICATE";
  }
  return "?";
}

inline std::string_view edge_label_name(EdgeLabel l) { return l == EdgeLabel::Pred ? "PRED" : "APPEND"; }

struct Provenance {
  std::size_t sentence = 0;
  std::vector<WordId> words;

  bool operator==(const Provenance&) const = default;
};

struct KbNode {
  int id = 0;
  std::string text;
  NodeKind kind = NodeKind::Entity;
  std::vector<Provenance> provenance;

  bool operator==(const KbNode&) const = default;
};

struct KbEdge {
  int src = 0;
  int dst = 0;
  EdgeLabel label = EdgeLabel::Pred;

  bool operator==(const KbEdge&) const = default;
};

// Clause type of each aggregated frame and the node that carries its predicate.
struct KbClause {
  ClauseType type = ClauseType::SV;
  int predicate = 0;

  bool operator==(const KbClause&) const = default;
};

struct KnowledgeBase {
  std::string doc_id;
  std::optional<std::string> label;
  std::vector<KbNode> nodes;
  std::vector<KbEdge> edges;
  std::vector<KbClause> clauses;

  std::size_t node_count() const { return nodes.size(); }
  bool operator==(const KnowledgeBase&) const = default;
};

struct TypedFrame {
  ClauseFrame frame;
  ClauseType type = ClauseType::SV;
};

namespace detail {

class KbBuilder {
 public:
  explicit KbBuilder(KnowledgeBase& kb) : kb_(kb) {}

  // Entities are shared document-wide by normalized text.
  int entity(const Chunk& c, std::size_t sentence) {
    auto key = text::normalize(c.text);
    const auto it = entities_.find(key);
    if (it != entities_.end()) {
      add_provenance(kb_.nodes[static_cast<std::size_t>(it->second)], {sentence, c.word_ids});
      return it->second;
    }
    const int id = add(NodeKind::Entity, key, {{sentence, c.word_ids}});
    entities_.emplace(std::move(key), id);
    return id;
  }

  int predicate(const Chunk& c, std::size_t sentence) {
    return add(NodeKind::Predicate, text::normalize(c.text), {{sentence, c.word_ids}});
  }

  int fused(const Chunk& verb, const Chunk& object, std::size_t sentence) {
    return add(NodeKind::FusedPredicate, text::normalize(verb.text + " " + object.text),
               {{sentence, verb.word_ids}, {sentence, object.word_ids}});
  }

  int dummy() { return add(NodeKind::Dummy, {}, {}); }

  void edge(int src, int dst, EdgeLabel label) { kb_.edges.push_back({src, dst, label}); }

 private:
  int add(NodeKind kind, std::string text, std::vector<Provenance> prov) {
    const int id = static_cast<int>(kb_.nodes.size());
    kb_.nodes.push_back({id, std::move(text), kind, std::move(prov)});
    return id;
  }

  static void add_provenance(KbNode& node, Provenance p) {
    for (const auto& existing : node.provenance)
      if (existing == p) return;
    node.provenance.push_back(std::move(p));
  }

  KnowledgeBase& kb_;
  std::map<std::string, int> entities_;
};

// Earliest prepositional object or adverbial in surface order.
inline const Chunk* first_adverbial(const ClauseFrame& f) {
  const Chunk* best = nullptr;
  const auto consider = [&](const Chunk& c) {
    if (!best || c.word_ids.front() < best->word_ids.front()) best = &c;
  };
  for (const auto& c : f.prep_objects) consider(c);
  for (const auto& c : f.adverbials) consider(c);
  return best;
}

inline const Chunk& require(const std::optional<Chunk>& c, ClauseType t, std::string_view what) {
  if (!c) throw Error(Errc::InvalidFormat, std::string(clause_type_name(t)) + " frame lacks " + std::string(what));
  return *c;
}

inline const Chunk& require(const Chunk* c, ClauseType t, std::string_view what) {
  if (!c) throw Error(Errc::InvalidFormat, std::string(clause_type_name(t)) + " frame lacks " + std::string(what));
  return *c;
}

}  // namespace detail

// Node/edge templates per clause type. Edges run S->V and V->X; APPEND edges
// attach a complement or adverbial to the object.
inline KnowledgeBase aggregate(std::span<const TypedFrame> frames, std::string doc_id = {},
                               std::optional<std::string> label = std::nullopt) {
  if (frames.empty()) throw Error(Errc::EmptyDocument, "document '" + doc_id + "' produced no frames");
  KnowledgeBase kb;
  kb.doc_id = std::move(doc_id);
  kb.label = std::move(label);
  detail::KbBuilder b(kb);

  for (const auto& [f, type] : frames) {
    const auto sent = f.sentence;
    const int s = b.entity(f.subject, sent);
    int v = 0;
    switch (type) {
      case ClauseType::SV: {
        v = b.predicate(f.predicate, sent);
        const int d = b.dummy();
        b.edge(s, v, EdgeLabel::Pred);
        b.edge(v, d, EdgeLabel::Pred);
        break;
      }
      case ClauseType::SVO:
      case ClauseType::SVC:
      case ClauseType::SVA: {
        const Chunk& x = type == ClauseType::SVO   ? detail::require(f.direct_object, type, "a direct object")
                         : type == ClauseType::SVC ? detail::require(f.complements.empty() ? nullptr : &f.complements.front(), type, "a complement")
                                                   : detail::require(detail::first_adverbial(f), type, "an adverbial");
        v = b.predicate(f.predicate, sent);
        const int o = b.entity(x, sent);
        b.edge(s, v, EdgeLabel::Pred);
        b.edge(v, o, EdgeLabel::Pred);
        break;
      }
      case ClauseType::SVOC:
      case ClauseType::SVOA: {
        const Chunk& obj = detail::require(f.direct_object, type, "a direct object");
        const Chunk& extra = type == ClauseType::SVOC
                                 ? detail::require(f.complements.empty() ? nullptr : &f.complements.front(), type, "a complement")
                                 : detail::require(detail::first_adverbial(f), type, "an adverbial");
        v = b.predicate(f.predicate, sent);
        const int o = b.entity(obj, sent);
        const int x = b.entity(extra, sent);
        b.edge(s, v, EdgeLabel::Pred);
        b.edge(v, o, EdgeLabel::Pred);
        b.edge(o, x, EdgeLabel::Append);
        break;
      }
      case ClauseType::SVOO: {
        const Chunk& od = detail::require(f.direct_object, type, "a direct object");
        const Chunk& oi = detail::require(f.indirect_object, type, "an indirect object");
        v = b.fused(f.predicate, od, sent);
        const int o = b.entity(oi, sent);
        b.edge(s, v, EdgeLabel::Pred);
        b.edge(v, o, EdgeLabel::Pred);
        break;
      }
    }
    kb.clauses.push_back({type, v});
  }
  return kb;
}

// Directed pairs in insertion order followed by their reversals.
inline std::pair<std::vector<std::pair<int, int>>, std::size_t> to_edge_list(const KnowledgeBase& kb) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(kb.edges.size() * 2);
  for (const auto& e : kb.edges) pairs.emplace_back(e.src, e.dst);
  for (const auto& e : kb.edges) pairs.emplace_back(e.dst, e.src);
  return {std::move(pairs), kb.nodes.size()};
}

// Throws InvalidFormat when a structural invariant is broken.
inline void validate(const KnowledgeBase& kb) {
  const int k = static_cast<int>(kb.nodes.size());
  for (int i = 0; i < k; ++i) {
    const auto& n = kb.nodes[static_cast<std::size_t>(i)];
    if (n.id != i) throw Error(Errc::InvalidFormat, "node ids must be contiguous from 0");
    if (n.kind == NodeKind::Dummy && (!n.text.empty() || !n.provenance.empty()))
      throw Error(Errc::InvalidFormat, "DUMMY node " + std::to_string(i) + " carries content");
    if (n.kind != NodeKind::Dummy && n.provenance.empty())
      throw Error(Errc::InvalidFormat, "node " + std::to_string(i) + " has no provenance");
  }
  for (const auto& e : kb.edges) {
    if (e.src < 0 || e.src >= k || e.dst < 0 || e.dst >= k)
      throw Error(Errc::InvalidFormat, "edge endpoint out of range");
    if (e.src == e.dst && kb.nodes[static_cast<std::size_t>(e.src)].kind != NodeKind::Entity)
      throw Error(Errc::InvalidFormat, "self-loop on non-entity node " + std::to_string(e.src));
  }
  for (const auto& c : kb.clauses)
    if (c.predicate < 0 || c.predicate >= k) throw Error(Errc::InvalidFormat, "clause predicate out of range");
}

inline nlohmann::ordered_json to_json(const KnowledgeBase& kb) {
  nlohmann::ordered_json j;
  j["doc_id"] = kb.doc_id;
  j["label"] = kb.label ? nlohmann::ordered_json(*kb.label) : nlohmann::ordered_json(nullptr);
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : kb.nodes) {
    nlohmann::ordered_json node;
    node["id"] = n.id;
    node["text"] = n.text;
    node["kind"] = node_kind_name(n.kind);
    auto prov = nlohmann::ordered_json::array();
    for (const auto& p : n.provenance) {
      nlohmann::ordered_json span;
      span["sent"] = p.sentence;
      span["words"] = p.words;
      prov.push_back(std::move(span));
    }
    node["provenance"] = std::move(prov);
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (const auto& e : kb.edges) {
    nlohmann::ordered_json edge;
    edge["src"] = e.src;
    edge["dst"] = e.dst;
    edge["label"] = edge_label_name(e.label);
    edges.push_back(std::move(edge));
  }
  j["edges"] = std::move(edges);
  auto clauses = nlohmann::ordered_json::array();
  for (const auto& c : kb.clauses) {
    nlohmann::ordered_json clause;
    clause["type"] = clause_type_name(c.type);
    clause["pred"] = c.predicate;
    clauses.push_back(std::move(clause));
  }
  j["clauses"] = std::move(clauses);
  return j;
}

inline std::string serialize(const KnowledgeBase& kb) { return to_json(kb).dump(2) + "\n"; }

inline KnowledgeBase kb_from_json(const nlohmann::json& j) {
  try {
    KnowledgeBase kb;
    kb.doc_id = j.at("doc_id").get<std::string>();
    if (!j.at("label").is_null()) kb.label = j.at("label").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      KbNode node;
      node.id = n.at("id").get<int>();
      node.text = n.at("text").get<std::string>();
      const auto kind = n.at("kind").get<std::string>();
      if (kind == "ENTITY") node.kind = NodeKind::Entity;
      else if (kind == "PREDICATE") node.kind = NodeKind::Predicate;
      else if (kind == "DUMMY") node.kind = NodeKind::Dummy;
      else if (kind == "FUSED_PREDICATE") node.kind = NodeKind::FusedPredicate;
      else throw Error(Errc::InvalidFormat, "unknown node kind '" + kind + "'");
      for (const auto& p : n.at("provenance"))
        node.provenance.push_back({p.at("sent").get<std::size_t>(), p.at("words").get<std::vector<WordId>>()});
      kb.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
      const auto label = e.at("label").get<std::string>();
      if (label != "PRED" && label != "APPEND") throw Error(Errc::InvalidFormat, "unknown edge label '" + label + "'");
      kb.edges.push_back(
          {e.at("src").get<int>(), e.at("dst").get<int>(), label == "PRED" ? EdgeLabel::Pred : EdgeLabel::Append});
    }
    if (j.contains("clauses")) {
      for (const auto& c : j.at("clauses")) {
        const auto type = parse_clause_type(c.at("type").get<std::string>());
        if (!type) throw Error(Errc::InvalidFormat, "unknown clause type");
        kb.clauses.push_back({*type, c.at("pred").get<int>()});
      }
    }
    validate(kb);
    return kb;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFormat, std::string("knowledge base JSON: ") + e.what());
  }
}

inline KnowledgeBase parse_kb(std::string_view content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFormat, std::string("knowledge base JSON: ") + e.what());
  }
  return kb_from_json(j);
}

}  // namespace newsie
