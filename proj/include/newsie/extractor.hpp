#pragma once

// Predicate-argument extraction: subject, predicate, object, complement and
// adverbial chunks read off a dependency tree by label/POS rules.

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "newsie/depmodel.hpp"
#include "newsie/text.hpp"

namespace newsie {

enum class ChunkKind { Subject, Predicate, DirectObject, IndirectObject, PrepObject, Complement, Adverbial };

inline std::string_view chunk_kind_name(ChunkKind k) {
  switch (k) {
    case ChunkKind::Subject: return "SUBJECT";
    case ChunkKind::Predicate: return "PREDICATE";
    case ChunkKind::DirectObject: return "DIRECT_OBJECT";
    case ChunkKind::IndirectObject: return "INDIRECT_OBJECT";
    case ChunkKind::PrepObject: return "PREP_OBJECT";
    case ChunkKind::Complement: return "COMPLEMENT";
    case ChunkKind::Adverbial: return "ADVERBIAL";
  }
  return "?";
}

struct Chunk {
  ChunkKind kind = ChunkKind::Subject;
  std::vector<WordId> word_ids;  // ascending, non-empty
  std::string text;
  WordId head_id = 0;
  std::string head_lemma;  // lowercase; falls back to the form when the lemma column is empty

  bool operator==(const Chunk&) const = default;
};

struct PredicateChunk {
  Chunk chunk;
  bool negated = false;
  bool passive = false;
};

struct ObjectSet {
  std::optional<Chunk> direct;
  std::optional<Chunk> indirect;
  std::vector<Chunk> preps;
};

struct ClauseFrame {
  std::size_t sentence = 0;
  Chunk subject;
  Chunk predicate;
  std::optional<Chunk> direct_object;
  std::optional<Chunk> indirect_object;
  std::vector<Chunk> prep_objects;
  std::vector<Chunk> complements;
  std::vector<Chunk> adverbials;
  bool negated = false;
  bool passive = false;
  // Verbless sentence: the predicate is a copy of the subject head.
  bool synthetic_predicate = false;

  bool operator==(const ClauseFrame&) const = default;
};

// Returns entity spans for a sentence; used to widen subject chunks.
using NerRectifier = std::function<std::vector<EntitySpan>(const DepTree&)>;

// Rectifier backed by `NER=` annotations in the CoNLL-U MISC column.
inline NerRectifier misc_ner_rectifier() {
  return [](const DepTree& tree) { return tree.entities(); };
}

namespace detail {

inline bool is_one_of(std::string_view label, std::initializer_list<std::string_view> set) {
  return std::find(set.begin(), set.end(), label) != set.end();
}

inline bool is_subject_label(std::string_view l) {
  return is_one_of(l, {dep::NSUBJ, dep::CSUBJ, dep::NSUBJPASS, dep::CSUBJPASS});
}

inline std::string head_lemma(const Token& t) {
  const bool missing = t.lemma.empty() || t.lemma == "_";
  return text::to_lower(missing ? t.form : t.lemma);
}

inline Chunk make_chunk(const DepTree& tree, ChunkKind kind, std::vector<WordId> ids, WordId head) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Chunk c;
  c.kind = kind;
  c.head_id = head;
  c.head_lemma = head_lemma(tree.at(head));
  for (const WordId id : ids) {
    if (!c.text.empty()) c.text.push_back(' ');
    c.text += tree.at(id).form;
  }
  c.word_ids = std::move(ids);
  return c;
}

// Collects descendants of `head` reachable through nodes that all satisfy `eligible`.
template <typename Pred>
std::vector<WordId> collect_connected(const DepTree& tree, WordId head, Pred eligible) {
  std::vector<WordId> out{head};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (const auto& t : tree.tokens())
      if (t.head == out[i] && eligible(t)) out.push_back(t.id);
  return out;
}

inline std::vector<WordId> compound_expansion(const DepTree& tree, WordId head) {
  return collect_connected(tree, head, [](const Token& t) { return t.deprel == dep::COMPOUND; });
}

inline bool is_prep_head(const Token& t) {
  return is_one_of(t.deprel, {dep::POBJ, dep::PREP, dep::AGENT}) || (t.deprel == dep::DATIVE && t.upos == "ADP");
}

}  // namespace detail

// Subject heads in surface order. A sentence without any verb (VERB or AUX)
// uses its root as the single subject head.
inline std::vector<WordId> extract_subject_heads(const DepTree& tree) {
  if (!tree.has_upos("VERB") && !tree.has_upos("AUX")) return {tree.root_id()};
  std::vector<WordId> heads;
  for (const auto& t : tree.tokens())
    if (detail::is_subject_label(t.deprel)) heads.push_back(t.id);
  return heads;
}

// Every node on the path from the head must be COMPOUND-linked or a NOUN/PROPN.
inline Chunk expand_subject_chunk(const DepTree& tree, WordId head) {
  tree.at(head);
  auto ids = detail::collect_connected(tree, head, [](const Token& t) {
    return t.deprel == dep::COMPOUND || t.upos == "NOUN" || t.upos == "PROPN";
  });
  return detail::make_chunk(tree, ChunkKind::Subject, std::move(ids), head);
}

inline WordId extract_predicate_head(const DepTree& tree, WordId subject_head) {
  const auto& t = tree.at(subject_head);
  return t.head == 0 ? subject_head : t.head;
}

// Predicate head plus its direct PRT, NEG, AUX and AUXPASS children.
// Prepositions of prepositional verbs stay out; they become object material.
inline PredicateChunk expand_predicate_chunk(const DepTree& tree, WordId pred_head) {
  PredicateChunk out;
  std::vector<WordId> ids{pred_head};
  for (const auto& child : children(tree, pred_head)) {
    if (child.deprel == dep::PRT || child.deprel == dep::AUX) {
      ids.push_back(child.id);
    } else if (child.deprel == dep::NEG) {
      ids.push_back(child.id);
      out.negated = true;
    } else if (child.deprel == dep::AUXPASS) {
      ids.push_back(child.id);
      out.passive = true;
    }
  }
  out.chunk = detail::make_chunk(tree, ChunkKind::Predicate, std::move(ids), pred_head);
  return out;
}

// Direct and indirect objects are DOBJ/DATIVE children (not ADP) of the
// predicate head, falling back to the object of an open clausal complement
// (XCOMP) for direct objects. Each prepositional child yields one chunk that
// merges the preposition with its object, whichever of the two the parser
// made the head.
inline ObjectSet extract_objects(const DepTree& tree, WordId pred_head) {
  ObjectSet out;
  const auto kids = children(tree, pred_head);

  const auto find_labeled = [&](const std::vector<Token>& pool, std::string_view label) -> std::optional<WordId> {
    for (const auto& t : pool)
      if (t.deprel == label && t.upos != "ADP") return t.id;
    return std::nullopt;
  };

  auto direct = find_labeled(kids, dep::DOBJ);
  if (!direct) {
    for (const auto& k : kids) {
      if (k.deprel != dep::XCOMP) continue;
      direct = find_labeled(children(tree, k.id), dep::DOBJ);
      if (direct) break;
    }
  }
  if (direct)
    out.direct = detail::make_chunk(tree, ChunkKind::DirectObject, detail::compound_expansion(tree, *direct), *direct);
  if (const auto indirect = find_labeled(kids, dep::DATIVE))
    out.indirect =
        detail::make_chunk(tree, ChunkKind::IndirectObject, detail::compound_expansion(tree, *indirect), *indirect);

  for (const auto& k : kids) {
    if (!detail::is_prep_head(k)) continue;
    auto ids = detail::compound_expansion(tree, k.id);
    for (const auto& g : children(tree, k.id)) {
      const bool object_of_prep = k.deprel != dep::POBJ && g.deprel == dep::POBJ;
      const bool case_marker = k.deprel == dep::POBJ && g.deprel == dep::PREP && g.upos == "ADP";
      if (object_of_prep || case_marker) {
        const auto more = detail::compound_expansion(tree, g.id);
        ids.insert(ids.end(), more.begin(), more.end());
      }
    }
    out.preps.push_back(detail::make_chunk(tree, ChunkKind::PrepObject, std::move(ids), k.id));
  }
  return out;
}

// One chunk per ATTR/OPRD/PCOMP/CCOMP/XCOMP child: that child's whole subtree.
inline std::vector<Chunk> extract_complements(const DepTree& tree, WordId pred_head) {
  std::vector<Chunk> out;
  for (const auto& k : children(tree, pred_head))
    if (detail::is_one_of(k.deprel, {dep::ATTR, dep::OPRD, dep::PCOMP, dep::CCOMP, dep::XCOMP}))
      out.push_back(detail::make_chunk(tree, ChunkKind::Complement, subtree_span(tree, k.id), k.id));
  return out;
}

inline std::vector<Chunk> extract_adverbials(const DepTree& tree, WordId pred_head) {
  std::vector<Chunk> out;
  for (const auto& k : children(tree, pred_head))
    if (detail::is_one_of(k.deprel, {dep::ADVCL, dep::ADVMOD, dep::NPADVMOD}))
      out.push_back(detail::make_chunk(tree, ChunkKind::Adverbial, subtree_span(tree, k.id), k.id));
  return out;
}

namespace detail {

// Widest entity span containing the subject head, if it stays clear of the predicate.
inline void rectify_subject(const DepTree& tree, const std::vector<EntitySpan>& spans, Chunk& subject,
                            const Chunk& predicate) {
  const EntitySpan* best = nullptr;
  for (const auto& s : spans) {
    if (!s.contains(subject.head_id)) continue;
    if (!best || (s.last - s.first) > (best->last - best->first)) best = &s;
  }
  if (!best) return;
  std::vector<WordId> ids;
  for (WordId id = best->first; id <= best->last; ++id) {
    if (std::binary_search(predicate.word_ids.begin(), predicate.word_ids.end(), id)) return;
    ids.push_back(id);
  }
  subject = make_chunk(tree, ChunkKind::Subject, std::move(ids), subject.head_id);
}

// Drops complement tokens already claimed by the object chunks.
inline void remove_object_tokens(const DepTree& tree, std::vector<Chunk>& complements, const ObjectSet& objects) {
  std::set<WordId> taken;
  if (objects.direct) taken.insert(objects.direct->word_ids.begin(), objects.direct->word_ids.end());
  if (objects.indirect) taken.insert(objects.indirect->word_ids.begin(), objects.indirect->word_ids.end());
  if (taken.empty()) return;
  std::vector<Chunk> kept;
  for (auto& c : complements) {
    std::vector<WordId> ids;
    for (const WordId id : c.word_ids)
      if (!taken.count(id)) ids.push_back(id);
    if (ids.empty()) continue;
    if (ids.size() == c.word_ids.size()) {
      kept.push_back(std::move(c));
      continue;
    }
    const WordId head = taken.count(c.head_id) ? ids.front() : c.head_id;
    kept.push_back(make_chunk(tree, ChunkKind::Complement, std::move(ids), head));
  }
  complements = std::move(kept);
}

}  // namespace detail

// One frame per subject head, in subject surface order.
inline std::vector<ClauseFrame> extract_frames(const DepTree& tree, const NerRectifier& rectifier = {}) {
  std::vector<ClauseFrame> frames;
  const auto subject_heads = extract_subject_heads(tree);
  const bool verbless = !tree.has_upos("VERB") && !tree.has_upos("AUX");
  const auto entity_spans = rectifier ? rectifier(tree) : std::vector<EntitySpan>{};

  for (const WordId s : subject_heads) {
    ClauseFrame f;
    f.subject = expand_subject_chunk(tree, s);
    const WordId pred = extract_predicate_head(tree, s);
    if (verbless) {
      f.predicate = f.subject;
      f.predicate.kind = ChunkKind::Predicate;
      f.synthetic_predicate = true;
    } else {
      auto p = expand_predicate_chunk(tree, pred);
      f.predicate = std::move(p.chunk);
      f.negated = p.negated;
      f.passive = p.passive;
    }
    if (!entity_spans.empty() && !verbless) detail::rectify_subject(tree, entity_spans, f.subject, f.predicate);

    auto objects = extract_objects(tree, pred);
    f.complements = extract_complements(tree, pred);
    detail::remove_object_tokens(tree, f.complements, objects);
    f.direct_object = std::move(objects.direct);
    f.indirect_object = std::move(objects.indirect);
    f.prep_objects = std::move(objects.preps);
    f.adverbials = extract_adverbials(tree, pred);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace newsie
