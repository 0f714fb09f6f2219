#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "newsie/clauses.hpp"
#include "newsie/depmodel.hpp"
#include "newsie/extractor.hpp"
#include "newsie/kb.hpp"

namespace newsie {

// Frames of every sentence in `doc`, classified, in sentence then subject order.
inline std::vector<TypedFrame> analyze_document(const Document& doc, const VerbLexicon& lex,
                                                const NerRectifier& rectifier = {}) {
  std::vector<TypedFrame> out;
  for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
    for (auto& f : extract_frames(doc.sentences[s], rectifier)) {
      f.sentence = s;
      const auto type = classify(f, lex);
      out.push_back({std::move(f), type});
    }
  }
  return out;
}

inline KnowledgeBase build_kb(const Document& doc, const VerbLexicon& lex, const NerRectifier& rectifier = {}) {
  const auto frames = analyze_document(doc, lex, rectifier);
  return aggregate(frames, doc.doc_id, doc.label);
}

// One JSON-lines record of the frame dump.
inline nlohmann::ordered_json frame_to_json(const std::string& doc_id, const TypedFrame& tf) {
  const auto& f = tf.frame;
  const auto texts = [](const std::vector<Chunk>& cs) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& c : cs) a.push_back(c.text);
    return a;
  };
  const auto ids = [](const std::vector<Chunk>& cs) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& c : cs) a.push_back(c.word_ids);
    return a;
  };
  const auto opt_text = [](const std::optional<Chunk>& c) {
    return c ? nlohmann::ordered_json(c->text) : nlohmann::ordered_json(nullptr);
  };
  const auto opt_ids = [](const std::optional<Chunk>& c) {
    return c ? nlohmann::ordered_json(c->word_ids) : nlohmann::ordered_json(nullptr);
  };

  nlohmann::ordered_json j;
  j["doc"] = doc_id;
  j["sent"] = f.sentence;
  j["S"] = f.subject.text;
  j["V"] = f.predicate.text;
  j["Od"] = opt_text(f.direct_object);
  j["Oi"] = opt_text(f.indirect_object);
  j["Op"] = texts(f.prep_objects);
  j["C"] = texts(f.complements);
  j["A"] = texts(f.adverbials);
  j["neg"] = f.negated;
  j["passive"] = f.passive;
  nlohmann::ordered_json spans;
  spans["S"] = f.subject.word_ids;
  spans["V"] = f.predicate.word_ids;
  spans["Od"] = opt_ids(f.direct_object);
  spans["Oi"] = opt_ids(f.indirect_object);
  spans["Op"] = ids(f.prep_objects);
  spans["C"] = ids(f.complements);
  spans["A"] = ids(f.adverbials);
  j["spans"] = std::move(spans);
  j["type"] = clause_type_name(tf.type);
  return j;
}

}  // namespace newsie
