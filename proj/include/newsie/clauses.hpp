#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "newsie/error.hpp"
#include "newsie/extractor.hpp"
#include "newsie/text.hpp"

namespace newsie {

enum class ClauseType { SV, SVO, SVC, SVA, SVOC, SVOA, SVOO };

inline constexpr std::array<ClauseType, 7> kAllClauseTypes{ClauseType::SV,   ClauseType::SVO,  ClauseType::SVC,
                                                            ClauseType::SVA,  ClauseType::SVOC, ClauseType::SVOA,
                                                            ClauseType::SVOO};

inline std::string_view clause_type_name(ClauseType t) {
  switch (t) {
    case ClauseType::SV: return "SV";
    case ClauseType::SVO: return "SVO";
    case ClauseType::SVC: return "SVC";
    case ClauseType::SVA: return "SVA";
    case ClauseType::SVOC: return "SVOC";
    case ClauseType::SVOA: return "SVOA";
    case ClauseType::SVOO: return "SVOO";
  }
  return "?";
}

inline std::optional<ClauseType> parse_clause_type(std::string_view name) {
  for (const auto t : kAllClauseTypes)
    if (clause_type_name(t) == name) return t;
  return std::nullopt;
}

// Lemmas of verbs that link a subject to a complement or adverbial.
class VerbLexicon {
 public:
  VerbLexicon() = default;
  VerbLexicon(std::set<std::string> lemmas, std::string source) : source_(std::move(source)) {
    for (const auto& l : lemmas) {
      auto low = text::to_lower(text::trim(l));
      if (!low.empty()) lemmas_.insert(std::move(low));
    }
  }

  static VerbLexicon builtin() {
    return VerbLexicon({"be", "seem", "become", "appear", "feel", "look", "sound", "taste", "smell", "remain",
                        "stay", "grow", "turn", "prove", "get", "keep"},
                       "builtin");
  }

  // One lemma per line; '#' starts a comment.
  static VerbLexicon parse(std::string_view content, std::string source) {
    std::set<std::string> lemmas;
    for (auto line : text::split(content, '\n')) {
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = text::trim(line);
      if (!line.empty()) lemmas.emplace(line);
    }
    return VerbLexicon(std::move(lemmas), std::move(source));
  }

  static VerbLexicon load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::InvalidFormat, "cannot open linking lexicon '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  bool contains(std::string_view lemma) const { return lemmas_.count(text::to_lower(lemma)) > 0; }
  const std::set<std::string>& lemmas() const { return lemmas_; }
  const std::string& source() const { return source_; }

 private:
  std::set<std::string> lemmas_;
  std::string source_ = "builtin";
};

inline bool is_linking(const VerbLexicon& lex, const Chunk& predicate) {
  return lex.contains(predicate.head_lemma);
}

// Which optional chunk categories a frame carries; all that classify() reads.
struct ClauseShape {
  bool direct_object = false;
  bool indirect_object = false;
  bool prep_or_adverbial = false;
  bool complement = false;
  bool linking = false;
};

// Decision sequence, most complex pattern first.
inline ClauseType classify(const ClauseShape& s) {
  if (s.complement) return s.direct_object && !s.indirect_object ? ClauseType::SVOC : ClauseType::SVC;
  if (s.direct_object && s.indirect_object) return ClauseType::SVOO;
  if (s.direct_object) return s.prep_or_adverbial && s.linking ? ClauseType::SVOA : ClauseType::SVO;
  if (!s.indirect_object && s.prep_or_adverbial && s.linking) return ClauseType::SVA;
  return ClauseType::SV;
}

inline ClauseShape clause_shape(const ClauseFrame& frame, const VerbLexicon& lex) {
  ClauseShape s;
  s.direct_object = frame.direct_object.has_value();
  s.indirect_object = frame.indirect_object.has_value();
  s.prep_or_adverbial = !frame.prep_objects.empty() || !frame.adverbials.empty();
  s.complement = !frame.complements.empty();
  s.linking = is_linking(lex, frame.predicate);
  return s;
}

inline ClauseType classify(const ClauseFrame& frame, const VerbLexicon& lex) {
  return classify(clause_shape(frame, lex));
}

}  // namespace newsie
