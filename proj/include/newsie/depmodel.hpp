#pragma once

// Dependency trees read from CoNLL-U, label canonicalization through a
// TagScheme, and the traversal primitives shared by the extraction rules.

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "newsie/error.hpp"
#include "newsie/text.hpp"

namespace newsie {

using WordId = int;

// Canonical dependency labels the rule engine understands.
namespace dep {
inline constexpr std::string_view NSUBJ = "NSUBJ";
inline constexpr std::string_view CSUBJ = "CSUBJ";
inline constexpr std::string_view NSUBJPASS = "NSUBJPASS";
inline constexpr std::string_view CSUBJPASS = "CSUBJPASS";
inline constexpr std::string_view COMPOUND = "COMPOUND";
inline constexpr std::string_view PRT = "PRT";
inline constexpr std::string_view NEG = "NEG";
inline constexpr std::string_view AUX = "AUX";
inline constexpr std::string_view AUXPASS = "AUXPASS";
inline constexpr std::string_view DOBJ = "DOBJ";
inline constexpr std::string_view DATIVE = "DATIVE";
inline constexpr std::string_view POBJ = "POBJ";
inline constexpr std::string_view PREP = "PREP";
inline constexpr std::string_view AGENT = "AGENT";
inline constexpr std::string_view ATTR = "ATTR";
inline constexpr std::string_view OPRD = "OPRD";
inline constexpr std::string_view PCOMP = "PCOMP";
inline constexpr std::string_view CCOMP = "CCOMP";
inline constexpr std::string_view XCOMP = "XCOMP";
inline constexpr std::string_view ADVCL = "ADVCL";
inline constexpr std::string_view ADVMOD = "ADVMOD";
inline constexpr std::string_view NPADVMOD = "NPADVMOD";
inline constexpr std::string_view ROOT = "ROOT";
// Lenient-mode placeholder; matches no rule.
inline constexpr std::string_view OTHER = "OTHER";
}  // namespace dep

struct Token {
  WordId id = 0;
  std::string form;
  std::string lemma;
  std::string upos;
  std::string deprel;
  WordId head = 0;

  bool operator==(const Token&) const = default;
};

// Named-entity span over word ids [first, last], inclusive.
struct EntitySpan {
  std::string label;
  WordId first = 0;
  WordId last = 0;

  bool contains(WordId id) const { return first <= id && id <= last; }
  auto operator<=>(const EntitySpan&) const = default;
};

class DepTree {
 public:
  DepTree() = default;

  // Validates the tree invariants; `line` is used in diagnostics only.
  explicit DepTree(std::vector<Token> tokens, std::string text = {},
                   std::vector<EntitySpan> entities = {}, std::size_t line = 0)
      : tokens_(std::move(tokens)), text_(std::move(text)), entities_(std::move(entities)) {
    validate(line);
    std::sort(entities_.begin(), entities_.end());
    entities_.erase(std::unique(entities_.begin(), entities_.end()), entities_.end());
  }

  const std::vector<Token>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  WordId root_id() const { return root_id_; }
  const std::vector<EntitySpan>& entities() const { return entities_; }

  // Surface text: the `# text` comment when present, otherwise forms joined by spaces.
  std::string text() const {
    if (!text_.empty()) return text_;
    std::string out;
    for (const auto& t : tokens_) {
      if (!out.empty()) out.push_back(' ');
      out += t.form;
    }
    return out;
  }
  const std::string& raw_text() const { return text_; }

  bool valid(WordId id) const { return id >= 1 && id <= static_cast<WordId>(tokens_.size()); }

  const Token& at(WordId id) const {
    if (!valid(id)) throw Error(Errc::InvalidId, "word id " + std::to_string(id) + " not in tree");
    return tokens_[static_cast<std::size_t>(id - 1)];
  }

  bool has_upos(std::string_view upos) const {
    return std::any_of(tokens_.begin(), tokens_.end(), [&](const Token& t) { return t.upos == upos; });
  }

  bool operator==(const DepTree&) const = default;

 private:
  void validate(std::size_t line) {
    const auto n = static_cast<WordId>(tokens_.size());
    if (n == 0) throw Error(Errc::MalformedLine, "sentence has no tokens", line);
    root_id_ = 0;
    for (WordId i = 0; i < n; ++i) {
      const auto& t = tokens_[static_cast<std::size_t>(i)];
      if (t.id != i + 1)
        throw Error(Errc::MalformedLine, "word ids must be contiguous from 1, found " + std::to_string(t.id), line);
      if (t.head == t.id)
        throw Error(Errc::CycleDetected, "token " + std::to_string(t.id) + " is its own head", line);
      if (t.head < 0 || t.head > n)
        throw Error(Errc::MalformedLine, "head " + std::to_string(t.head) + " out of range", line);
      if (t.upos.empty() || t.deprel.empty())
        throw Error(Errc::MalformedLine, "empty POS or dependency label on token " + std::to_string(t.id), line);
      if (t.head == 0) {
        if (root_id_ != 0)
          throw Error(Errc::MultipleRoots,
                      "tokens " + std::to_string(root_id_) + " and " + std::to_string(t.id) + " both have head 0", line);
        root_id_ = t.id;
      }
    }
    // With one root and in-range heads, any token that cannot reach the root lies on a cycle.
    for (const auto& t : tokens_) {
      WordId cur = t.id;
      for (WordId steps = 0; cur != 0; ++steps) {
        if (steps > n)
          throw Error(Errc::CycleDetected, "token " + std::to_string(t.id) + " does not reach the root", line);
        cur = tokens_[static_cast<std::size_t>(cur - 1)].head;
      }
    }
    for (const auto& e : entities_) {
      if (!valid(e.first) || !valid(e.last) || e.first > e.last)
        throw Error(Errc::MalformedLine, "entity span " + std::to_string(e.first) + "-" + std::to_string(e.last) +
                                             " out of range", line);
    }
  }

  std::vector<Token> tokens_;
  std::string text_;
  std::vector<EntitySpan> entities_;
  WordId root_id_ = 0;
};

struct Document {
  std::string doc_id;
  std::vector<DepTree> sentences;
  std::optional<std::string> label;

  bool operator==(const Document&) const = default;
};

// All tokens whose head is `id`, in surface order.
inline std::vector<Token> children(const DepTree& tree, WordId id) {
  tree.at(id);
  std::vector<Token> out;
  for (const auto& t : tree.tokens())
    if (t.head == id) out.push_back(t);
  return out;
}

// `id` plus all its descendants, ascending.
inline std::vector<WordId> subtree_span(const DepTree& tree, WordId id) {
  tree.at(id);
  std::vector<WordId> out{id};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (const auto& t : tree.tokens())
      if (t.head == out[i]) out.push_back(t.id);
  std::sort(out.begin(), out.end());
  return out;
}

// Maps a parser's label inventory onto the canonical one. Lookup is
// case-insensitive; results are uppercased.
class TagScheme {
 public:
  TagScheme() = default;
  TagScheme(std::map<std::string, std::string> deprel_map, std::map<std::string, std::string> pos_map) {
    for (auto& [k, v] : deprel_map) deprel_map_[text::to_lower(k)] = text::to_upper(v);
    for (auto& [k, v] : pos_map) pos_map_[text::to_lower(k)] = text::to_upper(v);
  }

  std::optional<std::string> deprel(std::string_view label) const { return lookup(deprel_map_, label); }
  std::optional<std::string> pos(std::string_view tag) const { return lookup(pos_map_, tag); }

  const std::map<std::string, std::string>& deprel_map() const { return deprel_map_; }
  const std::map<std::string, std::string>& pos_map() const { return pos_map_; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["deprel_map"] = deprel_map_;
    j["pos_map"] = pos_map_;
    return j;
  }

  static TagScheme from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("deprel_map") || !j.contains("pos_map"))
      throw Error(Errc::InvalidFormat, "tag scheme needs \"deprel_map\" and \"pos_map\" objects");
    return TagScheme(j.at("deprel_map").get<std::map<std::string, std::string>>(),
                     j.at("pos_map").get<std::map<std::string, std::string>>());
  }

  // Labels as produced by spaCy's English models (ClearNLP inventory).
  static TagScheme spacy() {
    std::map<std::string, std::string> deprels;
    for (std::string_view l :
         {"acl", "acomp", "advcl", "advmod", "agent", "amod", "appos", "attr", "aux", "auxpass", "case", "cc",
          "ccomp", "compound", "conj", "csubj", "csubjpass", "dative", "dep", "det", "dobj", "expl", "intj",
          "mark", "meta", "neg", "nmod", "npadvmod", "nsubj", "nsubjpass", "nummod", "oprd", "parataxis",
          "pcomp", "pobj", "poss", "preconj", "predet", "prep", "prt", "punct", "quantmod", "relcl", "root",
          "xcomp"})
      deprels.emplace(l, text::to_upper(l));
    return TagScheme(std::move(deprels), universal_pos());
  }

  // Plain Universal Dependencies labels.
  static TagScheme ud() {
    std::map<std::string, std::string> deprels{
        {"nsubj", "NSUBJ"},         {"nsubj:pass", "NSUBJPASS"}, {"csubj", "CSUBJ"},
        {"csubj:pass", "CSUBJPASS"}, {"obj", "DOBJ"},             {"iobj", "DATIVE"},
        {"obl", "POBJ"},             {"obl:agent", "AGENT"},      {"obl:npmod", "NPADVMOD"},
        {"obl:tmod", "NPADVMOD"},    {"case", "PREP"},            {"compound", "COMPOUND"},
        {"compound:prt", "PRT"},     {"flat", "COMPOUND"},        {"flat:name", "COMPOUND"},
        {"aux", "AUX"},              {"aux:pass", "AUXPASS"},     {"cop", "AUX"},
        {"advcl", "ADVCL"},          {"advmod", "ADVMOD"},        {"ccomp", "CCOMP"},
        {"xcomp", "XCOMP"},          {"root", "ROOT"},            {"det", "DET"},
        {"det:predet", "PREDET"},    {"amod", "AMOD"},            {"nmod", "NMOD"},
        {"nmod:poss", "POSS"},       {"nmod:tmod", "NMOD"},       {"nummod", "NUMMOD"},
        {"punct", "PUNCT"},          {"cc", "CC"},                {"cc:preconj", "PRECONJ"},
        {"conj", "CONJ"},            {"mark", "MARK"},            {"acl", "ACL"},
        {"acl:relcl", "RELCL"},      {"appos", "APPOS"},          {"expl", "EXPL"},
        {"discourse", "INTJ"},       {"parataxis", "PARATAXIS"},  {"dep", "DEP"},
        {"fixed", "FIXED"},          {"vocative", "INTJ"},        {"iobj:agent", "AGENT"},
    };
    return TagScheme(std::move(deprels), universal_pos());
  }

 private:
  static std::map<std::string, std::string> universal_pos() {
    std::map<std::string, std::string> pos;
    for (std::string_view p : {"ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON",
                               "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X", "SPACE"})
      pos.emplace(text::to_lower(p), std::string(p));
    pos.emplace("conj", "CCONJ");
    return pos;
  }

  static std::optional<std::string> lookup(const std::map<std::string, std::string>& m, std::string_view key) {
    const auto it = m.find(text::to_lower(key));
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  std::map<std::string, std::string> deprel_map_;
  std::map<std::string, std::string> pos_map_;
};

struct ParseOptions {
  bool lenient = false;
};

namespace detail {

inline std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

// MISC items of the form NER=<label>:<first>-<last> or NER=<label>:<id>.
inline void parse_misc_entities(std::string_view misc, std::vector<EntitySpan>& out, std::size_t line) {
  if (misc == "_") return;
  for (auto item : text::split(misc, '|')) {
    if (!item.starts_with("NER=")) continue;
    item.remove_prefix(4);
    const auto colon = item.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
      throw Error(Errc::MalformedLine, "NER annotation needs <label>:<span>", line);
    EntitySpan span;
    span.label = std::string(item.substr(0, colon));
    const auto range = item.substr(colon + 1);
    const auto dash = range.find('-');
    const auto first = parse_int(range.substr(0, dash));
    const auto last = dash == std::string_view::npos ? first : parse_int(range.substr(dash + 1));
    if (!first || !last) throw Error(Errc::MalformedLine, "bad NER span '" + std::string(range) + "'", line);
    span.first = *first;
    span.last = *last;
    out.push_back(std::move(span));
  }
}

class ConlluReader {
 public:
  ConlluReader(const TagScheme& scheme, ParseOptions opts) : scheme_(scheme), opts_(opts) {}

  std::vector<Document> read(std::string_view input) {
    if (input.starts_with("\xEF\xBB\xBF")) input.remove_prefix(3);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= input.size()) {
      auto nl = input.find('\n', pos);
      if (nl == std::string_view::npos) nl = input.size();
      auto line = input.substr(pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (nl == input.size() && line.empty()) break;
      handle_line(line, line_no);
    }
    flush_sentence();
    open_pending_document();
    return std::move(docs_);
  }

 private:
  void handle_line(std::string_view line, std::size_t line_no) {
    if (text::trim(line).empty()) {
      flush_sentence();
      return;
    }
    if (line.front() == '#') {
      handle_comment(line.substr(1), line_no);
      return;
    }
    if (tokens_.empty()) sentence_line_ = line_no;
    const auto cols = text::split(line, '\t');
    if (cols.size() != 10)
      throw Error(Errc::MalformedLine, "expected 10 tab-separated columns, found " + std::to_string(cols.size()),
                  line_no);
    // Multiword-token ranges and empty nodes carry no tree structure.
    if (cols[0].find_first_of("-.") != std::string_view::npos) return;
    const auto id = parse_int(cols[0]);
    const auto head = parse_int(cols[6]);
    if (!id || *id < 1) throw Error(Errc::MalformedLine, "bad word id '" + std::string(cols[0]) + "'", line_no);
    if (!head || *head < 0) throw Error(Errc::MalformedLine, "bad head '" + std::string(cols[6]) + "'", line_no);
    if (*head == *id) throw Error(Errc::CycleDetected, "token " + std::to_string(*id) + " is its own head", line_no);

    Token tok;
    tok.id = *id;
    tok.form = std::string(cols[1]);
    tok.lemma = std::string(cols[2]);
    tok.upos = canonical(scheme_.pos(cols[3]), cols[3], "POS tag", line_no);
    tok.deprel = canonical(scheme_.deprel(cols[7]), cols[7], "dependency label", line_no);
    tok.head = *head;
    tokens_.push_back(std::move(tok));
    parse_misc_entities(cols[9], entities_, line_no);
  }

  std::string canonical(const std::optional<std::string>& mapped, std::string_view raw, std::string_view what,
                        std::size_t line_no) const {
    if (mapped) return *mapped;
    if (opts_.lenient) return std::string(dep::OTHER);
    throw Error(Errc::UnmappedLabel, std::string(what) + " '" + std::string(raw) + "' not in tag scheme", line_no);
  }

  void handle_comment(std::string_view body, std::size_t line_no) {
    body = text::trim(body);
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) return;
    const auto key = text::trim(body.substr(0, eq));
    const auto value = std::string(text::trim(body.substr(eq + 1)));
    if (key == "doc_id" || key == "newdoc id") {
      if (value.empty()) throw Error(Errc::MalformedLine, "empty doc_id", line_no);
      if (!seen_ids_.insert(value).second) throw Error(Errc::MalformedLine, "duplicate doc_id '" + value + "'", line_no);
      open_pending_document();
      pending_id_ = value;
    } else if (key == "label") {
      if (pending_id_ || !current_explicit_)
        pending_label_ = value;
      else
        docs_.back().label = value;
    } else if (key == "text") {
      text_ = value;
    }
  }

  // A doc_id with no sentences still yields a (sentence-less) document.
  void open_pending_document() {
    if (!pending_id_) return;
    docs_.push_back(Document{*pending_id_, {}, std::move(pending_label_)});
    current_explicit_ = true;
    pending_id_.reset();
    pending_label_.reset();
  }

  void flush_sentence() {
    if (tokens_.empty()) {
      text_.clear();
      entities_.clear();
      return;
    }
    DepTree tree(std::move(tokens_), std::move(text_), std::move(entities_), sentence_line_);
    tokens_.clear();
    text_.clear();
    entities_.clear();

    if (pending_id_) {
      open_pending_document();
    } else if (!current_explicit_) {
      // One synthetic document per sentence block without a doc_id.
      std::string id = "doc" + std::to_string(docs_.size() + 1);
      while (seen_ids_.count(id)) id += "_";
      seen_ids_.insert(id);
      docs_.push_back(Document{std::move(id), {}, std::nullopt});
    }
    if (pending_label_) {
      docs_.back().label = std::move(pending_label_);
      pending_label_.reset();
    }
    docs_.back().sentences.push_back(std::move(tree));
  }

  const TagScheme& scheme_;
  ParseOptions opts_;
  std::vector<Document> docs_;
  std::set<std::string> seen_ids_;
  std::optional<std::string> pending_id_;
  std::optional<std::string> pending_label_;
  bool current_explicit_ = false;
  std::vector<Token> tokens_;
  std::vector<EntitySpan> entities_;
  std::string text_;
  std::size_t sentence_line_ = 0;
};

}  // namespace detail

inline std::vector<Document> parse_conllu(std::string_view text, const TagScheme& scheme, ParseOptions opts = {}) {
  return detail::ConlluReader(scheme, opts).read(text);
}

// Writes canonical labels, so the output re-parses under TagScheme::spacy().
inline std::string serialize_conllu(const std::vector<Document>& docs) {
  std::ostringstream out;
  for (const auto& doc : docs) {
    bool first = true;
    for (const auto& tree : doc.sentences) {
      if (first) {
        out << "# doc_id = " << doc.doc_id << '\n';
        if (doc.label) out << "# label = " << *doc.label << '\n';
        first = false;
      }
      if (!tree.raw_text().empty()) out << "# text = " << tree.raw_text() << '\n';
      for (const auto& t : tree.tokens()) {
        std::string misc;
        for (const auto& e : tree.entities()) {
          if (e.first != t.id) continue;
          if (!misc.empty()) misc += '|';
          misc += "NER=" + e.label + ":" + std::to_string(e.first) + "-" + std::to_string(e.last);
        }
        out << t.id << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << "\t_\t_\t" << t.head << '\t'
            << text::to_lower(t.deprel) << "\t_\t" << (misc.empty() ? "_" : misc) << '\n';
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace newsie
