// newsie: dependency parses -> clause frames -> knowledge-base graphs ->
// pooled node features -> GCN training and evaluation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "newsie/newsie.hpp"

namespace fs = std::filesystem;
using namespace newsie;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct Config {
  std::string scheme = "spacy";
  std::string linking_lexicon;
  bool lenient = false;
  std::size_t hidden = 768;
  std::size_t layers = 4;
  double lr = 1e-5;
  std::size_t batch = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  std::string dummy = "zero";
  std::size_t jobs = 1;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::InvalidFormat, "cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write to a sibling temp file, then rename over the target.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::InvalidFormat, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw Error(Errc::InvalidFormat, "cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    std::cout.flush();
  } else {
    write_atomic(out_path, content);
  }
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The lowest-index failure
// is rethrown so diagnostics do not depend on scheduling.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TagScheme load_scheme(const std::string& spec) {
  if (spec == "spacy") return TagScheme::spacy();
  if (spec == "ud") return TagScheme::ud();
  try {
    return TagScheme::from_json(nlohmann::json::parse(read_text(spec)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFormat, "tag scheme '" + spec + "': " + e.what());
  }
}

VerbLexicon load_lexicon(const Config& cfg) {
  return cfg.linking_lexicon.empty() ? VerbLexicon::builtin() : VerbLexicon::load(cfg.linking_lexicon);
}

DummyPolicy dummy_policy(const Config& cfg) {
  if (cfg.dummy == "zero") return DummyPolicy::Zero;
  throw Error(Errc::InvalidFormat, "dummy policy '" + cfg.dummy + "' is reserved but not implemented");
}

std::vector<Document> load_documents(const std::string& path, const Config& cfg) {
  return parse_conllu(read_text(path), load_scheme(cfg.scheme), ParseOptions{cfg.lenient});
}

// Document ids become file names; anything outside [A-Za-z0-9._-] maps to '_'.
std::string file_stem(const std::string& doc_id) {
  std::string out = doc_id;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' && c != '-') c = '_';
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error(Errc::InvalidFormat, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---- extract / graph -------------------------------------------------------

int cmd_extract(const Config& cfg, const std::string& input, const std::string& out) {
  const auto docs = load_documents(input, cfg);
  const auto lex = load_lexicon(cfg);
  std::vector<std::string> chunks(docs.size());
  parallel_for(docs.size(), cfg.jobs, [&](std::size_t d) {
    for (const auto& tf : analyze_document(docs[d], lex, misc_ner_rectifier()))
      chunks[d] += frame_to_json(docs[d].doc_id, tf).dump() + "\n";
  });
  std::string all;
  for (const auto& c : chunks) all += c;
  emit(out, all);
  return kExitOk;
}

int cmd_graph(const Config& cfg, const std::string& input, const std::string& out_dir) {
  const auto docs = load_documents(input, cfg);
  const auto lex = load_lexicon(cfg);
  std::map<std::string, std::string> stems;
  for (const auto& d : docs) {
    const auto stem = file_stem(d.doc_id);
    if (const auto [it, fresh] = stems.emplace(stem, d.doc_id); !fresh)
      throw Error(Errc::InvalidFormat, "documents '" + it->second + "' and '" + d.doc_id + "' map to the same file");
  }
  parallel_for(docs.size(), cfg.jobs, [&](std::size_t d) {
    const auto kb = build_kb(docs[d], lex, misc_ner_rectifier());
    write_atomic(fs::path(out_dir) / (file_stem(docs[d].doc_id) + ".json"), serialize(kb));
  });
  return kExitOk;
}

// ---- pool --------------------------------------------------------------------

int cmd_pool(const Config& cfg, const std::string& kb_path, const std::string& emb_path,
             const std::string& offsets_path, const std::string& out) {
  const auto kb = parse_kb(read_text(kb_path));
  EmbeddingTable emb{parse_embedding_matrix(read_text(emb_path)), parse_offsets(read_text(offsets_path))};
  emit(out, write_embedding_matrix(pool_nodes(kb, emb, dummy_policy(cfg))));
  return kExitOk;
}

// ---- train / eval ------------------------------------------------------------

struct LabeledGraph {
  std::string doc_id;
  std::optional<std::string> label;
  GraphSample sample;
};

// Pairs <graphs>/<stem>.json with <features>/<stem>.emb.
std::vector<LabeledGraph> load_graphs(const std::string& graphs_dir, const std::string& features_dir,
                                      std::size_t jobs) {
  const auto files = list_files(graphs_dir, ".json");
  if (files.empty()) throw Error(Errc::EmptyBatch, "no graph files in '" + graphs_dir + "'");
  std::vector<LabeledGraph> out(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    const auto kb = parse_kb(read_text(files[i]));
    const auto feat_path = fs::path(features_dir) / (files[i].stem().string() + ".emb");
    if (!fs::exists(feat_path))
      throw Error(Errc::MissingOffset, "no features file '" + feat_path.string() + "' for graph " + kb.doc_id);
    try {
      out[i] = {kb.doc_id, kb.label, make_sample(kb, parse_embedding_matrix(read_text(feat_path)))};
    } catch (const Error& e) {
      throw Error(e.code(), feat_path.string() + ": " + e.what());
    }
  });
  return out;
}

void assign_labels(std::vector<LabeledGraph>& graphs, const std::vector<std::string>& classes) {
  for (auto& g : graphs) {
    if (!g.label) throw Error(Errc::MissingLabels, "graph '" + g.doc_id + "' has no label");
    const auto it = std::find(classes.begin(), classes.end(), *g.label);
    if (it == classes.end())
      throw Error(Errc::MissingLabels, "graph '" + g.doc_id + "' has unknown label '" + *g.label + "'");
    g.sample.label = static_cast<int>(it - classes.begin());
  }
}

int cmd_train(const Config& cfg, const std::string& graphs_dir, const std::string& features_dir,
              const std::string& out, const std::string& log_path) {
  dummy_policy(cfg);
  if (cfg.hidden == 0 || cfg.layers == 0 || cfg.batch == 0 || cfg.epochs == 0)
    throw Error(Errc::InvalidFormat, "hidden, layers, batch and epochs must be positive");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error(Errc::InvalidFormat, "lr must be finite and >= 0");
  auto graphs = load_graphs(graphs_dir, features_dir, cfg.jobs);
  std::vector<std::string> classes;
  for (const auto& g : graphs) {
    if (!g.label) throw Error(Errc::MissingLabels, "graph '" + g.doc_id + "' has no label");
    classes.push_back(*g.label);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  assign_labels(graphs, classes);

  std::vector<GraphSample> samples;
  for (auto& g : graphs) samples.push_back(std::move(g.sample));
  const gcn::GcnConfig gc{samples.front().features.cols(), cfg.hidden, cfg.layers, std::max<std::size_t>(classes.size(), 2)};
  auto model = gcn::init_model(gc, cfg.seed);
  auto adam = gcn::AdamState::for_model(model, cfg.lr);
  const auto log = gcn::train(model, samples, {cfg.epochs, cfg.batch, cfg.seed}, adam);

  write_atomic(out, gcn::save_checkpoint({model, adam, classes}));
  const auto csv = gcn::format_log_csv(log);
  if (!log_path.empty()) write_atomic(log_path, csv);
  else std::cout << csv;
  return kExitOk;
}

nlohmann::ordered_json metrics_json(const gcn::Metrics& m, const std::vector<std::string>& classes, std::size_t n) {
  nlohmann::ordered_json j;
  j["examples"] = n;
  j["accuracy"] = m.accuracy;
  j["precision_macro"] = m.precision_macro;
  j["recall_macro"] = m.recall_macro;
  j["f1_macro"] = m.f1_macro;
  auto per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    nlohmann::ordered_json c;
    c["class"] = classes.at(static_cast<std::size_t>(m.classes[i]));
    c["precision"] = m.precision[i];
    c["recall"] = m.recall[i];
    c["f1"] = m.f1[i];
    per.push_back(std::move(c));
  }
  j["per_class"] = std::move(per);
  return j;
}

int cmd_eval(const Config& cfg, const std::string& checkpoint, const std::string& graphs_dir,
             const std::string& features_dir, const std::string& out) {
  const auto ck = gcn::load_checkpoint(read_text(checkpoint));
  auto graphs = load_graphs(graphs_dir, features_dir, cfg.jobs);
  assign_labels(graphs, ck.classes);
  std::vector<GraphSample> samples;
  for (auto& g : graphs) samples.push_back(std::move(g.sample));
  const auto batches = gcn::make_batches(samples, cfg.batch);
  const auto m = gcn::evaluate(ck.model, batches);
  emit(out, metrics_json(m, ck.classes, samples.size()).dump(2) + "\n");
  return kExitOk;
}

// ---- stats -------------------------------------------------------------------

int cmd_stats(const std::string& dir, const std::string& out) {
  const auto files = list_files(dir, ".json");
  if (files.empty()) throw Error(Errc::EmptyDocument, "no knowledge-base files in '" + dir + "'");
  std::size_t nodes = 0, edges = 0;
  std::map<ClauseType, std::size_t> hist;
  for (const auto& f : files) {
    const auto kb = parse_kb(read_text(f));
    nodes += kb.nodes.size();
    edges += kb.edges.size();
    for (const auto& c : kb.clauses) ++hist[c.type];
  }
  nlohmann::ordered_json j;
  j["documents"] = files.size();
  j["nodes"] = nodes;
  j["edges"] = edges;
  nlohmann::ordered_json h = nlohmann::ordered_json::object();
  for (const auto t : kAllClauseTypes)
    if (hist.count(t)) h[std::string(clause_type_name(t))] = hist[t];
  j["clause_types"] = std::move(h);
  emit(out, j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clause-based knowledge graphs and GCN classification for news text", "newsie"};
  app.set_config("--config", "", "TOML/INI file with option defaults (flags take precedence)");
  app.require_subcommand(1);

  Config cfg;
  app.add_option("--scheme", cfg.scheme, "Tag scheme: spacy, ud, or a scheme JSON path")->capture_default_str();
  app.add_flag("--lenient", cfg.lenient, "Map unknown dependency labels to OTHER instead of failing");
  app.add_option("--linking-lexicon", cfg.linking_lexicon, "Linking-verb lemma file (default: built-in list)");
  app.add_option("--jobs", cfg.jobs, "Worker threads for per-document work")->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string input, out, out_dir, kb_path, emb_path, offsets_path, graphs_dir, features_dir, log_path, checkpoint;
  bool frames = true;

  auto* extract = app.add_subcommand("extract", "Dump clause frames as JSON lines");
  extract->add_option("input", input, "CoNLL-U file")->required();
  extract->add_flag("--frames", frames, "Emit the frame dump (the default and only format)");
  extract->add_option("--out", out, "Output file (default: stdout)");

  auto* graph = app.add_subcommand("graph", "Write one knowledge-base JSON per document");
  graph->add_option("input", input, "CoNLL-U file")->required();
  graph->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* pool = app.add_subcommand("pool", "Pool token embeddings into node features");
  pool->add_option("--kb", kb_path, "Knowledge-base JSON")->required();
  pool->add_option("--emb", emb_path, "Token embedding file (EMB format)")->required();
  pool->add_option("--offsets", offsets_path, "Word-to-subword offsets JSON")->required();
  pool->add_option("--out", out, "Output features file (default: stdout)");
  pool->add_option("--dummy", cfg.dummy, "DUMMY node features")->capture_default_str();

  const auto add_model_options = [&](CLI::App* sub) {
    sub->add_option("--graphs", graphs_dir, "Directory of knowledge-base JSON files")->required();
    sub->add_option("--features", features_dir, "Directory of <stem>.emb node-feature files")->required();
    sub->add_option("--batch", cfg.batch, "Graphs per batch")->check(CLI::PositiveNumber)->capture_default_str();
  };
  auto* train = app.add_subcommand("train", "Train a GCN classifier");
  add_model_options(train);
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Per-epoch CSV log (default: stdout)");
  train->add_option("--hidden", cfg.hidden, "Hidden dimension")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--layers", cfg.layers, "Graph convolution layers")->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", cfg.lr, "Adam learning rate (0 freezes the model)")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--seed", cfg.seed, "Seed for initialization and shuffling")->capture_default_str();
  train->add_option("--dummy", cfg.dummy, "DUMMY node features")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_model_options(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint from 'train'")->required();
  eval->add_option("--out", out, "Metrics JSON path (default: stdout)");

  auto* stats = app.add_subcommand("stats", "Summarize a directory of knowledge bases");
  stats->add_option("dir", input, "Directory of knowledge-base JSON files")->required();
  stats->add_option("--out", out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*extract) return cmd_extract(cfg, input, out);
    if (*graph) return cmd_graph(cfg, input, out_dir);
    if (*pool) return cmd_pool(cfg, kb_path, emb_path, offsets_path, out);
    if (*train) return cmd_train(cfg, graphs_dir, features_dir, out, log_path);
    if (*eval) return cmd_eval(cfg, checkpoint, graphs_dir, features_dir, out);
    if (*stats) return cmd_stats(input, out);
  } catch (const Error& e) {
    std::cerr << "newsie: " << e.what() << "\n";
    return e.code() == Errc::NumericFailure ? kExitNumeric : kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "newsie: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
