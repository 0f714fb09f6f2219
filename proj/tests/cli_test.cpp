#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "newsie/newsie.hpp"
#include "support/synthetic.hpp"
#include "support/trees.hpp"

namespace fs = std::filesystem;
using namespace newsie;
using newsie::ntest::read_file;
using newsie::ntest::source_path;

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("newsie_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path write(const std::string& name, const std::string& content) const {
    const auto p = path(name);
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

  Result run(const std::string& args) const {
    const auto err_file = path("stderr.txt");
    const std::string cmd = std::string(NEWSIE_CLI_PATH) + " " + args + " 2>" + err_file.string();
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read_file(err_file.string());
    return r;
  }

  fs::path dir_;
};

std::string corpus() { return source_path("data/corpus/oracle.conllu"); }

// Writes n labeled single-sentence graphs plus feature files drawn from the
// star/chain generator.
void write_dataset(const fs::path& graphs, const fs::path& features, std::size_t n, std::uint64_t seed) {
  ntest::SyntheticSpec spec;
  spec.graphs = n;
  spec.dim = 4;
  spec.seed = seed;
  const auto samples = ntest::star_chain_dataset(spec);
  fs::create_directories(graphs);
  fs::create_directories(features);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    KnowledgeBase kb;
    kb.doc_id = "g" + std::to_string(1000 + i);
    kb.label = s.label == 0 ? "star" : "chain";
    for (std::size_t k = 0; k < s.features.rows(); ++k)
      kb.nodes.push_back({static_cast<int>(k), "n" + std::to_string(k), NodeKind::Entity,
                          {{0, {static_cast<WordId>(k + 1)}}}});
    for (std::size_t e = 0; e < s.edges.size(); e += 2)
      kb.edges.push_back({s.edges[e].first, s.edges[e].second, EdgeLabel::Pred});
    std::ofstream(graphs / (kb.doc_id + ".json"), std::ios::binary) << serialize(kb);
    std::ofstream(features / (kb.doc_id + ".emb"), std::ios::binary) << write_embedding_matrix(s.features);
  }
}

}  // namespace

TEST_F(Cli, ExtractMatchesGolden) {
  const auto r = run("extract " + corpus());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out, read_file(source_path("tests/fixtures/golden/oracle_frames.jsonl")));
}

TEST_F(Cli, ExtractToFileAndInParallel) {
  ASSERT_EQ(run("extract --frames " + corpus() + " --out " + path("a.jsonl").string()).exit_code, 0);
  ASSERT_EQ(run("--jobs 4 extract " + corpus() + " --out " + path("b.jsonl").string()).exit_code, 0);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(source_path("tests/fixtures/golden/oracle_frames.jsonl")));
}

TEST_F(Cli, ExtractEmptyFile) {
  const auto r = run("extract " + write("empty.conllu", "").string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "");
}

TEST_F(Cli, ExtractMalformedLineNamesLine) {
  const auto f = write("bad.conllu", "1\tA\ta\tNOUN\t_\t_\t2\tnsubj\t_\t_\n2\tbroken line\n");
  const auto r = run("extract " + f.string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, ExtractUnmappedLabelAndLenient) {
  const auto f = write("odd.conllu",
                       "1\tAlice\talice\tPROPN\t_\t_\t2\tnsubj\t_\t_\n"
                       "2\tsleeps\tsleep\tVERB\t_\t_\t0\tROOT\t_\t_\n"
                       "3\tzz\tzz\tX\t_\t_\t2\twibble\t_\t_\n");
  const auto strict = run("extract " + f.string());
  EXPECT_EQ(strict.exit_code, 2);
  EXPECT_NE(strict.err.find("line 3"), std::string::npos) << strict.err;
  const auto lenient = run("--lenient extract " + f.string());
  EXPECT_EQ(lenient.exit_code, 0) << lenient.err;
  EXPECT_NE(lenient.out.find("\"S\":\"Alice\""), std::string::npos);
}

TEST_F(Cli, ExtractUdScheme) {
  const auto f = write("ud.conllu",
                       "1\tShe\tshe\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
                       "2\tread\tread\tVERB\t_\t_\t0\troot\t_\t_\n"
                       "3\tbooks\tbook\tNOUN\t_\t_\t2\tobj\t_\t_\n");
  EXPECT_EQ(run("extract " + f.string()).exit_code, 2);
  const auto ud = run("--scheme ud extract " + f.string());
  ASSERT_EQ(ud.exit_code, 0) << ud.err;
  EXPECT_NE(ud.out.find("\"type\":\"SVO\""), std::string::npos) << ud.out;
  const auto by_path = run("--scheme " + source_path("data/schemes/ud.json") + " extract " + f.string());
  EXPECT_EQ(by_path.out, ud.out);
}

TEST_F(Cli, LinkingLexiconChangesClauseType) {
  const auto f = write("s.conllu",
                       "1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
                       "2\tsat\tsit\tVERB\t_\t_\t0\tROOT\t_\t_\n"
                       "3\tthere\tthere\tADV\t_\t_\t2\tadvmod\t_\t_\n");
  EXPECT_NE(run("extract " + f.string()).out.find("\"type\":\"SV\""), std::string::npos);
  const auto lex = write("lex.txt", "# custom\nsit\n");
  EXPECT_NE(run("--linking-lexicon " + lex.string() + " extract " + f.string()).out.find("\"type\":\"SVA\""),
            std::string::npos);
}

TEST_F(Cli, GraphWritesOneFilePerDocument) {
  const auto out = path("kb");
  const auto r = run("graph " + corpus() + " --out-dir " + out.string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(out)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"d01.json", "d02.json", "d03.json", "d04.json", "d05.json", "d06.json"}));
  const auto kb = parse_kb(read_file(out / "d01.json"));
  EXPECT_EQ(kb.label, "world");

  ASSERT_EQ(run("--jobs 3 graph " + corpus() + " --out-dir " + path("kb2").string()).exit_code, 0);
  for (const auto& n : names) EXPECT_EQ(read_file(out / n), read_file(path("kb2") / n)) << n;
}

TEST_F(Cli, GraphIntransitiveDocumentHasThreeNodes) {
  const auto f = write("sv.conllu",
                       "# doc_id = only\n"
                       "1\tAlice\talice\tPROPN\t_\t_\t2\tnsubj\t_\t_\n"
                       "2\tsleeps\tsleep\tVERB\t_\t_\t0\tROOT\t_\t_\n");
  ASSERT_EQ(run("graph " + f.string() + " --out-dir " + path("kb").string()).exit_code, 0);
  const auto kb = parse_kb(read_file(path("kb/only.json")));
  EXPECT_EQ(kb.nodes.size(), 3u);
  EXPECT_EQ(kb.nodes[2].kind, NodeKind::Dummy);
}

TEST_F(Cli, GraphDocumentWithoutFramesFails) {
  const auto f = write("run.conllu",
                       "# doc_id = imperative\n"
                       "1\tRun\trun\tVERB\t_\t_\t0\tROOT\t_\t_\n");
  const auto r = run("graph " + f.string() + " --out-dir " + path("kb").string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("EmptyDocument"), std::string::npos) << r.err;
}

TEST_F(Cli, PoolMatchesLibrary) {
  ASSERT_EQ(run("graph " + corpus() + " --out-dir " + path("kb").string()).exit_code, 0);
  const auto kb = parse_kb(read_file(path("kb/d03.json")));
  // Two subword rows per word of every sentence in the document.
  OffsetMap offsets;
  std::size_t rows = 0;
  for (const auto& n : kb.nodes)
    for (const auto& p : n.provenance)
      for (const auto w : p.words)
        if (!offsets.count({p.sentence, w})) offsets[{p.sentence, w}] = {rows++, rows++};
  Matrix emb(rows, 3);
  std::mt19937_64 gen(5);
  for (auto& v : emb.data()) v = static_cast<double>(gen() % 1000) / 7.0;
  write("d03.emb", write_embedding_matrix(emb));
  write("d03.offsets.json", write_offsets(offsets));

  const auto r = run("pool --kb " + path("kb/d03.json").string() + " --emb " + path("d03.emb").string() +
                     " --offsets " + path("d03.offsets.json").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out, write_embedding_matrix(pool_nodes(kb, EmbeddingTable{emb, offsets})));

  write("short.emb", "EMB 1 2 3\n1 2 3\n");
  const auto bad = run("pool --kb " + path("kb/d03.json").string() + " --emb " + path("short.emb").string() +
                       " --offsets " + path("d03.offsets.json").string());
  EXPECT_EQ(bad.exit_code, 2);

  const auto dummy = run("pool --dummy learned-constant --kb " + path("kb/d03.json").string() + " --emb " +
                         path("d03.emb").string() + " --offsets " + path("d03.offsets.json").string());
  EXPECT_EQ(dummy.exit_code, 2);
}

TEST_F(Cli, PoolSingleNodePassthrough) {
  KnowledgeBase kb;
  kb.doc_id = "one";
  kb.nodes.push_back({0, "x", NodeKind::Entity, {{0, {1}}}});
  write("one.json", serialize(kb));
  write("one.emb", "EMB 1 1 2\n0.25 -3\n");
  write("one.offsets.json", R"({"0:1":[0]})");
  const auto r = run("pool --kb " + path("one.json").string() + " --emb " + path("one.emb").string() +
                     " --offsets " + path("one.offsets.json").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out, "EMB 1 1 2\n0.25 -3\n");
}

TEST_F(Cli, TrainEvalDeterministic) {
  write_dataset(path("graphs"), path("features"), 24, 3);
  const std::string common =
      "--graphs " + path("graphs").string() + " --features " + path("features").string() + " --batch 8";
  const std::string train = "train " + common + " --hidden 8 --layers 2 --lr 0.01 --epochs 5 --seed 9";
  ASSERT_EQ(run(train + " --out " + path("a.ckpt").string() + " --log " + path("a.csv").string()).exit_code, 0);
  ASSERT_EQ(run(train + " --out " + path("b.ckpt").string() + " --log " + path("b.csv").string()).exit_code, 0);
  EXPECT_EQ(read_file(path("a.ckpt")), read_file(path("b.ckpt")));
  EXPECT_EQ(read_file(path("a.csv")), read_file(path("b.csv")));
  const auto csv = read_file(path("a.csv"));
  EXPECT_EQ(text::split(csv, '\n').size(), 7u);  // header, 5 rows, trailing empty

  const auto ck = gcn::load_checkpoint(read_file(path("a.ckpt")));
  EXPECT_EQ(ck.classes, (std::vector<std::string>{"chain", "star"}));
  EXPECT_EQ(ck.model.config().hidden_dim, 8u);
  EXPECT_EQ(ck.model.layers.size(), 2u);

  const auto eval = run("eval " + common + " --checkpoint " + path("a.ckpt").string());
  ASSERT_EQ(eval.exit_code, 0) << eval.err;
  const auto j = nlohmann::json::parse(eval.out);
  EXPECT_EQ(j["examples"], 24);
  EXPECT_GE(j["accuracy"].get<double>(), 0.0);
  EXPECT_EQ(j["per_class"].size(), j["per_class"].size());
}

TEST_F(Cli, ZeroLearningRateKeepsInitialModel) {
  write_dataset(path("graphs"), path("features"), 6, 4);
  const auto r = run("train --graphs " + path("graphs").string() + " --features " + path("features").string() +
                     " --hidden 5 --layers 2 --lr 0 --epochs 3 --seed 11 --out " + path("m.ckpt").string() +
                     " --log " + path("m.csv").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto ck = gcn::load_checkpoint(read_file(path("m.ckpt")));
  const auto init = gcn::init_model({4, 5, 2, 2}, 11);
  const auto a = ck.model.params();
  const auto b = init.params();
  for (std::size_t p = 0; p < a.size(); ++p) EXPECT_EQ(*a[p], *b[p]);
}

TEST_F(Cli, ConfigFileAndFlagPrecedence) {
  write_dataset(path("graphs"), path("features"), 6, 5);
  const auto cfg = write("run.toml", "[train]\nhidden = 6\nlayers = 3\nepochs = 2\nlr = 0.001\n");
  const std::string base = "--config " + cfg.string() + " train --graphs " + path("graphs").string() +
                           " --features " + path("features").string();
  ASSERT_EQ(run(base + " --out " + path("a.ckpt").string() + " --log " + path("a.csv").string()).exit_code, 0);
  auto ck = gcn::load_checkpoint(read_file(path("a.ckpt")));
  EXPECT_EQ(ck.model.layers.size(), 3u);
  EXPECT_EQ(ck.model.config().hidden_dim, 6u);
  EXPECT_EQ(ck.adam.lr, 0.001);

  ASSERT_EQ(run(base + " --layers 1 --out " + path("b.ckpt").string() + " --log " + path("b.csv").string()).exit_code,
            0);
  ck = gcn::load_checkpoint(read_file(path("b.ckpt")));
  EXPECT_EQ(ck.model.layers.size(), 1u);
  EXPECT_EQ(ck.model.config().hidden_dim, 6u);
}

TEST_F(Cli, TrainInputErrors) {
  write_dataset(path("graphs"), path("features"), 4, 6);
  const std::string base = "train --graphs " + path("graphs").string() + " --features " + path("features").string() +
                           " --out " + path("x.ckpt").string() + " --log " + path("x.csv").string();
  EXPECT_EQ(run(base + " --dummy learned-constant").exit_code, 2);
  EXPECT_EQ(run(base + " --hidden 0").exit_code, 2);
  fs::remove(path("features/g1000.emb"));
  EXPECT_EQ(run(base).exit_code, 2);
  EXPECT_FALSE(fs::exists(path("x.ckpt")));
  fs::create_directories(path("none"));
  EXPECT_EQ(run("train --graphs " + path("none").string() + " --features " + path("features").string() + " --out " +
                path("x.ckpt").string())
                .exit_code,
            2);
}

TEST_F(Cli, NumericFailureExitsThree) {
  write_dataset(path("graphs"), path("features"), 4, 7);
  auto m = parse_embedding_matrix(read_file(path("features/g1000.emb")));
  for (auto& v : m.data()) v = 1.7e308;
  write("features/g1000.emb", write_embedding_matrix(m));
  const auto r = run("train --graphs " + path("graphs").string() + " --features " + path("features").string() +
                     " --hidden 64 --layers 4 --epochs 1 --out " + path("x.ckpt").string() + " --log " +
                     path("x.csv").string());
  EXPECT_EQ(r.exit_code, 3) << r.err;
  EXPECT_NE(r.err.find("NumericFailure"), std::string::npos) << r.err;
}

TEST_F(Cli, StatsPinnedHistogram) {
  ASSERT_EQ(run("graph " + corpus() + " --out-dir " + path("kb").string()).exit_code, 0);
  const auto r = run("stats " + path("kb").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["documents"], 6);
  // Counted from the hand-derived frame table.
  EXPECT_EQ(j["clause_types"], nlohmann::json::parse(R"({"SV":15,"SVO":6,"SVC":3,"SVA":2,"SVOC":2,"SVOA":1,"SVOO":1})"));
}

TEST_F(Cli, StatsIntransitiveOnly) {
  const auto f = write("sv.conllu",
                       "# doc_id = a\n1\tAlice\talice\tPROPN\t_\t_\t2\tnsubj\t_\t_\n2\tsleeps\tsleep\tVERB\t_\t_\t0\tROOT\t_\t_\n"
                       "\n# doc_id = b\n1\tBob\tbob\tPROPN\t_\t_\t2\tnsubj\t_\t_\n2\tran\trun\tVERB\t_\t_\t0\tROOT\t_\t_\n");
  ASSERT_EQ(run("graph " + f.string() + " --out-dir " + path("kb").string()).exit_code, 0);
  const auto j = nlohmann::json::parse(run("stats " + path("kb").string()).out);
  EXPECT_EQ(j["clause_types"], nlohmann::json::parse(R"({"SV":2})"));
  EXPECT_EQ(j["nodes"], 6);
  EXPECT_EQ(j["edges"], 4);
}

TEST_F(Cli, StatsEmptyDirectory) {
  fs::create_directories(path("empty"));
  EXPECT_EQ(run("stats " + path("empty").string()).exit_code, 2);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("bogus").exit_code, 2);
  EXPECT_EQ(run("--help").exit_code, 0);
  EXPECT_EQ(run("extract /nonexistent/file.conllu").exit_code, 2);
}
