#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "newsie/gcn.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace newsie;
using namespace newsie::gcn;

namespace {

GraphSample random_graph(std::mt19937_64& gen, std::size_t dim, int classes) {
  std::normal_distribution<double> nd;
  GraphSample s;
  const std::size_t k = 1 + gen() % 7;
  s.features = Matrix(k, dim);
  for (auto& v : s.features.data()) v = nd(gen);
  for (std::size_t e = 0; k > 1 && e < k + 1; ++e) {
    const int a = static_cast<int>(gen() % k), b = static_cast<int>(gen() % k);
    if (a != b) s.edges.emplace_back(a, b);
  }
  s.label = static_cast<int>(gen() % static_cast<std::uint64_t>(classes));
  return s;
}

GcnConfig small_config(std::size_t dim = 3) { return {dim, 5, 3, 3}; }

GraphBatch solo(const GraphSample& s) { return assemble_batch(std::span<const GraphSample>(&s, 1)); }

}  // namespace

TEST(Adjacency, SingleNode) { EXPECT_EQ(normalize_adjacency({}, 1), Matrix(1, 1, {1.0})); }

TEST(Adjacency, OneEdge) {
  const std::vector<std::pair<int, int>> e{{0, 1}};
  EXPECT_EQ(normalize_adjacency(e, 2), Matrix(2, 2, {0.5, 0.5, 0.5, 0.5}));
}

TEST(Adjacency, ThreeNodePath) {
  const std::vector<std::pair<int, int>> e{{0, 1}, {1, 2}};
  const auto a = normalize_adjacency(e, 3);
  EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(a(0, 1), 1.0 / std::sqrt(6.0));
  EXPECT_DOUBLE_EQ(a(1, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a(2, 2), 0.5);
  EXPECT_EQ(a(0, 2), 0.0);
}

TEST(Adjacency, SymmetricAndMatchesDenseOracle) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = random_graph(gen, 1, 2);
    const int k = static_cast<int>(g.features.rows());
    const auto a = normalize_adjacency(g.edges, static_cast<std::size_t>(k));
    const auto want = ntest::dense_norm_adj(g.edges, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        EXPECT_EQ(a(i, j), a(j, i));
        EXPECT_NEAR(a(i, j), want[i][j], 1e-15);
      }
  }
}

TEST(Adjacency, DirectionAndDuplicatesDoNotMatter) {
  const std::vector<std::pair<int, int>> one{{0, 1}}, both{{0, 1}, {1, 0}, {0, 1}};
  EXPECT_EQ(normalize_adjacency(one, 2), normalize_adjacency(both, 2));
}

TEST(Adjacency, OutOfRangeEdge) {
  const std::vector<std::pair<int, int>> e{{0, 2}};
  EXPECT_THROW(normalize_adjacency(e, 2), Error);
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  auto model = zeros_like(init_model(small_config(), 1));
  std::mt19937_64 gen(32);
  const auto r = forward(model, solo(random_graph(gen, 3, 3)));
  for (const double v : r.logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, HandComputedIdentityModel) {
  // x = [1; 3], one edge: Â = all 0.5, so ÂX = [2; 2], mean 2.
  GcnModel m;
  m.layers.push_back({Matrix(1, 1, {1.0}), Matrix(1, 1)});
  m.classifier = {Matrix(1, 2, {1.0, -1.0}), Matrix(1, 2, {0.0, 0.5})};
  GraphSample s;
  s.features = Matrix(2, 1, {1.0, 3.0});
  s.edges = {{0, 1}};
  EXPECT_EQ(forward(m, solo(s)).logits, Matrix(1, 2, {2.0, -1.5}));
}

TEST(Forward, MatchesStraightLineOracle) {
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = init_model(small_config(), 100 + static_cast<std::uint64_t>(trial));
    const auto g = random_graph(gen, 3, 3);
    const auto got = forward(model, solo(g)).logits;
    const auto want = ntest::straight_line_logits(model, g.features, g.edges);
    for (std::size_t c = 0; c < want.size(); ++c) EXPECT_NEAR(got(0, c), want[c], 1e-12);
  }
}

TEST(Forward, BatchedEqualsSolo) {
  std::mt19937_64 gen(34);
  const auto model = init_model(small_config(), 5);
  std::vector<GraphSample> items;
  for (int i = 0; i < 12; ++i) items.push_back(random_graph(gen, 3, 3));
  const auto batched = forward(model, assemble_batch(items)).logits;
  for (std::size_t g = 0; g < items.size(); ++g) {
    const auto alone = forward(model, solo(items[g])).logits;
    for (std::size_t c = 0; c < alone.cols(); ++c) EXPECT_NEAR(batched(g, c), alone(0, c), 1e-12);
  }
}

TEST(Forward, NodePermutationInvariant) {
  std::mt19937_64 gen(35);
  const auto model = init_model(small_config(), 6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_graph(gen, 3, 3);
    const auto k = g.features.rows();
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    GraphSample p = g;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < g.features.cols(); ++c) p.features(perm[i], c) = g.features(i, c);
    for (auto& [a, b] : p.edges) {
      a = perm[a];
      b = perm[b];
    }
    const auto x = forward(model, solo(g)).logits;
    const auto y = forward(model, solo(p)).logits;
    for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_NEAR(x(0, c), y(0, c), 1e-10);
  }
}

TEST(Forward, DimensionMismatch) {
  std::mt19937_64 gen(36);
  EXPECT_THROW(forward(init_model(small_config(4), 1), solo(random_graph(gen, 3, 3))), Error);
}

TEST(Loss, EqualLogitsGiveLogC) {
  const Matrix logits(2, 4, 0.7);
  const std::vector<int> y{0, 3};
  EXPECT_NEAR(cross_entropy(logits, y), std::log(4.0), 1e-15);
}

TEST(Loss, StableForLargeLogits) {
  const Matrix logits(1, 2, {1000.0, 0.0});
  const std::vector<int> y{1};
  EXPECT_NEAR(cross_entropy(logits, y), 1000.0, 1e-9);
}

TEST(Loss, MissingLabelsRejected) {
  std::mt19937_64 gen(37);
  auto g = random_graph(gen, 3, 3);
  g.label = -1;
  EXPECT_THROW(loss(init_model(small_config(), 1), solo(g)), Error);
  g.label = 3;
  EXPECT_THROW(loss(init_model(small_config(), 1), solo(g)), Error);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (const std::uint64_t seed : {11u, 12u, 13u}) {
    std::mt19937_64 gen(seed);
    std::vector<GraphSample> items;
    for (int i = 0; i < 4; ++i) items.push_back(random_graph(gen, 3, 3));
    const auto batch = assemble_batch(items);
    const auto model = init_model(small_config(), seed);
    const auto analytic = loss_and_grad(model, batch);
    EXPECT_NEAR(analytic.loss, loss(model, batch), 1e-14);
    const auto numeric = ntest::finite_difference_grad(model, batch, 1e-5);
    EXPECT_LT(ntest::relative_error(analytic.grad, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(Adam, SingleStepByHand) {
  GcnModel m;
  m.layers.push_back({Matrix(1, 1, {1.0}), Matrix(1, 1, {0.0})});
  m.classifier = {Matrix(1, 1, {2.0}), Matrix(1, 1, {0.0})};
  auto g = zeros_like(m);
  g.layers[0].w(0, 0) = 0.5;
  g.classifier.w(0, 0) = -4.0;
  auto st = AdamState::for_model(m, 0.1);
  adam_step(m, g, st);
  // First step: m̂ = g, v̂ = g², so the update is lr * g / (|g| + eps).
  EXPECT_NEAR(m.layers[0].w(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(m.classifier.w(0, 0), 2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(m.layers[0].b(0, 0), 0.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroLearningRateLeavesModelUnchanged) {
  auto m = init_model(small_config(), 3);
  const auto before = m;
  std::mt19937_64 gen(38);
  const auto lg = loss_and_grad(m, solo(random_graph(gen, 3, 3)));
  auto st = AdamState::for_model(m, 0.0);
  adam_step(m, lg.grad, st);
  const auto a = before.params();
  const auto b = m.params();
  for (std::size_t p = 0; p < a.size(); ++p) EXPECT_EQ(*a[p], *b[p]);
}

TEST(Init, DeterministicAndGlorotBounded) {
  const auto a = init_model(small_config(), 9);
  const auto b = init_model(small_config(), 9);
  EXPECT_EQ(save_checkpoint({a, {}, {}}), save_checkpoint({b, {}, {}}));
  const double limit = std::sqrt(6.0 / (3 + 5));
  for (const double v : a.layers[0].w.data()) EXPECT_LE(std::abs(v), limit);
  EXPECT_NE(save_checkpoint({a, {}, {}}), save_checkpoint({init_model(small_config(), 10), {}, {}}));
  EXPECT_THROW(init_model({0, 4, 1, 2}, 1), Error);
}

TEST(Train, DeterministicAndLossDecreases) {
  ntest::SyntheticSpec spec;
  spec.graphs = 40;
  spec.dim = 4;
  const auto data = ntest::star_chain_dataset(spec);
  const auto run = [&] {
    auto model = init_model({4, 8, 2, 2}, 42);
    auto adam = AdamState::for_model(model, 1e-2);
    const auto log = train(model, data, {15, 8, 42}, adam);
    return std::make_pair(format_log_csv(log), save_checkpoint({model, adam, {"a", "b"}}));
  };
  const auto first = run();
  EXPECT_EQ(first, run());
  const auto lines = text::split(first.first, '\n');
  EXPECT_EQ(lines[0], "epoch,loss,acc");
  const auto loss_at = [&](std::size_t i) { return std::stod(std::string(text::split(lines[i], ',')[1])); };
  EXPECT_LT(loss_at(15), loss_at(1));
}

TEST(Train, NumericFailureSurfaces) {
  ntest::SyntheticSpec spec;
  spec.graphs = 4;
  spec.dim = 2;
  auto data = ntest::star_chain_dataset(spec);
  data[0].features(0, 0) = std::numeric_limits<double>::infinity();
  auto model = init_model({2, 3, 1, 2}, 1);
  auto adam = AdamState::for_model(model, 1e-2);
  try {
    train(model, data, {2, 4, 1}, adam);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NumericFailure);
  }
}

TEST(Metrics, TwoClassFixture) {
  const std::vector<int> truth{0, 1}, pred{0, 0};
  const auto m = compute_metrics(truth, pred);
  EXPECT_EQ(m.classes, (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(m.precision[0], 0.5);
  EXPECT_DOUBLE_EQ(m.recall[0], 1.0);
  EXPECT_DOUBLE_EQ(m.f1[0], 2.0 / 3.0);
  EXPECT_EQ(m.precision[1], 0.0);
  EXPECT_EQ(m.f1[1], 0.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
}

TEST(Metrics, TenPredictionFixture) {
  const ntest::MetricsFixture fx;
  const auto m = compute_metrics(fx.truth, fx.predicted);
  EXPECT_NEAR(m.accuracy, fx.accuracy, 1e-12);
  EXPECT_NEAR(m.precision_macro, fx.precision_macro, 1e-12);
  EXPECT_NEAR(m.recall_macro, fx.recall_macro, 1e-12);
  EXPECT_NEAR(m.f1_macro, fx.f1_macro, 1e-12);
}

TEST(Metrics, EmptyAndMismatched) {
  EXPECT_THROW(compute_metrics({}, {}), Error);
  const std::vector<int> a{0}, b{0, 1};
  EXPECT_THROW(compute_metrics(a, b), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto model = init_model(small_config(), 4);
  auto adam = AdamState::for_model(model, 3e-4);
  std::mt19937_64 gen(39);
  adam_step(model, loss_and_grad(model, solo(random_graph(gen, 3, 3))).grad, adam);
  const Checkpoint ck{model, adam, {"business", "sports", "world"}};
  const auto text = save_checkpoint(ck);
  const auto back = load_checkpoint(text);
  EXPECT_EQ(save_checkpoint(back), text);
  EXPECT_EQ(back.classes, ck.classes);
  EXPECT_EQ(back.adam.step, 1u);
  EXPECT_EQ(back.model.layers[1].w, model.layers[1].w);
}

TEST(Checkpoint, Rejections) {
  EXPECT_THROW(load_checkpoint("{}"), Error);
  EXPECT_THROW(load_checkpoint(R"({"format":"other","version":1})"), Error);
  auto text = save_checkpoint({init_model(small_config(), 4), {}, {"a"}});
  text.replace(text.find("\"rows\":3"), 8, "\"rows\":2");
  EXPECT_THROW(load_checkpoint(text), Error);
}
