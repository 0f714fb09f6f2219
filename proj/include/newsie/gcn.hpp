#pragma once

// Graph convolutional classifier over pooled knowledge-base graphs:
//   H_{l+1} = relu(Â H_l W_l + b_l)   (no relu after the last layer)
//   logits  = mean_pool_per_graph(H_L) W_c + b_c
// with Â = D^{-1/2}(A + I)D^{-1/2}. Backward is hand-derived; Adam updates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "newsie/error.hpp"
#include "newsie/matrix.hpp"
#include "newsie/t2g.hpp"

namespace newsie::gcn {

// Â in compressed sparse rows. Symmetric, so it is its own transpose.
struct Propagation {
  std::size_t n = 0;
  std::vector<std::size_t> row_start;  // n + 1 entries
  std::vector<std::size_t> col;
  std::vector<double> val;

  Matrix to_dense() const {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (auto p = row_start[i]; p < row_start[i + 1]; ++p) out(i, col[p]) = val[p];
    return out;
  }

  // Â * h
  Matrix apply(const Matrix& h) const {
    Matrix out(n, h.cols());
    for (std::size_t i = 0; i < n; ++i) {
      auto o = out.row(i);
      for (auto p = row_start[i]; p < row_start[i + 1]; ++p) {
        const auto src = h.row(col[p]);
        const double w = val[p];
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += w * src[c];
      }
    }
    return out;
  }
};

// Edges are symmetrized, self-loops added, duplicates collapsed to weight 1.
inline Propagation build_propagation(std::span<const std::pair<int, int>> edges, std::size_t k) {
  std::vector<std::set<std::size_t>> adj(k);
  for (std::size_t i = 0; i < k; ++i) adj[i].insert(i);
  for (const auto& [s, d] : edges) {
    if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= k || static_cast<std::size_t>(d) >= k)
      throw Error(Errc::IndexOutOfRange,
                  "edge (" + std::to_string(s) + "," + std::to_string(d) + ") with K=" + std::to_string(k));
    adj[static_cast<std::size_t>(s)].insert(static_cast<std::size_t>(d));
    adj[static_cast<std::size_t>(d)].insert(static_cast<std::size_t>(s));
  }
  Propagation p;
  p.n = k;
  p.row_start.reserve(k + 1);
  p.row_start.push_back(0);
  for (std::size_t i = 0; i < k; ++i) {
    const double di = static_cast<double>(adj[i].size());
    for (const auto j : adj[i]) {
      p.col.push_back(j);
      p.val.push_back(1.0 / std::sqrt(di * static_cast<double>(adj[j].size())));
    }
    p.row_start.push_back(p.col.size());
  }
  return p;
}

inline Matrix normalize_adjacency(std::span<const std::pair<int, int>> edges, std::size_t k) {
  return build_propagation(edges, k).to_dense();
}

struct Dense {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

struct GcnConfig {
  std::size_t input_dim = 768;
  std::size_t hidden_dim = 768;
  std::size_t n_layers = 4;
  std::size_t n_classes = 2;
};

struct GcnModel {
  std::vector<Dense> layers;
  Dense classifier;

  GcnConfig config() const {
    GcnConfig c;
    c.n_layers = layers.size();
    c.input_dim = layers.empty() ? 0 : layers.front().w.rows();
    c.hidden_dim = layers.empty() ? 0 : layers.front().w.cols();
    c.n_classes = classifier.w.cols();
    return c;
  }

  template <typename F>
  void for_each_param(F&& f) {
    for (auto& l : layers) {
      f(l.w);
      f(l.b);
    }
    f(classifier.w);
    f(classifier.b);
  }

  template <typename F>
  void for_each_param(F&& f) const {
    for (const auto& l : layers) {
      f(l.w);
      f(l.b);
    }
    f(classifier.w);
    f(classifier.b);
  }

  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for_each_param([&](Matrix& m) { out.push_back(&m); });
    return out;
  }

  std::vector<const Matrix*> params() const {
    std::vector<const Matrix*> out;
    for_each_param([&](const Matrix& m) { out.push_back(&m); });
    return out;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_param([&](const Matrix& m) { ok = ok && m.all_finite(); });
    return ok;
  }
};

// Same shapes as `model`, all zeros.
inline GcnModel zeros_like(const GcnModel& model) {
  GcnModel out;
  for (const auto& l : model.layers)
    out.layers.push_back({Matrix(l.w.rows(), l.w.cols()), Matrix(l.b.rows(), l.b.cols())});
  out.classifier = {Matrix(model.classifier.w.rows(), model.classifier.w.cols()),
                    Matrix(model.classifier.b.rows(), model.classifier.b.cols())};
  return out;
}

// Uniform double in [0, 1) from the top 53 bits; platform independent.
inline double unit_uniform(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

// Glorot-uniform weights, zero biases.
inline GcnModel init_model(const GcnConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.n_layers == 0 || cfg.n_classes == 0)
    throw Error(Errc::DimMismatch, "GCN dimensions must be positive");
  std::mt19937_64 gen(seed);
  const auto glorot = [&](std::size_t in, std::size_t out) {
    Matrix w(in, out);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w.data()) v = (2.0 * unit_uniform(gen) - 1.0) * limit;
    return w;
  };
  GcnModel m;
  std::size_t in = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    m.layers.push_back({glorot(in, cfg.hidden_dim), Matrix(1, cfg.hidden_dim)});
    in = cfg.hidden_dim;
  }
  m.classifier = {glorot(in, cfg.n_classes), Matrix(1, cfg.n_classes)};
  return m;
}

struct ForwardCache {
  Propagation prop;
  std::vector<Matrix> propagated;  // Â H_l, per layer
  std::vector<Matrix> pre;         // Z_l = Â H_l W_l + b_l
  Matrix node_out;                 // H_L
  Matrix pooled;                   // graphs x hidden
};

struct ForwardResult {
  Matrix logits;  // graphs x classes
  ForwardCache cache;
};

inline ForwardResult forward(const GcnModel& model, const GraphBatch& batch) {
  if (model.layers.empty()) throw Error(Errc::DimMismatch, "model has no layers");
  if (batch.features.cols() != model.layers.front().w.rows())
    throw Error(Errc::DimMismatch, "feature dim " + std::to_string(batch.features.cols()) + " != model input dim " +
                                       std::to_string(model.layers.front().w.rows()));
  if (batch.num_graphs() == 0) throw Error(Errc::EmptyBatch, "batch holds no graphs");
  ForwardResult r;
  auto& c = r.cache;
  c.prop = build_propagation(batch.edges, batch.num_nodes());

  Matrix h = batch.features;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    c.propagated.push_back(c.prop.apply(h));
    Matrix z = matmul(c.propagated.back(), layer.w);
    add_row_vector(z, layer.b);
    c.pre.push_back(z);
    if (l + 1 < model.layers.size())
      for (auto& v : z.data()) v = std::max(v, 0.0);
    h = std::move(z);
  }
  c.node_out = std::move(h);

  const std::size_t graphs = batch.num_graphs();
  c.pooled = Matrix(graphs, c.node_out.cols());
  for (std::size_t g = 0; g < graphs; ++g) {
    const auto lo = batch.offsets[g], hi = batch.offsets[g + 1];
    auto dst = c.pooled.row(g);
    for (auto i = lo; i < hi; ++i) {
      const auto src = c.node_out.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    if (hi > lo)
      for (auto& v : dst) v /= static_cast<double>(hi - lo);
  }
  r.logits = matmul(c.pooled, model.classifier.w);
  add_row_vector(r.logits, model.classifier.b);
  return r;
}

// Row-wise softmax, max-shifted.
inline Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = p.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) sum += (out[j] = std::exp(in[j] - mx));
    for (auto& v : out) v /= sum;
  }
  return p;
}

inline void check_labels(const GraphBatch& batch, std::size_t n_classes) {
  if (batch.labels.size() != batch.num_graphs()) throw Error(Errc::MissingLabels, "label count != graph count");
  for (const int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
      throw Error(Errc::MissingLabels, "graph label " + std::to_string(y) + " outside [0, " +
                                           std::to_string(n_classes) + ")");
}

// Mean softmax cross-entropy over the batch's graphs.
inline double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (const double v : row) sum += std::exp(v - mx);
    total += mx + std::log(sum) - row[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(logits.rows());
}

inline double loss(const GcnModel& model, const GraphBatch& batch) {
  check_labels(batch, model.classifier.w.cols());
  return cross_entropy(forward(model, batch).logits, batch.labels);
}

struct LossAndGrad {
  double loss = 0.0;
  GcnModel grad;
};

inline LossAndGrad loss_and_grad(const GcnModel& model, const GraphBatch& batch) {
  check_labels(batch, model.classifier.w.cols());
  const auto fwd = forward(model, batch);
  const auto& c = fwd.cache;
  const std::size_t graphs = batch.num_graphs();

  LossAndGrad out;
  out.loss = cross_entropy(fwd.logits, batch.labels);
  out.grad = zeros_like(model);

  // dL/dlogits = (softmax - onehot) / B
  Matrix dlogits = softmax(fwd.logits);
  for (std::size_t g = 0; g < graphs; ++g) {
    dlogits(g, static_cast<std::size_t>(batch.labels[g])) -= 1.0;
    for (auto& v : dlogits.row(g)) v /= static_cast<double>(graphs);
  }
  out.grad.classifier.w = matmul_tn(c.pooled, dlogits);
  out.grad.classifier.b = column_sums(dlogits);
  const Matrix dpooled = matmul_nt(dlogits, model.classifier.w);

  // Mean readout spreads each graph's gradient evenly over its nodes.
  Matrix dh(c.node_out.rows(), c.node_out.cols());
  for (std::size_t g = 0; g < graphs; ++g) {
    const auto lo = batch.offsets[g], hi = batch.offsets[g + 1];
    const auto src = dpooled.row(g);
    for (auto i = lo; i < hi; ++i) {
      auto dst = dh.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / static_cast<double>(hi - lo);
    }
  }

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    Matrix dz = std::move(dh);
    if (l + 1 < model.layers.size()) {
      const auto& z = c.pre[l];
      for (std::size_t i = 0; i < dz.size(); ++i)
        if (z.data()[i] <= 0.0) dz.data()[i] = 0.0;
    }
    out.grad.layers[l].w = matmul_tn(c.propagated[l], dz);
    out.grad.layers[l].b = column_sums(dz);
    if (l > 0) dh = c.prop.apply(matmul_nt(dz, model.layers[l].w));
  }
  return out;
}

inline std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
  }
  return out;
}

inline std::vector<int> predict(const GcnModel& model, const GraphBatch& batch) {
  return argmax_rows(forward(model, batch).logits);
}

struct AdamState {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  GcnModel m;  // first moments, shaped like the model
  GcnModel v;  // second moments

  static AdamState for_model(const GcnModel& model, double lr = 1e-5) {
    AdamState s;
    s.lr = lr;
    s.m = zeros_like(model);
    s.v = zeros_like(model);
    return s;
  }
};

// One bias-corrected Adam update of every parameter.
inline void adam_step(GcnModel& model, const GcnModel& grad, AdamState& st) {
  if (st.m.layers.size() != model.layers.size()) {
    st.m = zeros_like(model);
    st.v = zeros_like(model);
  }
  ++st.step;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  auto p = model.params();
  const auto g = grad.params();
  auto m = st.m.params();
  auto v = st.v.params();
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto& pd = p[k]->data();
    const auto& gd = g[k]->data();
    auto& md = m[k]->data();
    auto& vd = v[k]->data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      md[i] = st.beta1 * md[i] + (1.0 - st.beta1) * gd[i];
      vd[i] = st.beta2 * vd[i] + (1.0 - st.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / c1;
      const double vhat = vd[i] / c2;
      pd[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

struct Metrics {
  double accuracy = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  std::vector<int> classes;  // classes averaged over (seen in truth or predictions)
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
};

// Per-class precision TP/(TP+FP), recall TP/(TP+FN), F1 their harmonic mean;
// undefined ratios count as 0. Macro averages run over every class present in
// the labels or the predictions.
inline Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.empty()) throw Error(Errc::EmptyEvalSet, "no examples to evaluate");
  if (truth.size() != predicted.size()) throw Error(Errc::DimMismatch, "truth and prediction counts differ");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(predicted.begin(), predicted.end());
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == predicted[i];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (const int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (predicted[i] == c && truth[i] == c) ++tp;
      else if (predicted[i] == c) ++fp;
      else if (truth[i] == c) ++fn;
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    m.classes.push_back(c);
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(f);
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  m.precision_macro = mean(m.precision);
  m.recall_macro = mean(m.recall);
  m.f1_macro = mean(m.f1);
  return m;
}

inline Metrics evaluate(const GcnModel& model, std::span<const GraphBatch> batches) {
  std::vector<int> truth, predicted;
  for (const auto& b : batches) {
    check_labels(b, model.classifier.w.cols());
    const auto p = predict(model, b);
    truth.insert(truth.end(), b.labels.begin(), b.labels.end());
    predicted.insert(predicted.end(), p.begin(), p.end());
  }
  return compute_metrics(truth, predicted);
}

// Consecutive chunks of `batch_size` samples, in the given order.
inline std::vector<GraphBatch> make_batches(std::span<const GraphSample> samples, std::size_t batch_size,
                                            std::span<const std::size_t> order = {}) {
  if (batch_size == 0) throw Error(Errc::EmptyBatch, "batch size must be positive");
  std::vector<GraphBatch> out;
  std::vector<GraphSample> chunk;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    chunk.push_back(samples[order.empty() ? i : order[i]]);
    if (chunk.size() == batch_size || i + 1 == samples.size()) {
      out.push_back(assemble_batch(chunk));
      chunk.clear();
    }
  }
  return out;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
};

// Shuffles samples each epoch with a seeded generator, one Adam step per batch.
// Each log row is the full-dataset loss and accuracy after that epoch.
inline std::vector<EpochRecord> train(GcnModel& model, std::span<const GraphSample> samples, const TrainOptions& opts,
                                      AdamState& adam) {
  if (samples.empty()) throw Error(Errc::EmptyBatch, "no training samples");
  std::mt19937_64 gen(opts.seed);
  std::vector<std::size_t> order(samples.size());
  const auto eval_batches = make_batches(samples, opts.batch_size);
  std::vector<EpochRecord> log;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[gen() % i]);
    for (const auto& batch : make_batches(samples, opts.batch_size, order)) {
      const auto lg = loss_and_grad(model, batch);
      if (!std::isfinite(lg.loss)) throw Error(Errc::NumericFailure, "non-finite loss in epoch " + std::to_string(epoch));
      adam_step(model, lg.grad, adam);
    }
    if (!model.all_finite()) throw Error(Errc::NumericFailure, "non-finite parameters after epoch " + std::to_string(epoch));

    double total = 0.0;
    std::size_t correct = 0;
    for (const auto& b : eval_batches) {
      const auto logits = forward(model, b).logits;
      total += cross_entropy(logits, b.labels) * static_cast<double>(b.num_graphs());
      const auto pred = argmax_rows(logits);
      for (std::size_t g = 0; g < pred.size(); ++g) correct += pred[g] == b.labels[g];
    }
    const auto n = static_cast<double>(samples.size());
    log.push_back({epoch, total / n, static_cast<double>(correct) / n});
  }
  return log;
}

inline std::string format_log_csv(std::span<const EpochRecord> log) {
  std::string out = "epoch,loss,acc\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.accuracy) + "\n";
  return out;
}

namespace detail {

inline nlohmann::ordered_json matrix_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.data();
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw Error(Errc::DimMismatch, "checkpoint matrix data does not match its shape");
  return Matrix(rows, cols, std::move(data));
}

inline nlohmann::ordered_json model_json(const GcnModel& m) {
  auto layers = nlohmann::ordered_json::array();
  for (const auto& l : m.layers) {
    nlohmann::ordered_json lj;
    lj["w"] = matrix_json(l.w);
    lj["b"] = matrix_json(l.b);
    layers.push_back(std::move(lj));
  }
  nlohmann::ordered_json j;
  j["layers"] = std::move(layers);
  j["classifier"] = {{"w", matrix_json(m.classifier.w)}, {"b", matrix_json(m.classifier.b)}};
  return j;
}

inline GcnModel model_from_json(const nlohmann::json& j) {
  GcnModel m;
  for (const auto& lj : j.at("layers")) m.layers.push_back({matrix_from_json(lj.at("w")), matrix_from_json(lj.at("b"))});
  m.classifier = {matrix_from_json(j.at("classifier").at("w")), matrix_from_json(j.at("classifier").at("b"))};
  return m;
}

}  // namespace detail

struct Checkpoint {
  GcnModel model;
  AdamState adam;
  std::vector<std::string> classes;  // class id -> label text
};

// Shape-chain check across layers and classifier.
inline void validate(const GcnModel& m) {
  if (m.layers.empty()) throw Error(Errc::DimMismatch, "model has no layers");
  std::size_t in = m.layers.front().w.rows();
  for (const auto& l : m.layers) {
    if (l.w.rows() != in || l.b.rows() != 1 || l.b.cols() != l.w.cols())
      throw Error(Errc::DimMismatch, "layer shapes do not chain");
    in = l.w.cols();
  }
  if (m.classifier.w.rows() != in || m.classifier.b.rows() != 1 || m.classifier.b.cols() != m.classifier.w.cols())
    throw Error(Errc::DimMismatch, "classifier shape does not match last layer");
  if (!m.all_finite()) throw Error(Errc::NumericFailure, "model holds non-finite parameters");
}

inline std::string save_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["format"] = "newsie-gcn";
  j["version"] = 1;
  j["classes"] = ck.classes;
  j["model"] = detail::model_json(ck.model);
  nlohmann::ordered_json a;
  a["lr"] = ck.adam.lr;
  a["beta1"] = ck.adam.beta1;
  a["beta2"] = ck.adam.beta2;
  a["eps"] = ck.adam.eps;
  a["step"] = ck.adam.step;
  a["m"] = detail::model_json(ck.adam.m);
  a["v"] = detail::model_json(ck.adam.v);
  j["adam"] = std::move(a);
  return j.dump() + "\n";
}

inline Checkpoint load_checkpoint(std::string_view content) {
  try {
    const auto j = nlohmann::json::parse(content);
    if (j.at("format") != "newsie-gcn" || j.at("version") != 1)
      throw Error(Errc::InvalidFormat, "not a version-1 newsie-gcn checkpoint");
    Checkpoint ck;
    ck.classes = j.at("classes").get<std::vector<std::string>>();
    ck.model = detail::model_from_json(j.at("model"));
    validate(ck.model);
    const auto& a = j.at("adam");
    ck.adam.lr = a.at("lr").get<double>();
    ck.adam.beta1 = a.at("beta1").get<double>();
    ck.adam.beta2 = a.at("beta2").get<double>();
    ck.adam.eps = a.at("eps").get<double>();
    ck.adam.step = a.at("step").get<std::uint64_t>();
    ck.adam.m = detail::model_from_json(a.at("m"));
    ck.adam.v = detail::model_from_json(a.at("v"));
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFormat, std::string("checkpoint JSON: ") + e.what());
  }
}

}  // namespace newsie::gcn
