#pragma once

#include "ssdml/baselines.hpp"
#include "ssdml/common.hpp"
#include "ssdml/data.hpp"
#include "ssdml/encoder.hpp"
#include "ssdml/eval.hpp"
#include "ssdml/graph.hpp"
#include "ssdml/manifold.hpp"
#include "ssdml/metric.hpp"
#include "ssdml/mining.hpp"
#include "ssdml/propagation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace ssdml {

enum class Method { Ours, Seraph, Lrml };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Ours: return "ours";
    case Method::Seraph: return "seraph";
    case Method::Lrml: return "lrml";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ours") return Method::Ours;
  if (s == "seraph") return Method::Seraph;
  if (s == "lrml") return Method::Lrml;
  throw ConfigError("unknown method '" + s + "' (expected ours, seraph or lrml)");
}

struct TrainConfig {
  Method method = Method::Ours;
  double gamma = 0.99;
  int k = 10;
  double alpha_deg = 40.0;
  int embed_dim = 0;          // 0: half the representation dimension, rounded up
  bool encoder = true;
  int encoder_dim = 0;        // 0: same as the input dimension
  bool orth = true;
  double lr = 1e-4;
  int batch_triplets = 100;
  int partition_size = 9000;  // 0: the whole unlabeled set
  int epochs_per_partition = 10;
  int max_epochs = 50;
  int inner_L_iters = 10;
  std::uint64_t seed = 0;
  double validation_fraction = 0.15;
  int kmeans_restarts = 10;
  unsigned threads = 1;
  SeraphConfig seraph;
  LrmlConfig lrml;

  void validate() const {
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
    require(k >= 2 && k % 2 == 0, "k must be an even number >= 2");
    AngularConfig{alpha_deg}.tan_sq();
    require(embed_dim >= 0 && encoder_dim >= 0, "dimensions must be non-negative");
    require(lr >= 0.0, "learning rate must be non-negative");
    require(batch_triplets >= 1, "batch size must be >= 1");
    require(partition_size >= 0, "partition size must be >= 0");
    require(epochs_per_partition >= 1 && max_epochs >= 1, "epoch counts must be >= 1");
    require(inner_L_iters >= 0, "inner_L_iters must be >= 0");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation fraction must be in (0, 1)");
    require(kmeans_restarts >= 1, "kmeans_restarts must be >= 1");
    require(threads >= 1, "threads must be >= 1");
    seraph.validate();
    lrml.validate();
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = to_string(c.method);
  j["gamma"] = c.gamma;
  j["k"] = c.k;
  j["alpha_deg"] = c.alpha_deg;
  j["embed_dim"] = c.embed_dim;
  j["encoder"] = c.encoder;
  j["encoder_dim"] = c.encoder_dim;
  j["orth"] = c.orth;
  j["lr"] = c.lr;
  j["batch_triplets"] = c.batch_triplets;
  j["partition_size"] = c.partition_size;
  j["epochs_per_partition"] = c.epochs_per_partition;
  j["max_epochs"] = c.max_epochs;
  j["inner_L_iters"] = c.inner_L_iters;
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  j["kmeans_restarts"] = c.kmeans_restarts;
  j["seraph"] = {{"eta", c.seraph.eta}, {"mu", c.seraph.mu}, {"lambda", c.seraph.lambda}};
  j["lrml"] = {{"gamma_s", c.lrml.gamma_s}, {"gamma_d", c.lrml.gamma_d}};
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.gamma = j.at("gamma");
  c.k = j.at("k");
  c.alpha_deg = j.at("alpha_deg");
  c.embed_dim = j.at("embed_dim");
  c.encoder = j.at("encoder");
  c.encoder_dim = j.at("encoder_dim");
  c.orth = j.at("orth");
  c.lr = j.at("lr");
  c.batch_triplets = j.at("batch_triplets");
  c.partition_size = j.at("partition_size");
  c.epochs_per_partition = j.at("epochs_per_partition");
  c.max_epochs = j.at("max_epochs");
  c.inner_L_iters = j.at("inner_L_iters");
  c.seed = j.at("seed");
  c.validation_fraction = j.at("validation_fraction");
  c.kmeans_restarts = j.at("kmeans_restarts");
  c.seraph = {j.at("seraph").at("eta"), j.at("seraph").at("mu"), j.at("seraph").at("lambda")};
  c.lrml = {j.at("lrml").at("gamma_s"), j.at("lrml").at("gamma_d")};
  return c;
}

/// One line of training history. Epoch 0 describes the initial model.
struct HistoryRecord {
  int epoch = 0;
  int partition = -1;
  double loss = 0.0;
  double val_nmi = 0.0;
  double val_r1 = 0.0;

  friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

inline nlohmann::ordered_json to_json(const HistoryRecord& h) {
  nlohmann::ordered_json j;
  j["epoch"] = h.epoch;
  j["partition"] = h.partition;
  j["loss"] = h.loss;
  j["val_nmi"] = h.val_nmi;
  j["val_r1"] = h.val_r1;
  return j;
}

inline HistoryRecord history_from_json(const nlohmann::json& j) {
  return {j.at("epoch"), j.at("partition"), j.at("loss"), j.at("val_nmi"), j.at("val_r1")};
}

struct Model {
  MetricL metric;
  std::optional<Encoder> encoder;
  TrainConfig config;
  std::vector<HistoryRecord> history;

  /// Features -> encoder (if any) -> L^T.
  Matrix embed(const Matrix& x) const {
    if (encoder) return ssdml::embed(metric.matrix(), forward(*encoder, x));
    return ssdml::embed(metric.matrix(), x);
  }

  Index input_dim() const { return encoder ? encoder->input_dim() : metric.input_dim(); }
};

/// Raised when the loss or parameters become non-finite; carries the
/// history recorded up to that point.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, std::vector<HistoryRecord> h)
      : NumericError(what), history(std::move(h)) {}
  std::vector<HistoryRecord> history;
};

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline void write_matrix_rows(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

inline std::vector<double> read_numbers(const std::string& line, int line_no) {
  std::vector<double> vals;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    const auto v = parse_double(tok);
    if (!v) throw ParseError("model: bad number '" + tok + "' on line " + std::to_string(line_no));
    vals.push_back(*v);
  }
  return vals;
}

}  // namespace detail

/// Header `ssdml-model v1 d l encoder normalize`, then L, A and b row by
/// row in 17 significant digits, then the config and history as JSON lines.
inline void save_model(std::ostream& out, const Model& m) {
  const Matrix& l = m.metric.matrix();
  out << "ssdml-model v1 " << l.rows() << ' ' << l.cols() << ' ' << (m.encoder ? 1 : 0) << ' '
      << (m.encoder && m.encoder->normalize ? 1 : 0) << '\n';
  detail::write_matrix_rows(out, l);
  if (m.encoder) {
    detail::write_matrix_rows(out, m.encoder->a);
    detail::write_matrix_rows(out, m.encoder->b.transpose());
  }
  nlohmann::ordered_json cfg;
  cfg["config"] = to_json(m.config);
  cfg["orth_enforced"] = m.metric.orth_enforced();
  out << cfg.dump() << '\n';
  for (const auto& h : m.history) out << to_json(h).dump() << '\n';
}

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  save_model(out, m);
}

inline Model load_model(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw FormatError("model: empty file");
  std::istringstream hs(line);
  std::string magic, version;
  long d = 0, l = 0;
  int enc = 0, norm = 0;
  if (!(hs >> magic >> version >> d >> l >> enc >> norm) || magic != "ssdml-model" || version != "v1")
    throw FormatError("model: bad header line '" + line + "'");
  if (d < 1 || l < 1 || l > d) throw FormatError("model: bad dimensions in header");

  auto read_row = [&](std::size_t expected) {
    if (!std::getline(in, line)) throw FormatError("model: truncated matrix data");
    ++line_no;
    auto vals = detail::read_numbers(line, line_no);
    if (expected != 0 && vals.size() != expected)
      throw FormatError("model: line " + std::to_string(line_no) + " has " + std::to_string(vals.size()) +
                        " values, expected " + std::to_string(expected));
    return vals;
  };

  Matrix lm(d, l);
  for (long i = 0; i < d; ++i) {
    const auto row = read_row(static_cast<std::size_t>(l));
    for (long j = 0; j < l; ++j) lm(i, j) = row[static_cast<std::size_t>(j)];
  }
  std::optional<Encoder> encoder;
  if (enc) {
    Encoder e;
    e.normalize = norm != 0;
    auto first = read_row(0);
    if (first.empty()) throw FormatError("model: empty encoder row");
    const auto d_in = static_cast<Eigen::Index>(first.size());
    e.a.resize(d, d_in);
    for (Eigen::Index j = 0; j < d_in; ++j) e.a(0, j) = first[static_cast<std::size_t>(j)];
    for (long i = 1; i < d; ++i) {
      const auto row = read_row(static_cast<std::size_t>(d_in));
      for (Eigen::Index j = 0; j < d_in; ++j) e.a(i, j) = row[static_cast<std::size_t>(j)];
    }
    const auto b = read_row(static_cast<std::size_t>(d));
    e.b = Eigen::Map<const Vector>(b.data(), d);
    encoder = std::move(e);
  }

  Model m;
  m.encoder = std::move(encoder);
  bool orth = false;
  bool have_config = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("model: bad JSON on line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (j.contains("config")) {
        m.config = train_config_from_json(j.at("config"));
        orth = j.value("orth_enforced", false);
        have_config = true;
      } else {
        m.history.push_back(history_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("model: bad record on line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_config) throw FormatError("model: missing config record");
  m.metric = MetricL(std::move(lm), orth);
  return m;
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_model(in);
}

// ---------------------------------------------------------------------------
// Evaluation

/// Encoder (if present) -> L -> clustering and retrieval metrics on the
/// labeled rows of `ds`.
inline EvalReport evaluate_checkpoint(const Model& model, const Dataset& ds,
                                      std::span<const int> ks, std::uint64_t seed, int restarts = 10) {
  require_dims(ds.dim() == model.input_dim(), "evaluate_checkpoint: dataset has " +
                                                  std::to_string(ds.dim()) + " features, model expects " +
                                                  std::to_string(model.input_dim()));
  const Dataset labeled = ds.subset(ds.labeled_indices());
  const auto labels = labeled.dense_labels();
  return evaluate_embeddings(model.embed(labeled.features), labels, ks, seed, restarts);
}

inline EvalReport evaluate_checkpoint(const Model& model, const Dataset& ds, std::uint64_t seed = 0) {
  const auto ks = default_recall_ks();
  return evaluate_checkpoint(model, ds, ks, seed, model.config.kmeans_restarts);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

// Rows of a batch gathered into a compact local block.
struct LocalBatch {
  std::vector<Index> nodes;      // partition-local node ids, in first-use order
  std::vector<Triplet> triplets; // re-indexed into `nodes`
};

inline LocalBatch localize(std::span<const Triplet> batch) {
  LocalBatch lb;
  std::unordered_map<Index, Index> pos;
  auto local = [&](Index node) {
    auto [it, inserted] = pos.try_emplace(node, lb.nodes.size());
    if (inserted) lb.nodes.push_back(node);
    return it->second;
  };
  lb.triplets.reserve(batch.size());
  for (const auto& t : batch) {
    const Index a = local(t.anchor);
    const Index p = local(t.positive);
    const Index n = local(t.negative);
    lb.triplets.push_back({a, p, n});
  }
  return lb;
}

inline Matrix gather_rows(const Matrix& x, std::span<const Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (Index r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

// Pair constraint for the baselines: kind +1 similar, -1 dissimilar,
// 0 unlabeled pair (SERAPH) or graph edge (LRML).
struct PairConstraint {
  Index i = 0;
  Index j = 0;
  int kind = 0;
};

inline std::vector<PairConstraint> baseline_constraints(Method method, const std::vector<std::optional<int>>& labels,
                                                        const NeighborGraph& g, std::uint64_t seed) {
  std::vector<PairConstraint> out;
  const Index n = labels.size();
  for (Index i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    for (Index j = i + 1; j < n; ++j)
      if (labels[j]) out.push_back({i, j, *labels[i] == *labels[j] ? 1 : -1});
  }
  if (method == Method::Lrml) {
    // Undirected kNN edges, each once.
    std::vector<std::pair<Index, Index>> edges;
    for (Index i = 0; i < g.n; ++i)
      for (Index j : g.of(i)) edges.emplace_back(std::min(i, j), std::max(i, j));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (const auto& [a, b] : edges) out.push_back({a, b, 0});
  } else {
    std::vector<Index> unl;
    for (Index i = 0; i < n; ++i)
      if (!labels[i]) unl.push_back(i);
    if (unl.size() >= 2) {
      Rng rng(seed);
      std::uniform_int_distribution<Index> pick(0, unl.size() - 1);
      const Index count = n * g.k / 2;
      for (Index c = 0; c < count; ++c) {
        Index a = pick(rng), b = pick(rng);
        while (b == a) b = pick(rng);
        out.push_back({unl[a], unl[b], 0});
      }
    }
  }
  return out;
}

}  // namespace detail

struct TrainObserver {
  std::function<void(const HistoryRecord&)> on_epoch;
  std::function<void(const std::string&)> on_warning;
};

/// log |M| from the eigenvalues; -inf when M is singular.
inline double log_det_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((m + m.transpose()) / 2.0, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (double v : es.eigenvalues()) {
    if (v <= 0.0) return -std::numeric_limits<double>::infinity();
    s += std::log(v);
  }
  return s;
}

/// Resolved dimensions for a config applied to `d_in` input features.
struct TrainShape {
  Index representation_dim = 0;
  Index embed_dim = 0;
};

inline TrainShape resolve_shape(const TrainConfig& cfg, Index d_in) {
  TrainShape s;
  s.representation_dim = cfg.encoder && cfg.encoder_dim > 0 ? static_cast<Index>(cfg.encoder_dim) : d_in;
  if (cfg.method != Method::Ours) {
    s.embed_dim = s.representation_dim;
  } else {
    s.embed_dim = cfg.embed_dim > 0 ? static_cast<Index>(cfg.embed_dim) : (s.representation_dim + 1) / 2;
  }
  require(s.embed_dim <= s.representation_dim, "embed_dim cannot exceed the representation dimension");
  return s;
}

/// Stochastic alternation over partitions: sample a partition, build the
/// kNN graph on the current l2-normalized representations, derive
/// constraints (propagated-affinity triplets for `ours`, labeled pairs
/// plus unlabeled pairs / graph edges for the baselines), then for every
/// mini-batch update the metric with the representation fixed and take one
/// SGD step on the encoder with the metric fixed. After each epoch the
/// model is scored on a stratified validation split; the best epoch by
/// validation R@1 is returned (earliest on ties) with the full history.
inline Model train(const Dataset& ds, const TrainConfig& cfg, const TrainObserver& obs = {}) {
  cfg.validate();
  ds.validate();
  if (ds.labeled_indices().empty()) throw ConfigError("train: dataset has no labeled rows");

  const auto split = split_validation(ds, cfg.validation_fraction, mix_seed(cfg.seed, 1));
  const Dataset& tr = split.train;
  const Dataset& val = split.val;
  if (val.size() < 2) throw ConfigError("train: validation split has fewer than two rows");
  const auto val_labels = val.dense_labels();
  auto warn = [&](const std::string& msg) {
    if (obs.on_warning) obs.on_warning(msg);
  };
  for (const auto& w : split.warnings) warn(w);

  const TrainShape shape = resolve_shape(cfg, ds.dim());
  const AngularConfig angular{cfg.alpha_deg};

  std::optional<Encoder> encoder;
  if (cfg.encoder) encoder = Encoder::identity(ds.dim(), shape.representation_dim, true);

  Matrix l;
  Matrix m_full;  // baselines learn M directly
  const bool ours = cfg.method == Method::Ours;
  if (ours) {
    l = MetricL::random_orthonormal(shape.representation_dim, shape.embed_dim, mix_seed(cfg.seed, 2)).matrix();
  } else {
    m_full = Matrix::Identity(static_cast<Eigen::Index>(shape.representation_dim),
                              static_cast<Eigen::Index>(shape.representation_dim));
    l = m_full;
  }
  const double trace_cap = static_cast<double>(shape.representation_dim);

  auto represent = [&](const Matrix& x) -> Matrix {
    return encoder ? forward(*encoder, x) : x;
  };
  auto snapshot = [&]() {
    Model m;
    m.metric = MetricL(ours ? l : psd_factor(m_full), ours && cfg.orth);
    m.encoder = encoder;
    m.config = cfg;
    return m;
  };
  const std::vector<int> r1_only{1};
  auto validate_now = [&](const Model& m) {
    return evaluate_embeddings(m.embed(val.features), val_labels, r1_only, mix_seed(cfg.seed, 3),
                               cfg.kmeans_restarts);
  };

  std::vector<HistoryRecord> history;
  auto record = [&](const HistoryRecord& h) {
    history.push_back(h);
    if (obs.on_epoch) obs.on_epoch(h);
  };
  {
    const auto rep = validate_now(snapshot());
    record({0, -1, 0.0, rep.nmi, rep.recall_at.at(1)});
  }

  const Index n_unlabeled = tr.unlabeled_indices().size();
  const Index n_p = cfg.partition_size == 0 ? n_unlabeled
                                            : std::min<Index>(n_unlabeled, static_cast<Index>(cfg.partition_size));
  std::optional<Model> best;
  double best_r1 = -std::numeric_limits<double>::infinity();

  int epoch = 0;
  for (int part_no = 0; epoch < cfg.max_epochs; ++part_no) {
    const auto part = sample_partition(tr, n_p, mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(part_no)));
    const auto nodes = part.nodes();
    const Dataset pd = tr.subset(nodes);
    if (static_cast<Index>(cfg.k) >= pd.size())
      throw ConfigError("train: k=" + std::to_string(cfg.k) + " needs more than " + std::to_string(pd.size()) +
                        " partition nodes");

    const Matrix rep = represent(pd.features);
    const NeighborGraph g = build_knn(encoder ? rep : normalize_rows(rep), static_cast<Index>(cfg.k), cfg.threads);

    std::vector<Triplet> triplets;
    std::vector<detail::PairConstraint> pairs;
    if (ours) {
      const Matrix w0 = seed_affinity(pd.labels);
      PropagationOptions popt;
      popt.gamma = cfg.gamma;
      const AffinityMatrix w = propagate(g, w0, popt);
      triplets = mine_triplets(w.values, g);
      if (triplets.empty()) throw DataError("train: no triplets mined");
    } else {
      pairs = detail::baseline_constraints(cfg.method, pd.labels, g, mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(part_no)));
      if (pairs.empty()) throw DataError("train: no pair constraints in partition");
    }

    for (int pe = 0; pe < cfg.epochs_per_partition && epoch < cfg.max_epochs; ++pe) {
      ++epoch;
      const std::uint64_t epoch_seed = mix_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch));
      double loss_sum = 0.0;
      Index batches_run = 0;

      if (ours) {
        for (const auto& batch : batch_triplets(triplets, static_cast<Index>(cfg.batch_triplets), epoch_seed)) {
          const auto lb = detail::localize(batch);
          const Matrix xb = detail::gather_rows(pd.features, lb.nodes);
          const Matrix zb = represent(xb);
          const Objective f = [&](const Matrix& lm) {
            auto ev = angular_objective(lm, zb, lb.triplets, angular, true);
            return Evaluation{ev.loss, std::move(ev.grad_l)};
          };
          double batch_loss = 0.0;
          if (cfg.inner_L_iters > 0) {
            OptimizerOptions oo;
            oo.max_iter = cfg.inner_L_iters;
            oo.orthogonal = cfg.orth;
            auto res = optimize_L(l, f, oo);
            batch_loss = res.initial_value;
            l = std::move(res.l);
          } else {
            batch_loss = angular_loss(l, zb, lb.triplets, angular);
          }
          if (encoder && cfg.lr > 0.0) {
            const Matrix gz = angular_loss_grad_embeddings(l, zb, lb.triplets, angular);
            encoder = sgd_update(*encoder, backward(*encoder, xb, gz), cfg.lr);
          }
          loss_sum += batch_loss;
          ++batches_run;
          if (!std::isfinite(batch_loss) || !l.allFinite() || (encoder && !encoder->a.allFinite()))
            throw DivergenceError("train: loss diverged at epoch " + std::to_string(epoch), history);
        }
      } else {
        Rng rng(epoch_seed);
        auto shuffled = pairs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto bs = static_cast<Index>(cfg.batch_triplets);
        for (Index start = 0; start < shuffled.size(); start += bs) {
          const Index end = std::min(shuffled.size(), start + bs);
          std::vector<Index> local_nodes;
          std::unordered_map<Index, Index> pos;
          auto local = [&](Index node) {
            auto [it, inserted] = pos.try_emplace(node, local_nodes.size());
            if (inserted) local_nodes.push_back(node);
            return it->second;
          };
          std::vector<LabeledPair> lab;
          std::vector<IndexPair> unl;
          std::vector<WeightedPair> weighted;
          for (Index c = start; c < end; ++c) {
            const auto& pc = shuffled[c];
            const Index a = local(pc.i), b = local(pc.j);
            if (cfg.method == Method::Seraph) {
              if (pc.kind == 0) unl.push_back({a, b});
              else lab.push_back({a, b, pc.kind});
            } else {
              const double w = pc.kind > 0 ? cfg.lrml.gamma_s : pc.kind < 0 ? -cfg.lrml.gamma_d : 1.0;
              weighted.push_back({a, b, w});
            }
          }
          const Matrix xb = detail::gather_rows(pd.features, local_nodes);
          const Matrix zb = represent(xb);
          Objective f;
          PsdOptions po;
          po.max_iter = cfg.inner_L_iters;
          if (cfg.method == Method::Seraph) {
            f = [&](const Matrix& m) {
              return Evaluation{seraph_objective(m, zb, lab, unl, cfg.seraph), seraph_gradient(m, zb, lab, unl, cfg.seraph)};
            };
          } else {
            f = [&](const Matrix& m) {
              return Evaluation{weighted_pair_objective(m, zb, weighted), weighted_pair_gradient(zb, weighted)};
            };
            po.project = [trace_cap](const Matrix& m) { return project_psd_trace(m, trace_cap); };
          }
          double batch_loss = f(m_full).value;
          if (cfg.inner_L_iters > 0) m_full = optimize_psd(m_full, f, po).m;
          if (encoder && cfg.lr > 0.0) {
            const Matrix gz = cfg.method == Method::Seraph
                                  ? seraph_grad_embeddings(m_full, zb, lab, unl, cfg.seraph)
                                  : weighted_pair_grad_embeddings(m_full, zb, weighted);
            encoder = sgd_update(*encoder, backward(*encoder, xb, gz), cfg.lr);
          }
          loss_sum += batch_loss;
          ++batches_run;
          if (!std::isfinite(batch_loss) || !m_full.allFinite() || (encoder && !encoder->a.allFinite()))
            throw DivergenceError("train: loss diverged at epoch " + std::to_string(epoch), history);
        }
      }

      Model current = snapshot();
      const auto rep_val = validate_now(current);
      const HistoryRecord h{epoch, part_no, loss_sum / static_cast<double>(std::max<Index>(1, batches_run)),
                            rep_val.nmi, rep_val.recall_at.at(1)};
      record(h);
      // LRML's log|M| >= 0 constraint is not enforced, only reported.
      if (cfg.method == Method::Lrml) {
        const double ld = log_det_psd(m_full);
        if (ld < 0.0)
          warn("lrml: log|M| = " + std::to_string(ld) + " < 0 after epoch " + std::to_string(epoch) +
               " (constraint not enforced)");
      }
      if (h.val_r1 > best_r1) {
        best_r1 = h.val_r1;
        best = std::move(current);
      }
    }
  }

  Model out = std::move(*best);
  out.history = std::move(history);
  return out;
}

}  // namespace ssdml
