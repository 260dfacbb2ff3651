#include "oracles.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <sstream>

using namespace ssdml;

namespace {

Dataset small_blobs(std::uint64_t seed = 0) {
  return mask_labels(make_blobs(3, 40, 2, 2, 5.0, 1.0, seed), 10, 1);
}

TrainConfig small_config() {
  TrainConfig c;
  c.k = 4;
  c.partition_size = 40;
  c.epochs_per_partition = 2;
  c.max_epochs = 4;
  c.batch_triplets = 40;
  c.inner_L_iters = 3;
  c.lr = 1e-3;
  c.kmeans_restarts = 2;
  c.validation_fraction = 0.3;
  return c;
}

}  // namespace

TEST(Trainer, NoOpKeepsInitialMetric) {
  const Dataset ds = small_blobs();
  TrainConfig c = small_config();
  c.encoder = false;
  c.orth = false;
  c.inner_L_iters = 0;
  const Model m = train(ds, c);
  EXPECT_EQ(m.metric.matrix(), MetricL::random_orthonormal(4, 2, mix_seed(c.seed, 2)).matrix());
  EXPECT_FALSE(m.encoder.has_value());
  ASSERT_EQ(m.history.size(), 5u);
  for (const auto& h : m.history) {
    EXPECT_EQ(h.val_nmi, m.history[0].val_nmi);
    EXPECT_EQ(h.val_r1, m.history[0].val_r1);
  }
}

TEST(Trainer, HistoryShapeAndOrthonormality) {
  const Dataset ds = small_blobs();
  std::vector<HistoryRecord> seen;
  const Model m = train(ds, small_config(), {[&](const HistoryRecord& h) { seen.push_back(h); }, nullptr});
  EXPECT_EQ(seen, m.history);
  ASSERT_EQ(m.history.size(), 5u);
  for (int e = 0; e <= 4; ++e) EXPECT_EQ(m.history[e].epoch, e);
  EXPECT_EQ(m.history[0].partition, -1);
  EXPECT_EQ(m.history[1].partition, 0);
  EXPECT_EQ(m.history[3].partition, 1);
  EXPECT_LT(m.metric.orthonormality_error(), 1e-8);
  EXPECT_TRUE(m.encoder.has_value());
  EXPECT_EQ(m.metric.matrix().cols(), 2);
}

TEST(Trainer, Deterministic) {
  const Dataset ds = small_blobs();
  const Model a = train(ds, small_config());
  const Model b = train(ds, small_config());
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.metric.matrix(), b.metric.matrix());
  EXPECT_EQ(a.encoder->a, b.encoder->a);
}

TEST(Trainer, BaselinesRun) {
  const Dataset ds = small_blobs();
  for (Method meth : {Method::Seraph, Method::Lrml}) {
    TrainConfig c = small_config();
    c.method = meth;
    const Model m = train(ds, c);
    EXPECT_EQ(m.history.size(), 5u) << to_string(meth);
    EXPECT_EQ(m.metric.matrix().rows(), 4);
    for (const auto& h : m.history) EXPECT_TRUE(std::isfinite(h.loss));
  }
}

TEST(Trainer, ConfigErrors) {
  const Dataset ds = small_blobs();
  TrainConfig c = small_config();
  c.k = 3;
  EXPECT_THROW(train(ds, c), ConfigError);
  c = small_config();
  c.gamma = 1.0;
  EXPECT_THROW(train(ds, c), ConfigError);
  c = small_config();
  c.embed_dim = 9;
  EXPECT_THROW(train(ds, c), ConfigError);
  EXPECT_THROW(parse_method("lmnn"), ConfigError);
  Dataset unl = ds;
  for (auto& y : unl.labels) y.reset();
  EXPECT_THROW(train(unl, small_config()), ConfigError);
}

TEST(Trainer, DivergenceCarriesHistory) {
  const Dataset ds = small_blobs();
  TrainConfig c = small_config();
  c.lr = std::numeric_limits<double>::infinity();
  c.orth = false;
  try {
    train(ds, c);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    ASSERT_FALSE(e.history.empty());
    EXPECT_EQ(e.history[0].epoch, 0);
  }
}

TEST(ModelFile, RoundTripIsExact) {
  const Dataset ds = small_blobs();
  const Model m = train(ds, small_config());
  std::stringstream ss;
  save_model(ss, m);
  const Model back = load_model(ss);
  EXPECT_EQ(back.metric.matrix(), m.metric.matrix());
  EXPECT_EQ(back.encoder->a, m.encoder->a);
  EXPECT_EQ(back.encoder->b, m.encoder->b);
  EXPECT_EQ(back.encoder->normalize, m.encoder->normalize);
  EXPECT_EQ(back.history, m.history);
  EXPECT_EQ(to_json(back.config), to_json(m.config));
  EXPECT_EQ(back.metric.orth_enforced(), m.metric.orth_enforced());
}

TEST(ModelFile, BadInput) {
  std::stringstream empty;
  EXPECT_THROW(load_model(empty), FormatError);
  std::stringstream header("not-a-model v1 2 1 0 0\n");
  EXPECT_THROW(load_model(header), FormatError);
  std::stringstream truncated("ssdml-model v1 2 1 0 0\n1\n");
  EXPECT_THROW(load_model(truncated), FormatError);
  std::stringstream no_config("ssdml-model v1 2 1 0 0\n1\n0\n");
  EXPECT_THROW(load_model(no_config), FormatError);
  std::stringstream bad_number("ssdml-model v1 2 1 0 0\n1\nx\n");
  EXPECT_THROW(load_model(bad_number), ParseError);
}

TEST(Checkpoint, IdentityMatchesRawMetrics) {
  const Dataset ds = make_blobs(3, 20, 2, 1, 4.0, 1.0, 5);
  Model m;
  m.metric = MetricL::identity(3);
  const auto ks = default_recall_ks();
  const auto got = evaluate_checkpoint(m, ds, ks, 7, 3);
  const auto labels = ds.dense_labels();
  const auto raw = evaluate_embeddings(ds.features, labels, ks, 7, 3);
  EXPECT_EQ(to_json(got), to_json(raw));
  EXPECT_EQ(to_json(got), to_json(evaluate_checkpoint(m, ds, ks, 7, 3)));
  for (int k : ks) EXPECT_NEAR(got.recall_at.at(k), oracle::recall(ds.features, labels, k), 1e-12);

  Model wrong;
  wrong.metric = MetricL::identity(4);
  EXPECT_THROW(evaluate_checkpoint(wrong, ds, ks, 7, 3), DimensionError);
}

TEST(Checkpoint, SkipsUnlabeledRows) {
  const Dataset full = make_blobs(3, 20, 2, 1, 4.0, 1.0, 5);
  const Dataset masked = mask_labels(full, 5, 2);
  Model m;
  m.metric = MetricL::identity(3);
  const auto ks = default_recall_ks();
  const auto got = evaluate_checkpoint(m, masked, ks, 0, 2);
  EXPECT_EQ(got.n_test, 15);
}

TEST(Trainer, LogDetHelper) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 2.0;
  m(1, 1) = 0.5;
  EXPECT_NEAR(log_det_psd(m), 0.0, 1e-15);
  m(1, 1) = 0.0;
  EXPECT_EQ(log_det_psd(m), -std::numeric_limits<double>::infinity());
}

TEST(Trainer, WarningsOnlyFromLrml) {
  const Dataset ds = small_blobs();
  for (Method meth : {Method::Ours, Method::Lrml}) {
    TrainConfig c = small_config();
    c.method = meth;
    std::vector<std::string> warnings;
    TrainObserver obs;
    obs.on_warning = [&](const std::string& w) { warnings.push_back(w); };
    train(ds, c, obs);
    if (meth == Method::Ours) {
      EXPECT_TRUE(warnings.empty());
    }
    for (const auto& w : warnings) EXPECT_EQ(w.rfind("lrml: log|M|", 0), 0u) << w;
  }
  // One singleton class in the labeled set: the split reports it.
  Dataset odd = small_blobs();
  int kept = 0;
  for (auto& y : odd.labels) {
    if (y && *y == 2 && kept++ > 0) y.reset();
  }
  std::vector<std::string> warnings;
  train(odd, small_config(), {nullptr, [&](const std::string& w) { warnings.push_back(w); }});
  ASSERT_FALSE(warnings.empty());
  EXPECT_NE(warnings[0].find("class 2"), std::string::npos);
}
