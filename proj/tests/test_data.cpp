#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace ssdml;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return load_csv(in);
}

}  // namespace

TEST(LoadCsv, MixedLabels) {
  const auto ds = parse("f0,f1,label\n1,2,0\n3,4,\n5,6,1\n");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.labeled_indices().size(), 2u);
  EXPECT_EQ(ds.unlabeled_indices(), std::vector<Index>{1});
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_DOUBLE_EQ(ds.features(2, 1), 6.0);
}

TEST(LoadCsv, NoLabelColumn) {
  const auto ds = parse("f0,f1\n1,2\n3,4\n");
  EXPECT_EQ(ds.unlabeled_indices().size(), 2u);
  EXPECT_EQ(ds.num_classes, 0);
}

TEST(LoadCsv, RaggedRowNamed) {
  try {
    parse("a,b\n1.0,2.0\n1.0\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, NonNumericCell) {
  try {
    parse("a,b\n1.0,x\n");
    FAIL();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, StringLabelsByFirstAppearance) {
  const auto ds = parse("f0,label\n1,cat\n2,dog\n3,cat\n4,\n");
  EXPECT_EQ(*ds.labels[0], 0);
  EXPECT_EQ(*ds.labels[1], 1);
  EXPECT_EQ(*ds.labels[2], 0);
  EXPECT_FALSE(ds.labels[3]);
  EXPECT_EQ(ds.num_classes, 2);
}

TEST(LoadCsv, RoundTripBitExact) {
  std::mt19937_64 rng(11);
  Dataset ds = make_blobs(3, 4, 2, 3, 2.0, 1.5, 5);
  ds.features += oracle::gaussian(ds.features.rows(), ds.features.cols(), rng, 1e-7);
  ds.labels[3].reset();
  std::ostringstream out;
  write_csv(out, ds);
  std::istringstream in(out.str());
  const auto back = load_csv(in);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_TRUE((back.features.array() == ds.features.array()).all());
  EXPECT_EQ(back.labels, ds.labels);
  std::ostringstream again;
  write_csv(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Idx, DecodeAndScale) {
  Matrix px = Matrix::Zero(10, 28 * 28);
  px(0, 0) = 1.0;
  px(3, 5) = 128.0 / 255.0;
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto [img, lab] = encode_idx(px, labels, 28, 28);
  const auto ds = parse_idx(img, lab);
  EXPECT_EQ(ds.size(), 10u);
  EXPECT_EQ(ds.dim(), 784u);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_EQ(ds.features(0, 0), 1.0);
  EXPECT_EQ(ds.features(3, 5), 128.0 / 255.0);
}

TEST(Idx, ClassCountFromMaxLabel) {
  const auto [img, lab] = encode_idx(Matrix::Zero(3, 4), std::vector<int>{0, 4, 2}, 2, 2);
  EXPECT_EQ(parse_idx(img, lab).num_classes, 5);
}

TEST(Idx, WrongMagic) {
  auto [img, lab] = encode_idx(Matrix::Zero(2, 4), std::vector<int>{0, 1}, 2, 2);
  img[3] = 0x01;
  try {
    parse_idx(img, lab);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_STREQ(e.what(), "wrong magic for images");
  }
}

TEST(Idx, CountMismatchAndTruncation) {
  auto [img, lab] = encode_idx(Matrix::Zero(2, 4), std::vector<int>{0, 1}, 2, 2);
  auto [img3, lab3] = encode_idx(Matrix::Zero(3, 4), std::vector<int>{0, 1, 1}, 2, 2);
  EXPECT_THROW(parse_idx(img, lab3), DataError);
  img.pop_back();
  EXPECT_THROW(parse_idx(img, lab), DataError);
}

TEST(Blobs, TwoClustersSeparated) {
  const auto ds = make_blobs(2, 5, 2, 0, 10.0, 1.0, 3);
  ASSERT_EQ(ds.size(), 10u);
  const Vector m0 = ds.features.topRows(5).colwise().mean();
  const Vector m1 = ds.features.bottomRows(5).colwise().mean();
  // Means at 10*e0 and 10*e1; sample means of 5 unit-variance points.
  EXPECT_NEAR((m0 - m1).norm(), 10.0 * std::sqrt(2.0), 2.5);
}

TEST(Blobs, Deterministic) {
  const auto a = make_blobs(4, 10, 3, 5, 6.0, 4.0, 9);
  const auto b = make_blobs(4, 10, 3, 5, 6.0, 4.0, 9);
  EXPECT_TRUE((a.features.array() == b.features.array()).all());
  EXPECT_EQ(a.labels, b.labels);
}

// Brute-force 1-NN purity: all 50 dims vs the 5 signal dims.
TEST(Blobs, NuisanceDimsHurtPurity) {
  const auto ds = make_blobs(10, 200, 5, 45, 6.0, 4.0, 7);
  ASSERT_EQ(ds.size(), 2000u);
  ASSERT_EQ(ds.dim(), 50u);
  const auto labels = ds.dense_labels();
  auto purity = [&](const Matrix& z) {
    const auto nn = oracle::knn(z, 1);
    int same = 0;
    for (Index i = 0; i < nn.size(); ++i) same += labels[nn[i][0]] == labels[i];
    return same / double(nn.size());
  };
  const double all = purity(ds.features);
  const double signal = purity(ds.features.leftCols(5));
  EXPECT_LT(all + 0.3, signal) << all << " vs " << signal;
}

TEST(Partition, Sizes) {
  Dataset ds = make_blobs(2, 50, 2, 0, 1.0, 1.0, 0);
  ds = mask_labels(ds, 3, 1);
  const auto p = sample_partition(ds, 40, 2);
  EXPECT_EQ(p.labeled_idx.size(), 6u);
  EXPECT_EQ(p.unlabeled_idx.size(), 40u);
  EXPECT_EQ(sample_partition(ds, 94, 2).size(), 100u);
  EXPECT_EQ(sample_partition(ds, 0, 2).size(), 6u);
  EXPECT_THROW(sample_partition(ds, 95, 2), ConfigError);
}

TEST(Partition, NoLabelsIsConfigError) {
  Dataset ds = mask_labels(make_blobs(2, 5, 2, 0, 1.0, 1.0, 0), 0, 1);
  EXPECT_THROW(sample_partition(ds, 1, 0), ConfigError);
}

TEST(Partition, DistinctAndDisjoint) {
  Dataset ds = mask_labels(make_blobs(3, 30, 2, 0, 1.0, 1.0, 0), 2, 4);
  const auto p = sample_partition(ds, 50, 8);
  std::vector<Index> all = p.nodes();
  std::sort(all.begin(), all.end());
  EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  for (Index i : p.unlabeled_idx) EXPECT_FALSE(ds.labeled(i));
}

TEST(Partition, UniformOverSeeds) {
  Dataset ds = mask_labels(make_blobs(2, 25, 2, 0, 1.0, 1.0, 0), 2, 1);
  const auto pool = ds.unlabeled_indices();
  const Index np = 12;
  const int trials = 10000;
  std::map<Index, int> count;
  for (int s = 0; s < trials; ++s)
    for (Index i : sample_partition(ds, np, static_cast<std::uint64_t>(s)).unlabeled_idx) ++count[i];
  const double p = double(np) / double(pool.size());
  const double sigma = std::sqrt(trials * p * (1 - p));
  for (Index i : pool) EXPECT_NEAR(count[i], trials * p, 3 * sigma) << "row " << i;
}

TEST(Validation, FifteenPercentPerClass) {
  Dataset ds = mask_labels(make_blobs(10, 40, 2, 0, 1.0, 1.0, 0), 20, 3);
  const auto split = split_validation(ds, 0.15, 1);
  EXPECT_EQ(split.val.size(), 30u);
  std::map<int, int> per;
  for (const auto& l : split.val.labels) ++per[*l];
  for (const auto& [c, n] : per) EXPECT_EQ(n, 3) << "class " << c;
  EXPECT_EQ(split.train.size() + split.val.size(), ds.size());
}

TEST(Validation, HalfOfTwo) {
  Dataset ds = mask_labels(make_blobs(3, 5, 2, 0, 1.0, 1.0, 0), 2, 3);
  const auto split = split_validation(ds, 0.5, 1);
  EXPECT_EQ(split.val.size(), 3u);
  EXPECT_EQ(split.train.labeled_indices().size(), 3u);
  EXPECT_EQ(split.val.unlabeled_indices().size(), 0u);
}

TEST(Validation, EveryRowOnceAndSingletonWarning) {
  Dataset ds = mask_labels(make_blobs(3, 10, 2, 0, 1.0, 1.0, 0), 4, 3);
  // class 2 keeps one labeled row
  int seen = 0;
  for (auto& l : ds.labels)
    if (l && *l == 2 && seen++ > 0) l.reset();
  const auto split = split_validation(ds, 0.3, 5);
  EXPECT_EQ(split.warnings.size(), 1u);
  std::vector<Index> ids = split.train.ids;
  ids.insert(ids.end(), split.val.ids.begin(), split.val.ids.end());
  std::sort(ids.begin(), ids.end());
  for (Index i = 0; i < ids.size(); ++i) EXPECT_EQ(ids[i], i);
  for (const auto& l : split.val.labels) EXPECT_NE(*l, 2);
}
