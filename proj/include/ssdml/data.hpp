#pragma once

#include "ssdml/common.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ssdml {

/// Feature matrix (one example per row) with optional dense integer labels.
///
/// `ids` holds the row index each example had in the file it was loaded
/// from, so subsets (partitions, validation splits) stay traceable.
struct Dataset {
  Matrix features;
  std::vector<std::optional<int>> labels;
  int num_classes = 0;
  std::vector<Index> ids;

  Index size() const { return static_cast<Index>(features.rows()); }
  Index dim() const { return static_cast<Index>(features.cols()); }
  bool labeled(Index i) const { return labels[i].has_value(); }

  std::vector<Index> labeled_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < size(); ++i)
      if (labels[i]) out.push_back(i);
    return out;
  }

  std::vector<Index> unlabeled_indices() const {
    std::vector<Index> out;
    for (Index i = 0; i < size(); ++i)
      if (!labels[i]) out.push_back(i);
    return out;
  }

  /// Rows `rows` in the given order; num_classes is inherited.
  Dataset subset(std::span<const Index> rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (Index r = 0; r < rows.size(); ++r) {
      out.features.row(static_cast<Eigen::Index>(r)) =
          features.row(static_cast<Eigen::Index>(rows[r]));
      out.labels.push_back(labels[rows[r]]);
      out.ids.push_back(ids[rows[r]]);
    }
    out.num_classes = num_classes;
    return out;
  }

  /// Label vector with unlabeled rows dropped; throws if any row is unlabeled.
  std::vector<int> dense_labels() const {
    std::vector<int> out;
    out.reserve(size());
    for (Index i = 0; i < size(); ++i) {
      if (!labels[i])
        throw DataError("row " + std::to_string(i) + " has no label");
      out.push_back(*labels[i]);
    }
    return out;
  }

  void validate() const {
    require_dims(labels.size() == size() && ids.size() == size(),
                 "dataset: labels/ids length differs from row count");
    require_dims(size() == 0 || dim() >= 1, "dataset: feature dimension must be >= 1");
    bool any = false;
    for (const auto& y : labels) {
      if (!y) continue;
      any = true;
      if (*y < 0 || *y >= num_classes)
        throw DataError("dataset: label " + std::to_string(*y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
    if (any && num_classes < 2) throw DataError("dataset: fewer than two classes");
  }
};

/// Labeled rows first, then a uniform sample of unlabeled rows.
struct Partition {
  std::vector<Index> labeled_idx;
  std::vector<Index> unlabeled_idx;

  Index size() const { return labeled_idx.size() + unlabeled_idx.size(); }

  /// Node order used by the graph: labeled rows, then sampled unlabeled rows.
  std::vector<Index> nodes() const {
    std::vector<Index> out = labeled_idx;
    out.insert(out.end(), unlabeled_idx.begin(), unlabeled_idx.end());
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_nonneg_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || v < 0)
    return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return buf.data();
}

}  // namespace detail

/// Parse a CSV file with a header row. Every column except `label_column`
/// is a feature. Empty label cells mark unlabeled rows. Labels that are all
/// non-negative integers are kept as-is (C = max + 1); otherwise distinct
/// strings are numbered by first appearance.
inline Dataset load_csv(std::istream& in, const std::string& label_column = "label") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("csv: missing header row");
  const auto header = detail::split_csv(line);
  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (!label_column.empty() && header[c] == label_column) label_col = c;
  const std::size_t n_cols = header.size();
  const std::size_t d = n_cols - (label_col ? 1 : 0);
  if (d == 0) throw FormatError("csv: no feature columns");

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv(line);
    if (cells.size() != n_cols)
      throw FormatError("csv: row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(n_cols));
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (label_col && c == *label_col) {
        raw_labels.emplace_back(cells[c]);
        continue;
      }
      const auto v = detail::parse_double(cells[c]);
      if (!v)
        throw ParseError("csv: non-numeric cell at row " + std::to_string(row) +
                         ", column " + std::to_string(c + 1) + " ('" +
                         std::string(header[c]) + "'): '" + std::string(cells[c]) + "'");
      values.push_back(*v);
    }
  }

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < row; ++r)
    for (std::size_t c = 0; c < d; ++c)
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          values[r * d + c];
  ds.ids.resize(row);
  std::iota(ds.ids.begin(), ds.ids.end(), Index{0});
  ds.labels.assign(row, std::nullopt);

  if (label_col) {
    bool all_int = true;
    for (const auto& s : raw_labels)
      if (!s.empty() && !detail::parse_nonneg_int(s)) all_int = false;
    std::unordered_map<std::string, int> codes;
    int max_label = -1;
    for (std::size_t r = 0; r < row; ++r) {
      const auto& s = raw_labels[r];
      if (s.empty()) continue;
      int y = 0;
      if (all_int) {
        const long long v = *detail::parse_nonneg_int(s);
        if (v > 1'000'000'000) throw ParseError("csv: label out of range at row " + std::to_string(r + 1));
        y = static_cast<int>(v);
      } else {
        auto [it, inserted] = codes.try_emplace(s, static_cast<int>(codes.size()));
        y = it->second;
      }
      ds.labels[r] = y;
      max_label = std::max(max_label, y);
    }
    ds.num_classes = max_label + 1;
  }
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& label_column = "label") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_csv(in, label_column);
}

/// Header `f0..f{d-1}[,label]`, 17 significant digits per value.
inline void write_csv(std::ostream& out, const Dataset& ds, bool with_labels = true) {
  for (Index c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << 'f' << c;
  if (with_labels) out << ",label";
  out << '\n';
  for (Index r = 0; r < ds.size(); ++r) {
    for (Index c = 0; c < ds.dim(); ++c)
      out << (c ? "," : "")
          << detail::format_double(ds.features(static_cast<Eigen::Index>(r),
                                                static_cast<Eigen::Index>(c)));
    if (with_labels) {
      out << ',';
      if (ds.labels[r]) out << *ds.labels[r];
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& ds, bool with_labels = true) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_csv(out, ds, with_labels);
}

// ---------------------------------------------------------------------------
// IDX (MNIST) files

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t off,
                               const char* what) {
  if (off + 4 > bytes.size()) throw FormatError(std::string("truncated header in ") + what);
  return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
         (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
}

inline void write_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

}  // namespace detail

/// Decode an IDX image/label pair from memory. Pixels are scaled to [0, 1].
inline Dataset parse_idx(std::span<const unsigned char> images,
                         std::span<const unsigned char> labels) {
  if (detail::read_be32(images, 0, "images") != kIdxImageMagic)
    throw FormatError("wrong magic for images");
  if (detail::read_be32(labels, 0, "labels") != kIdxLabelMagic)
    throw FormatError("wrong magic for labels");
  const std::size_t n = detail::read_be32(images, 4, "images");
  const std::size_t rows = detail::read_be32(images, 8, "images");
  const std::size_t cols = detail::read_be32(images, 12, "images");
  const std::size_t n_labels = detail::read_be32(labels, 4, "labels");
  if (n != n_labels)
    throw FormatError("count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");
  const std::size_t d = rows * cols;
  if (d == 0) throw FormatError("images have zero pixels");
  if (images.size() < 16 + n * d) throw FormatError("truncated image payload");
  if (labels.size() < 8 + n) throw FormatError("truncated label payload");

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(n);
  ds.ids.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < d; ++p)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          images[16 + i * d + p] / 255.0;
    const int y = labels[8 + i];
    ds.labels[i] = y;
    max_label = std::max(max_label, y);
    ds.ids[i] = i;
  }
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

inline Dataset parse_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = detail::read_all(images_path);
  const auto labels = detail::read_all(labels_path);
  return parse_idx(images, labels);
}

/// Encode images (values in [0,1], rounded to bytes) and labels as IDX.
inline std::pair<std::vector<unsigned char>, std::vector<unsigned char>> encode_idx(
    const Matrix& pixels, std::span<const int> labels, std::uint32_t rows,
    std::uint32_t cols) {
  require_dims(static_cast<std::size_t>(pixels.cols()) == std::size_t{rows} * cols,
               "encode_idx: pixel count differs from rows*cols");
  require_dims(static_cast<std::size_t>(pixels.rows()) == labels.size(),
               "encode_idx: label count differs from image count");
  std::vector<unsigned char> img, lab;
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(pixels.rows()));
  detail::write_be32(img, rows);
  detail::write_be32(img, cols);
  for (Eigen::Index i = 0; i < pixels.rows(); ++i)
    for (Eigen::Index p = 0; p < pixels.cols(); ++p)
      img.push_back(static_cast<unsigned char>(
          std::lround(std::clamp(pixels(i, p), 0.0, 1.0) * 255.0)));
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) lab.push_back(static_cast<unsigned char>(y));
  return {std::move(img), std::move(lab)};
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Gaussian class blobs hidden among nuisance dimensions.
///
/// Class c has mean `s * sign * e_{c mod d_signal}` in the first d_signal
/// dims, where sign alternates every d_signal classes and s grows by
/// signal_sep every 2*d_signal classes, so up to 2*d_signal classes sit on
/// distinct one-hot axes. Signal noise is unit variance; the d_noise
/// trailing dims are N(0, noise_sigma^2) regardless of class. Rows are
/// class-major and every row is labeled.
inline Dataset make_blobs(int n_classes, int per_class, int d_signal, int d_noise,
                          double signal_sep, double noise_sigma, std::uint64_t seed) {
  require(n_classes >= 1 && per_class >= 1 && d_signal >= 1 && d_noise >= 0,
          "make_blobs: counts must be >= 1");
  const int d = d_signal + d_noise;
  const Index n = static_cast<Index>(n_classes) * static_cast<Index>(per_class);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), d);
  ds.labels.resize(n);
  ds.ids.resize(n);
  Index row = 0;
  for (int c = 0; c < n_classes; ++c) {
    const int axis = c % d_signal;
    const int block = c / d_signal;
    const double sign = block % 2 == 0 ? 1.0 : -1.0;
    const double scale = signal_sep * static_cast<double>(1 + block / 2);
    for (int p = 0; p < per_class; ++p, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      for (int j = 0; j < d_signal; ++j) ds.features(r, j) = normal(rng);
      ds.features(r, axis) += sign * scale;
      for (int j = 0; j < d_noise; ++j) ds.features(r, d_signal + j) = noise_sigma * normal(rng);
      ds.labels[row] = c;
      ds.ids[row] = row;
    }
  }
  ds.num_classes = n_classes;
  return ds;
}

/// Keep labels on `per_class` uniformly chosen rows of each class; strip the rest.
inline Dataset mask_labels(const Dataset& ds, int per_class, std::uint64_t seed) {
  require(per_class >= 0, "mask_labels: per_class must be >= 0");
  Dataset out = ds;
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < ds.size(); ++i)
    if (ds.labels[i]) by_class[*ds.labels[i]].push_back(i);
  for (auto& lab : out.labels) lab.reset();
  Rng rng(seed);
  for (auto& [cls, rows] : by_class) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const Index keep = std::min<Index>(rows.size(), static_cast<Index>(per_class));
    for (Index i = 0; i < keep; ++i) out.labels[rows[i]] = cls;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partitions and validation

/// All labeled rows plus `n_unlabeled` unlabeled rows drawn uniformly
/// without replacement.
inline Partition sample_partition(const Dataset& ds, Index n_unlabeled, std::uint64_t seed) {
  Partition part;
  part.labeled_idx = ds.labeled_indices();
  if (part.labeled_idx.empty()) throw ConfigError("sample_partition: dataset has no labeled rows");
  std::vector<Index> pool = ds.unlabeled_indices();
  if (n_unlabeled > pool.size())
    throw ConfigError("sample_partition: requested " + std::to_string(n_unlabeled) +
                      " unlabeled rows but only " + std::to_string(pool.size()) + " exist");
  Rng rng(seed);
  // Partial Fisher-Yates: the first n_unlabeled slots become the sample.
  for (Index i = 0; i < n_unlabeled; ++i) {
    std::uniform_int_distribution<Index> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n_unlabeled);
  part.unlabeled_idx = std::move(pool);
  return part;
}

struct ValidationSplit {
  Dataset train;
  Dataset val;
  std::vector<std::string> warnings;
};

/// Move ceil(fraction * count) labeled rows of every class into `val`.
/// Classes with fewer than two labeled rows stay whole in `train` (with a
/// warning); at least one row per class always remains in `train`.
inline ValidationSplit split_validation(const Dataset& ds, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, "split_validation: fraction must be in (0, 1)");
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < ds.size(); ++i)
    if (ds.labels[i]) by_class[*ds.labels[i]].push_back(i);

  ValidationSplit split;
  std::vector<char> to_val(ds.size(), 0);
  Rng rng(seed);
  for (auto& [cls, rows] : by_class) {
    if (rows.size() < 2) {
      split.warnings.push_back("class " + std::to_string(cls) +
                               " has fewer than 2 labeled rows; kept in train");
      continue;
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    // The epsilon keeps products like 0.15 * 20 from rounding up past 3.
    auto take = static_cast<Index>(std::ceil(fraction * static_cast<double>(rows.size()) - 1e-9));
    take = std::clamp<Index>(take, 1, rows.size() - 1);
    for (Index i = 0; i < take; ++i) to_val[rows[i]] = 1;
  }
  std::vector<Index> train_rows, val_rows;
  for (Index i = 0; i < ds.size(); ++i) (to_val[i] ? val_rows : train_rows).push_back(i);
  split.train = ds.subset(train_rows);
  split.val = ds.subset(val_rows);
  return split;
}

}  // namespace ssdml
