#pragma once

// Datasets: synthetic generators, label-noise injection, MNIST IDX files and CSV I/O.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "discrim/errors.hpp"
#include "discrim/rng.hpp"

namespace discrim {

enum class Task { Classification, Regression };

/**
 * N samples of dimension `dim`, stored row-major.
 *
 * `labels` are the training targets (possibly corrupted); `clean_labels` the originals.
 * Class labels are stored as integral doubles. `ids` are 0..N-1 and key per-sample
 * training state.
 */
struct Dataset {
  Task task = Task::Classification;
  std::size_t dim = 0;
  std::size_t classes = 0;  // 0 for regression
  std::vector<double> features;
  std::vector<double> labels;
  std::vector<double> clean_labels;
  std::vector<std::uint8_t> noisy;
  std::vector<std::size_t> ids;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  std::size_t noisy_count() const {
    return static_cast<std::size_t>(std::count(noisy.begin(), noisy.end(), std::uint8_t{1}));
  }

  void push_back(std::span<const double> x, double label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
    clean_labels.push_back(label);
    noisy.push_back(0);
    ids.push_back(ids.size());
  }

  bool operator==(const Dataset&) const = default;
};

/// Samples [begin, end) with ids renumbered from 0.
inline Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
  if (begin > end || end > data.size()) throw ConfigError("dataset slice out of range");
  Dataset out;
  out.task = data.task;
  out.dim = data.dim;
  out.classes = data.classes;
  out.features.assign(data.features.begin() + static_cast<std::ptrdiff_t>(begin * data.dim),
                      data.features.begin() + static_cast<std::ptrdiff_t>(end * data.dim));
  out.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    data.labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.clean_labels.assign(data.clean_labels.begin() + static_cast<std::ptrdiff_t>(begin),
                          data.clean_labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.noisy.assign(data.noisy.begin() + static_cast<std::ptrdiff_t>(begin),
                   data.noisy.begin() + static_cast<std::ptrdiff_t>(end));
  out.ids.resize(end - begin);
  std::iota(out.ids.begin(), out.ids.end(), std::size_t{0});
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

/**
 * Isotropic unit-variance Gaussian clusters.
 *
 * Centers lie on a circle in the first two coordinates (a line when dim == 1), with
 * neighbouring centers `separation` apart and a seed-dependent rotation. Class counts
 * differ by at most one; samples come out in shuffled class order. `stream` selects an
 * independent sample stream over the same centers (e.g. 0 = train, 1 = test).
 */
inline Dataset make_blobs(std::size_t n, std::size_t classes, std::size_t dim, double separation,
                          std::uint64_t seed, std::uint64_t stream = 0) {
  if (classes < 2 || n < classes || dim == 0) {
    throw ConfigError("make_blobs requires N >= C >= 2 and d >= 1");
  }
  if (!std::isfinite(separation) || separation < 0) throw ConfigError("separation must be >= 0");

  Rng center_rng(derive_seed(seed, 0));
  std::vector<double> centers(classes * dim, 0.0);
  if (dim == 1) {
    for (std::size_t c = 0; c < classes; ++c) {
      centers[c] = separation * (static_cast<double>(c) - 0.5 * static_cast<double>(classes - 1));
    }
  } else {
    const double step = 2.0 * std::numbers::pi / static_cast<double>(classes);
    const double radius = separation / (2.0 * std::sin(step / 2.0));
    const double rotation = center_rng.uniform(0.0, step);
    for (std::size_t c = 0; c < classes; ++c) {
      const double angle = rotation + step * static_cast<double>(c);
      centers[c * dim] = radius * std::cos(angle);
      centers[c * dim + 1] = radius * std::sin(angle);
    }
  }

  Rng rng(derive_seed(seed, 1 + stream));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i % classes;
  rng.shuffle(std::span<std::size_t>(order));

  Dataset out;
  out.task = Task::Classification;
  out.dim = dim;
  out.classes = classes;
  std::vector<double> x(dim);
  for (std::size_t label : order) {
    for (std::size_t k = 0; k < dim; ++k) x[k] = centers[label * dim + k] + rng.normal();
    out.push_back(x, static_cast<double>(label));
  }
  return out;
}

/// y = w.x + b + noise_std * N(0,1), x ~ N(0, I); w and b fixed by `seed`.
inline Dataset make_regression(std::size_t n, std::size_t dim, double noise_std,
                               std::uint64_t seed, std::uint64_t stream = 0) {
  if (n == 0 || dim == 0) throw ConfigError("make_regression requires N >= 1 and d >= 1");
  Rng weight_rng(derive_seed(seed, 0));
  std::vector<double> w(dim);
  for (double& v : w) v = weight_rng.normal();
  const double bias = weight_rng.normal();

  Rng rng(derive_seed(seed, 1 + stream));
  Dataset out;
  out.task = Task::Regression;
  out.dim = dim;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    double y = bias;
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] = rng.normal();
      y += w[k] * x[k];
    }
    out.push_back(x, y + noise_std * rng.normal());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise injection

namespace detail {
inline std::size_t corruption_count(double rate, std::size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("noise rate must be in [0, 1]");
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

// round(rate * N) distinct indices, uniformly chosen (partial Fisher-Yates).
inline std::vector<std::size_t> choose_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}
}  // namespace detail

/**
 * Replaces exactly round(rate * N) labels, each with a uniform draw from the C - 1
 * classes other than the clean one. Starts from `clean_labels`, so it can be reapplied.
 */
inline Dataset inject_symmetric_noise(Dataset data, double rate, std::uint64_t seed) {
  if (data.task != Task::Classification) throw ConfigError("symmetric noise needs a classification dataset");
  const std::size_t k = detail::corruption_count(rate, data.size());
  if (k > 0 && data.classes < 2) throw ConfigError("symmetric noise needs at least 2 classes");
  data.labels = data.clean_labels;
  std::fill(data.noisy.begin(), data.noisy.end(), std::uint8_t{0});

  Rng rng(seed);
  for (std::size_t i : detail::choose_subset(data.size(), k, rng)) {
    const auto clean = static_cast<std::size_t>(data.clean_labels[i]);
    std::size_t other = rng.index(data.classes - 1);
    if (other >= clean) ++other;
    data.labels[i] = static_cast<double>(other);
    data.noisy[i] = 1;
  }
  return data;
}

struct ValueRange {
  double lo = 0.0;
  double hi = 0.0;
};

inline ValueRange target_range(const Dataset& data) {
  if (data.empty()) throw ConfigError("empty dataset has no target range");
  const auto [lo, hi] = std::minmax_element(data.clean_labels.begin(), data.clean_labels.end());
  return {*lo, *hi};
}

/// Replaces exactly round(rate * N) targets with uniform draws over `range`.
inline Dataset inject_regression_noise(Dataset data, double rate, ValueRange range,
                                       std::uint64_t seed) {
  if (data.task != Task::Regression) throw ConfigError("regression noise needs a regression dataset");
  if (!(range.hi > range.lo) || !std::isfinite(range.lo) || !std::isfinite(range.hi)) {
    throw ConfigError("regression noise value range is empty");
  }
  const std::size_t k = detail::corruption_count(rate, data.size());
  data.labels = data.clean_labels;
  std::fill(data.noisy.begin(), data.noisy.end(), std::uint8_t{0});

  Rng rng(seed);
  for (std::size_t i : detail::choose_subset(data.size(), k, rng)) {
    data.labels[i] = rng.uniform(range.lo, range.hi);
    data.noisy[i] = 1;
  }
  return data;
}

inline Dataset inject_regression_noise(Dataset data, double rate, std::uint64_t seed) {
  const ValueRange range = target_range(data);
  return inject_regression_noise(std::move(data), rate, range, seed);
}

// ---------------------------------------------------------------------------
// IDX (MNIST) files

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                               const std::string& what) {
  if (bytes.size() < offset + 4) {
    throw IdxError(IdxErrorKind::Truncated, what + ": header truncated");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = detail::read_be32(bytes, 0, "images");
  if (magic != kIdxImagesMagic) {
    throw IdxError(IdxErrorKind::WrongMagic, "images file has magic " + std::to_string(magic));
  }
  IdxImages out;
  out.count = detail::read_be32(bytes, 4, "images");
  out.rows = detail::read_be32(bytes, 8, "images");
  out.cols = detail::read_be32(bytes, 12, "images");
  const std::uint64_t payload = std::uint64_t{out.count} * out.rows * out.cols;
  if (bytes.size() - 16 < payload) {
    throw IdxError(IdxErrorKind::Truncated, "images payload shorter than declared");
  }
  out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = detail::read_be32(bytes, 0, "labels");
  if (magic != kIdxLabelsMagic) {
    throw IdxError(IdxErrorKind::WrongMagic, "labels file has magic " + std::to_string(magic));
  }
  const std::uint32_t count = detail::read_be32(bytes, 4, "labels");
  if (bytes.size() - 8 < count) {
    throw IdxError(IdxErrorKind::Truncated, "labels payload shorter than declared");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

inline std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  detail::append_be32(out, kIdxImagesMagic);
  detail::append_be32(out, images.count);
  detail::append_be32(out, images.rows);
  detail::append_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  detail::append_be32(out, kIdxLabelsMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

/// Pixels scaled to [0, 1]; 10 classes.
inline Dataset dataset_from_idx(const IdxImages& images, std::span<const std::uint8_t> labels) {
  if (images.count != labels.size()) {
    throw IdxError(IdxErrorKind::CountMismatch,
                   std::to_string(images.count) + " images vs " + std::to_string(labels.size()) + " labels");
  }
  Dataset out;
  out.task = Task::Classification;
  out.dim = std::size_t{images.rows} * images.cols;
  out.classes = 10;
  out.features.reserve(images.pixels.size());
  for (std::uint8_t px : images.pixels) out.features.push_back(px / 255.0);
  for (std::uint8_t label : labels) {
    if (label >= out.classes) throw InvalidLabel("MNIST label " + std::to_string(label) + " >= 10");
    out.labels.push_back(label);
  }
  out.clean_labels = out.labels;
  out.noisy.assign(out.labels.size(), 0);
  out.ids.resize(out.labels.size());
  std::iota(out.ids.begin(), out.ids.end(), std::size_t{0});
  return out;
}

inline Dataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path) {
  const auto image_bytes = detail::read_bytes(images_path);
  const auto label_bytes = detail::read_bytes(labels_path);
  return dataset_from_idx(parse_idx_images(image_bytes), parse_idx_labels(label_bytes));
}

// ---------------------------------------------------------------------------
// CSV: id,clean_label,label,noisy,f0..f{d-1}

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  out << "id,clean_label,label,noisy";
  for (std::size_t k = 0; k < data.dim; ++k) out << ",f" << k;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i] << ',' << data.clean_labels[i] << ',' << data.labels[i] << ','
        << int{data.noisy[i]};
    for (double v : data.row(i)) out << ',' << v;
    out << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& in, Task task, std::size_t classes) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset csv is empty");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (line.rfind("id,clean_label,label,noisy", 0) != 0 || columns < 5) {
    throw ConfigError("dataset csv header must start with id,clean_label,label,noisy,f0");
  }
  Dataset out;
  out.task = task;
  out.classes = classes;
  out.dim = columns - 4;
  std::vector<double> row(columns);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream fields(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(fields, cell, ',')) {
      if (c >= columns) throw ConfigError("dataset csv row has too many fields");
      row[c++] = std::stod(cell);
    }
    if (c != columns) throw ConfigError("dataset csv row has too few fields");
    out.ids.push_back(static_cast<std::size_t>(row[0]));
    out.clean_labels.push_back(row[1]);
    out.labels.push_back(row[2]);
    out.noisy.push_back(row[3] != 0.0 ? 1 : 0);
    out.features.insert(out.features.end(), row.begin() + 4, row.end());
  }
  return out;
}

}  // namespace discrim
