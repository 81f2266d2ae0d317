#pragma once

#include "mnode/rng.hpp"
#include "mnode/tensor.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mnode {

/// How the stored features relate to the raw ones.
struct NormalizationRecord {
  enum class Kind { None, MinMax, InstanceZ };
  Kind kind = Kind::None;
  RowVec feature_min;    // MinMax
  RowVec feature_range;  // MinMax, 0 for constant features
  Vec row_mean;          // InstanceZ
  Vec row_std;           // InstanceZ, 0 for constant series

  /// Raw features from normalized ones.
  Mat invert(const Mat& x) const;
};

struct Dataset {
  Mat x;                               // n x d
  std::vector<int> y;                  // class indices in [0, num_classes)
  int num_classes = 0;
  std::vector<std::string> class_names;  // original label per class index
  std::string provenance;
  NormalizationRecord normalization;

  Index n() const { return x.rows(); }
  Index d() const { return x.cols(); }
  /// Checks the type invariants (label range, finiteness, lengths).
  void validate() const;
  Dataset subset(std::span<const Index> rows) const;
};

/// IDX image + label files, optionally gzip-compressed (detected from the
/// magic bytes). Pixels are divided by 255; `limit` keeps the first records.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit = std::nullopt);

/// One series per line, class label in the first column. `delimiter` 0 means
/// detect from the first line (tab, comma, else whitespace). Every series is
/// z-normalized. `label_map`, when given, is the ordered list of original
/// labels that defines the class indices; otherwise labels are sorted
/// (numerically when they all parse as numbers).
Dataset load_delimited_series(const std::filesystem::path& path, char delimiter = 0,
                              const std::vector<std::string>* label_map = nullptr);

/// Train and test files sharing one label map built from both.
std::pair<Dataset, Dataset> load_series_pair(const std::filesystem::path& train,
                                             const std::filesystem::path& test,
                                             char delimiter = 0);

/// Isotropic Gaussians of standard deviation `spread` around the unit
/// vectors e_0 .. e_{classes-1} (needs d >= classes). Labels cycle 0, 1, ...
Dataset synth_blobs(Index n, Index d, int classes, double spread, std::uint64_t seed);

/// Two concentric rings of radius 1 (class 0) and 2 (class 1) with Gaussian
/// noise, mapped into R^dim by a fixed random orthonormal map when dim > 2.
Dataset synth_circles(Index n, double noise, std::uint64_t seed, Index dim = 2);

/// Seeded split, stratified by class unless some class has fewer than two
/// samples (then a warning and a plain random split).
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Per-feature min-max scaling; constant features map to 0.
class MinMaxScaler {
 public:
  void fit(const Mat& x);
  Mat transform(const Mat& x) const;
  Mat inverse(const Mat& x) const;
  bool fitted() const { return min_.size() > 0; }
  const RowVec& min() const { return min_; }
  const RowVec& range() const { return range_; }

  /// Fits on `train` and rewrites both splits, recording the normalization.
  static MinMaxScaler apply(Dataset& train, Dataset& test);

 private:
  RowVec min_;
  RowVec range_;
};

/// $MNODE_DATA_DIR, else the directory configured at build time.
std::filesystem::path data_dir();
/// Relative names that do not exist as given are looked up under data_dir().
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

}  // namespace mnode
