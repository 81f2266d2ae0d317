#include "mnode/data.hpp"

#include "mnode/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>

#ifndef MNODE_DEFAULT_DATA_DIR
#define MNODE_DEFAULT_DATA_DIR "data"
#endif

namespace mnode {

Mat NormalizationRecord::invert(const Mat& x) const {
  switch (kind) {
    case Kind::None:
      return x;
    case Kind::MinMax:
      return (x.array().rowwise() * feature_range.array()).rowwise() + feature_min.array();
    case Kind::InstanceZ:
      return (x.array().colwise() * row_std.array()).colwise() + row_mean.array();
  }
  return x;
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw DimensionError("dataset: " + std::to_string(x.rows()) + " rows but " +
                         std::to_string(y.size()) + " labels");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0 || y[i] >= num_classes)
      throw IndexError("dataset: label " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes) + ")");
  if (!x.allFinite()) throw NumericError("dataset: non-finite feature values");
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n()) throw IndexError("dataset subset: row out of range");
    out.x.row(static_cast<Index>(i)) = x.row(rows[i]);
    out.y.push_back(y[rows[i]]);
  }
  out.num_classes = num_classes;
  out.class_names = class_names;
  out.provenance = provenance;
  out.normalization = normalization;
  if (normalization.kind == NormalizationRecord::Kind::InstanceZ) {
    out.normalization.row_mean.resize(out.n());
    out.normalization.row_std.resize(out.n());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.normalization.row_mean(static_cast<Index>(i)) = normalization.row_mean(rows[i]);
      out.normalization.row_std(static_cast<Index>(i)) = normalization.row_std(rows[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------- IDX

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& raw, const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw Error("zlib init failed");
  zs.next_in = const_cast<Bytef*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError(name + ": corrupt gzip stream", at);
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      const auto at = zs.total_in;
      inflateEnd(&zs);
      throw FormatError(name + ": truncated gzip stream", at);
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  std::vector<unsigned char> raw = read_bytes(path);
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return gunzip(raw, path.string());
  return raw;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::string& name) {
  if (at + 4 > b.size()) throw FormatError(name + ": truncated header", b.size());
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void expect_magic(const std::vector<unsigned char>& b, std::uint32_t magic, const std::string& name) {
  const std::uint32_t got = be32(b, 0, name);
  if (got != magic) {
    std::ostringstream msg;
    msg << name << ": bad magic 0x" << std::hex << got << " (expected 0x" << magic << ")";
    throw FormatError(msg.str(), 0);
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> limit) {
  const std::string iname = images.string(), lname = labels.string();
  const auto ib = read_maybe_gzip(images);
  const auto lb = read_maybe_gzip(labels);
  expect_magic(ib, 0x00000803, iname);
  expect_magic(lb, 0x00000801, lname);
  const std::size_t n_img = be32(ib, 4, iname);
  const std::size_t rows = be32(ib, 8, iname);
  const std::size_t cols = be32(ib, 12, iname);
  const std::size_t n_lab = be32(lb, 4, lname);
  if (n_img != n_lab)
    throw FormatError(lname + ": " + std::to_string(n_lab) + " labels for " +
                          std::to_string(n_img) + " images",
                      4);
  const std::size_t pixels = rows * cols;
  const std::size_t n = std::min(n_img, limit.value_or(n_img));
  if (16 + n * pixels > ib.size())
    throw FormatError(iname + ": truncated pixel data", ib.size());
  if (8 + n > lb.size()) throw FormatError(lname + ": truncated label data", lb.size());

  Dataset d;
  d.x.resize(static_cast<Index>(n), static_cast<Index>(pixels));
  d.y.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* px = ib.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p)
      d.x(static_cast<Index>(i), static_cast<Index>(p)) = px[p] / 255.0;
    d.y[i] = lb[8 + i];
    max_label = std::max(max_label, d.y[i]);
  }
  d.num_classes = max_label + 1;
  for (int c = 0; c < d.num_classes; ++c) d.class_names.push_back(std::to_string(c));
  d.provenance = "idx:" + images.filename().string();
  return d;
}

// ------------------------------------------------------- delimited series

namespace {

struct RawSeries {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream in(line);
    for (std::string f; in >> f;) out.push_back(f);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto a = f.find_first_not_of(" \r");
    const auto b = f.find_last_not_of(" \r");
    f = a == std::string::npos ? std::string{} : f.substr(a, b - a + 1);
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

RawSeries read_series(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  RawSeries raw;
  std::size_t width = 0;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (delimiter == 0)
      delimiter = line.find('\t') != std::string::npos   ? '\t'
                  : line.find(',') != std::string::npos ? ','
                                                        : ' ';
    const auto fields = split_fields(line, delimiter);
    if (fields.size() < 2)
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                            " needs a label and at least one value",
                        line_no);
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(width),
                        line_no);
    std::vector<double> row(width - 1);
    for (std::size_t c = 1; c < width; ++c)
      if (!parse_double(fields[c], row[c - 1]) || !std::isfinite(row[c - 1]))
        throw FormatError(path.string() + ": cannot parse '" + fields[c] + "' at line " +
                              std::to_string(line_no) + ", column " + std::to_string(c + 1),
                          line_no);
    raw.labels.push_back(fields[0]);
    raw.rows.push_back(std::move(row));
  }
  if (raw.rows.empty()) throw FormatError(path.string() + ": no data rows", 0);
  return raw;
}

std::vector<std::string> sorted_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> uniq(labels);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const bool numeric = std::all_of(uniq.begin(), uniq.end(), [](const std::string& s) {
    double v;
    return parse_double(s, v);
  });
  if (numeric) {
    std::stable_sort(uniq.begin(), uniq.end(), [](const std::string& a, const std::string& b) {
      double x, y;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  }
  return uniq;
}

Dataset finish_series(const RawSeries& raw, const std::vector<std::string>& map,
                      const std::filesystem::path& path) {
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < map.size(); ++c) index[map[c]] = static_cast<int>(c);
  Dataset d;
  const Index n = static_cast<Index>(raw.rows.size());
  const Index w = static_cast<Index>(raw.rows[0].size());
  d.x.resize(n, w);
  d.normalization.kind = NormalizationRecord::Kind::InstanceZ;
  d.normalization.row_mean.resize(n);
  d.normalization.row_std.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto it = index.find(raw.labels[i]);
    if (it == index.end())
      throw FormatError(path.string() + ": unknown label '" + raw.labels[i] + "'",
                        static_cast<std::uint64_t>(i + 1));
    d.y.push_back(it->second);
    const Eigen::Map<const RowVec> row(raw.rows[i].data(), w);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().mean());
    d.normalization.row_mean(i) = mean;
    if (sd < 1e-12) {
      d.x.row(i).setZero();
      d.normalization.row_std(i) = 0.0;
    } else {
      d.x.row(i) = (row.array() - mean) / sd;
      d.normalization.row_std(i) = sd;
    }
  }
  d.num_classes = static_cast<int>(map.size());
  d.class_names = map;
  d.provenance = "series:" + path.filename().string();
  return d;
}

}  // namespace

Dataset load_delimited_series(const std::filesystem::path& path, char delimiter,
                              const std::vector<std::string>* label_map) {
  const RawSeries raw = read_series(path, delimiter);
  return finish_series(raw, label_map ? *label_map : sorted_labels(raw.labels), path);
}

std::pair<Dataset, Dataset> load_series_pair(const std::filesystem::path& train,
                                             const std::filesystem::path& test, char delimiter) {
  const RawSeries a = read_series(train, delimiter);
  const RawSeries b = read_series(test, delimiter);
  if (a.rows[0].size() != b.rows[0].size())
    throw DimensionError("series files have different lengths: " + std::to_string(a.rows[0].size()) +
                         " vs " + std::to_string(b.rows[0].size()));
  std::vector<std::string> all(a.labels);
  all.insert(all.end(), b.labels.begin(), b.labels.end());
  const auto map = sorted_labels(all);
  return {finish_series(a, map, train), finish_series(b, map, test)};
}

// ----------------------------------------------------------- synthetic

Dataset synth_blobs(Index n, Index d, int classes, double spread, std::uint64_t seed) {
  if (classes < 1 || n < classes) throw ConfigError("synth_blobs: need n >= classes >= 1");
  if (d < classes) throw ConfigError("synth_blobs: need d >= classes for simplex centers");
  if (!(spread >= 0.0)) throw ConfigError("synth_blobs: spread must be >= 0");
  Rng rng(seed);
  Dataset out;
  out.x.resize(n, d);
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    for (Index j = 0; j < d; ++j) out.x(i, j) = (j == c ? 1.0 : 0.0) + spread * rng.normal();
    out.y.push_back(c);
  }
  out.num_classes = classes;
  for (int c = 0; c < classes; ++c) out.class_names.push_back(std::to_string(c));
  out.provenance = "synth:blobs";
  return out;
}

Dataset synth_circles(Index n, double noise, std::uint64_t seed, Index dim) {
  if (n < 2) throw ConfigError("synth_circles: need n >= 2");
  if (dim < 2) throw ConfigError("synth_circles: dim must be >= 2");
  if (!(noise >= 0.0)) throw ConfigError("synth_circles: noise must be >= 0");
  Rng rng(seed);
  Mat plane(n, 2);
  Dataset out;
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double r = c == 0 ? 1.0 : 2.0;
    const double a = rng.uniform(0.0, 2.0 * std::acos(-1.0));
    plane(i, 0) = r * std::cos(a) + noise * rng.normal();
    plane(i, 1) = r * std::sin(a) + noise * rng.normal();
    out.y.push_back(c);
  }
  if (dim == 2) {
    out.x = plane;
  } else {
    Mat g(dim, 2);
    for (Index i = 0; i < dim; ++i)
      for (Index j = 0; j < 2; ++j) g(i, j) = rng.normal();
    const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ() * Mat::Identity(dim, 2);
    out.x = plane * q.transpose();
  }
  out.num_classes = 2;
  out.class_names = {"0", "1"};
  out.provenance = "synth:circles";
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split: train_fraction must lie in (0, 1)");
  if (data.n() < 2) throw ConfigError("split: need at least two samples");
  Rng rng(seed);
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(data.num_classes));
  for (Index i = 0; i < data.n(); ++i) by_class[data.y[i]].push_back(i);
  bool stratify = true;
  for (const auto& c : by_class)
    if (c.size() == 1) stratify = false;

  const auto total = static_cast<std::size_t>(std::llround(train_fraction * data.n()));
  std::vector<Index> train, test;
  if (stratify) {
    std::vector<std::size_t> take(by_class.size());
    std::vector<std::pair<double, std::size_t>> rest;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      const double exact = train_fraction * by_class[c].size();
      take[c] = static_cast<std::size_t>(std::floor(exact));
      assigned += take[c];
      rest.emplace_back(exact - take[c], c);
    }
    std::stable_sort(rest.begin(), rest.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total && r < rest.size(); ++r, ++assigned) ++take[rest[r].second];
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      std::vector<Index> idx = by_class[c];
      rng.shuffle(idx);
      train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
      test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
    }
  } else {
    warn("split: a class has a single sample; falling back to a non-stratified split");
    std::vector<Index> idx(static_cast<std::size_t>(data.n()));
    std::iota(idx.begin(), idx.end(), Index{0});
    rng.shuffle(idx);
    train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(total));
    test.assign(idx.begin() + static_cast<std::ptrdiff_t>(total), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

// --------------------------------------------------------------- scaling

void MinMaxScaler::fit(const Mat& x) {
  if (x.rows() == 0) throw ConfigError("MinMaxScaler: empty data");
  min_ = x.colwise().minCoeff();
  range_ = x.colwise().maxCoeff() - min_;
}

Mat MinMaxScaler::transform(const Mat& x) const {
  if (!fitted()) throw Error("MinMaxScaler: not fitted");
  if (x.cols() != min_.size()) throw DimensionError("MinMaxScaler: feature count mismatch");
  Mat out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    if (range_(j) > 0.0)
      out.col(j) = (x.col(j).array() - min_(j)) / range_(j);
    else
      out.col(j).setZero();
  return out;
}

Mat MinMaxScaler::inverse(const Mat& x) const {
  if (!fitted()) throw Error("MinMaxScaler: not fitted");
  return (x.array().rowwise() * range_.array()).rowwise() + min_.array();
}

MinMaxScaler MinMaxScaler::apply(Dataset& train, Dataset& test) {
  MinMaxScaler s;
  s.fit(train.x);
  train.x = s.transform(train.x);
  test.x = s.transform(test.x);
  for (Dataset* d : {&train, &test}) {
    d->normalization.kind = NormalizationRecord::Kind::MinMax;
    d->normalization.feature_min = s.min_;
    d->normalization.feature_range = s.range_;
  }
  return s;
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("MNODE_DATA_DIR"); env && *env) return env;
  return MNODE_DEFAULT_DATA_DIR;
}

std::filesystem::path resolve_data_path(const std::filesystem::path& p) {
  if (p.is_absolute() || std::filesystem::exists(p)) return p;
  return data_dir() / p;
}

}  // namespace mnode
