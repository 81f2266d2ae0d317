#include "mnode/knn_graph.hpp"

#include "mnode/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include "json.hpp"
#include <numeric>

namespace mnode {

SigmaMode parse_sigma_mode(std::string_view name) {
  if (name == "literal") return SigmaMode::Literal;
  if (name == "smooth") return SigmaMode::Smooth;
  throw ConfigError("unknown sigma mode '" + std::string(name) + "' (literal|smooth)");
}

std::string_view to_string(SigmaMode m) {
  return m == SigmaMode::Literal ? "literal" : "smooth";
}

NeighborLists knn_search(const Mat& data, int k) {
  const Index n = data.rows();
  if (n == 0) throw Error("knn_search: empty dataset");
  if (n < 2) throw Error("knn_search: need at least two points");
  if (k < 1) throw ConfigError("knn_search: k must be >= 1");
  if (!data.allFinite()) throw NumericError("knn_search: non-finite coordinates");

  // One sample per column so each distance reads contiguous memory.
  const Mat cols = data.transpose();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  NeighborLists out(n);
  std::vector<Neighbor> cand;
  cand.reserve(n - 1);
  for (Index i = 0; i < n; ++i) {
    cand.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) cand.push_back({j, (cols.col(i) - cols.col(j)).norm()});
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                        return a.distance < b.distance ||
                               (a.distance == b.distance && a.index < b.index);
                      });
    out[i].assign(cand.begin(), cand.begin() + kk);
  }
  return out;
}

namespace {

double membership_sum(std::span<const Neighbor> nbrs, double rho, double sigma) {
  double s = 0.0;
  for (const auto& nb : nbrs) s += std::exp(-(nb.distance - rho) / sigma);
  return s;
}

}  // namespace

SigmaResult sigma_calibrate(std::span<const Neighbor> neighbors, int k, SigmaMode mode) {
  const double literal = std::log2(static_cast<double>(k));
  SigmaResult r;
  r.sigma = literal;
  if (mode == SigmaMode::Literal || neighbors.empty()) return r;

  constexpr double kLo = 1e-6;
  constexpr double kHi = 1e3;
  constexpr double kTol = 1e-5;
  const double rho = neighbors.front().distance;
  const double target = literal;
  double f_lo = membership_sum(neighbors, rho, kLo) - target;
  const double f_hi = membership_sum(neighbors, rho, kHi) - target;

  // Every neighbour at distance rho: the sum does not depend on sigma.
  const bool flat = std::all_of(neighbors.begin(), neighbors.end(),
                                [rho](const Neighbor& nb) { return nb.distance == rho; });
  if (flat) {
    r.sigma = 0.5 * (kLo + kHi);
    r.degenerate = true;
    return r;
  }
  if (f_lo > 0.0 || f_hi < 0.0) {
    warn("sigma bisection bracket [1e-6, 1e3] does not contain the target; using log2(k)");
    r.fallback = true;
    return r;
  }
  double lo = kLo, hi = kHi;
  while (hi - lo > kTol) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = membership_sum(neighbors, rho, mid) - target;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  r.sigma = 0.5 * (lo + hi);
  return r;
}

LocalProbabilities local_probabilities(const NeighborLists& neighbors, int k, SigmaMode mode) {
  const std::size_t n = neighbors.size();
  LocalProbabilities lp;
  lp.rho.resize(n);
  lp.sigma.resize(n);
  lp.degenerate.resize(n);
  lp.neighbors = neighbors;
  lp.p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nb = neighbors[i];
    for (std::size_t r = 1; r < nb.size(); ++r)
      if (nb[r].distance < nb[r - 1].distance)
        throw Error("local_probabilities: neighbour distances must be sorted");
    const SigmaResult s = sigma_calibrate(nb, k, mode);
    if (!(s.sigma > 0.0))
      throw ConfigError("sigma_i = log2(k) must be positive; use k >= 2");
    lp.sigma[i] = s.sigma;
    lp.degenerate[i] = s.degenerate;
    lp.rho[i] = nb.empty() ? 0.0 : nb.front().distance;
    lp.p[i].reserve(nb.size());
    for (const auto& e : nb) lp.p[i].push_back(std::exp(-(e.distance - lp.rho[i]) / s.sigma));
  }
  return lp;
}

double fuzzy_union(double a, double b) { return a + b - a * b; }

NeighborGraph::NeighborGraph(Index n, int k, SigmaMode mode, std::vector<Edge> edges,
                             std::vector<double> rho, std::vector<double> sigma)
    : n_(n), k_(k), sigma_mode_(mode), edges_(std::move(edges)), rho_(std::move(rho)),
      sigma_(std::move(sigma)) {
  std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
    return a.i < b.i || (a.i == b.i && a.j < b.j);
  });
  std::vector<std::size_t> degree(n_, 0);
  for (const auto& e : edges_) {
    if (e.i >= e.j || e.j >= n_) throw Error("NeighborGraph: edges must satisfy i < j < n");
    ++degree[e.i];
    ++degree[e.j];
  }
  row_offsets_.assign(n_ + 1, 0);
  for (Index i = 0; i < n_; ++i) row_offsets_[i + 1] = row_offsets_[i] + degree[i];
  row_entries_.resize(row_offsets_[n_]);
  std::vector<std::size_t> fill(row_offsets_.begin(), row_offsets_.end() - 1);
  for (std::size_t id = 0; id < edges_.size(); ++id) {
    row_entries_[fill[edges_[id].i]++] = {edges_[id].j, id};
    row_entries_[fill[edges_[id].j]++] = {edges_[id].i, id};
  }
  for (Index i = 0; i < n_; ++i)
    std::sort(row_entries_.begin() + row_offsets_[i], row_entries_.begin() + row_offsets_[i + 1]);
}

std::span<const std::pair<Index, std::size_t>> NeighborGraph::incident(Index i) const {
  return {row_entries_.data() + row_offsets_[i], row_offsets_[i + 1] - row_offsets_[i]};
}

double NeighborGraph::probability(Index i, Index j) const {
  if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_) return 0.0;
  const auto row = incident(i);
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const std::pair<Index, std::size_t>& e, Index v) {
                               return e.first < v;
                             });
  if (it == row.end() || it->first != j) return 0.0;
  return edges_[it->second].p;
}

NeighborGraph symmetrize(const LocalProbabilities& local, int k, SigmaMode mode) {
  struct Directed {
    double forward = 0.0;   // p_{j|i} with i < j
    double backward = 0.0;  // p_{i|j}
    double distance = 0.0;
  };
  std::map<std::pair<Index, Index>, Directed> pairs;
  const Index n = static_cast<Index>(local.neighbors.size());
  for (Index i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < local.neighbors[i].size(); ++r) {
      const Index j = local.neighbors[i][r].index;
      const double p = local.p[i][r];
      if (p < 0.0 || p > 1.0) throw Error("symmetrize: local probability outside [0, 1]");
      auto key = std::minmax(i, j);
      Directed& d = pairs[{key.first, key.second}];
      d.distance = local.neighbors[i][r].distance;
      (i < j ? d.forward : d.backward) = p;
    }
  }
  std::vector<NeighborGraph::Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& [key, d] : pairs)
    edges.push_back({key.first, key.second, d.distance, fuzzy_union(d.forward, d.backward)});
  return NeighborGraph(n, k, mode, std::move(edges), local.rho, local.sigma);
}

Mat min_max_normalize(const Mat& data) {
  Mat out = data;
  for (Index c = 0; c < data.cols(); ++c) {
    const double lo = data.col(c).minCoeff();
    const double hi = data.col(c).maxCoeff();
    if (hi > lo)
      out.col(c) = (data.col(c).array() - lo) / (hi - lo);
    else
      out.col(c).setZero();
  }
  return out;
}

NeighborGraph build_graph(const Mat& data, const GraphConfig& cfg) {
  const NeighborLists nbrs = knn_search(cfg.normalize ? min_max_normalize(data) : data, cfg.k);
  return symmetrize(local_probabilities(nbrs, cfg.k, cfg.sigma_mode), cfg.k, cfg.sigma_mode);
}

void write_edge_csv(const NeighborGraph& g, const std::filesystem::path& path, double min_p) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "i,j,distance,p_ij\n" << std::setprecision(17);
  for (const auto& e : g.edges())
    if (e.p > min_p) out << e.i << ',' << e.j << ',' << e.distance << ',' << e.p << '\n';
}

void write_graph_sidecar(const NeighborGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  nlohmann::json doc = {{"n", g.n()},
                        {"k", g.k()},
                        {"metric", g.metric()},
                        {"sigma_mode", to_string(g.sigma_mode())},
                        {"edges", g.edges().size()}};
  out << doc.dump(2) << '\n';
}

Mat label_sorted_weights(const NeighborGraph& g, std::span<const int> labels,
                         std::vector<Index>* order) {
  if (static_cast<Index>(labels.size()) != g.n())
    throw DimensionError("label_sorted_weights: label count differs from graph size");
  std::vector<Index> perm(g.n());
  std::iota(perm.begin(), perm.end(), Index{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](Index a, Index b) { return labels[a] < labels[b]; });
  std::vector<Index> pos(g.n());
  for (Index r = 0; r < g.n(); ++r) pos[perm[r]] = r;
  Mat w = Mat::Zero(g.n(), g.n());
  for (const auto& e : g.edges()) {
    w(pos[e.i], pos[e.j]) = e.p;
    w(pos[e.j], pos[e.i]) = e.p;
  }
  if (order) *order = std::move(perm);
  return w;
}

}  // namespace mnode
