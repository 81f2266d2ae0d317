#pragma once

#include "mnode/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mnode {

enum class SigmaMode {
  Literal,  // sigma_i = log2(k)
  Smooth,   // sigma_i solves sum_j exp(-(d_ij - rho_i)/sigma_i) = log2(k)
};

SigmaMode parse_sigma_mode(std::string_view name);
std::string_view to_string(SigmaMode m);

struct Neighbor {
  Index index;
  double distance;
};

using NeighborLists = std::vector<std::vector<Neighbor>>;

/// Exact Euclidean k-NN over the rows of `data`. Each point receives
/// min(k, n-1) neighbours sorted by ascending distance, ties broken by
/// ascending index; a point is never its own neighbour.
NeighborLists knn_search(const Mat& data, int k);

struct SigmaResult {
  double sigma = 0.0;
  bool degenerate = false;  // smooth mode: neighbour sum independent of sigma
  bool fallback = false;    // smooth mode: target not bracketed, literal value used
};

/// `neighbors` must be sorted by distance (as produced by knn_search).
SigmaResult sigma_calibrate(std::span<const Neighbor> neighbors, int k, SigmaMode mode);

/// Directed membership strengths p_{j|i} for every stored neighbour.
struct LocalProbabilities {
  std::vector<double> rho;
  std::vector<double> sigma;
  std::vector<bool> degenerate;
  std::vector<std::vector<Neighbor>> neighbors;  // same order as the k-NN lists
  std::vector<std::vector<double>> p;            // p[i][r] = p_{neighbors[i][r] | i}
};

LocalProbabilities local_probabilities(const NeighborLists& neighbors, int k, SigmaMode mode);

/// Sparse symmetric fuzzy graph. Each unordered pair {i, j} is stored once,
/// so p_ij == p_ji holds exactly; pairs that are not stored have p_ij = 0.
class NeighborGraph {
 public:
  struct Edge {
    Index i;  // i < j
    Index j;
    double distance;
    double p;
  };

  NeighborGraph() = default;
  NeighborGraph(Index n, int k, SigmaMode mode, std::vector<Edge> edges, std::vector<double> rho,
                std::vector<double> sigma);

  Index n() const { return n_; }
  int k() const { return k_; }
  SigmaMode sigma_mode() const { return sigma_mode_; }
  std::string_view metric() const { return "euclidean"; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<double>& rho() const { return rho_; }
  const std::vector<double>& sigma() const { return sigma_; }

  /// p_ij for any pair; 0 for i == j and for non-edges.
  double probability(Index i, Index j) const;

  /// Edges incident to `i` as (other endpoint, edge id), sorted by endpoint.
  std::span<const std::pair<Index, std::size_t>> incident(Index i) const;

 private:
  Index n_ = 0;
  int k_ = 0;
  SigmaMode sigma_mode_ = SigmaMode::Literal;
  std::vector<Edge> edges_;
  std::vector<double> rho_;
  std::vector<double> sigma_;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::pair<Index, std::size_t>> row_entries_;
};

/// Probabilistic union p_ij = p_{j|i} + p_{i|j} - p_{j|i} p_{i|j}; a missing
/// direction contributes 0.
NeighborGraph symmetrize(const LocalProbabilities& local, int k, SigmaMode mode);

double fuzzy_union(double a, double b);

/// Per-feature min-max scaling to [0, 1]; constant features map to 0.
Mat min_max_normalize(const Mat& data);

struct GraphConfig {
  int k = 15;
  SigmaMode sigma_mode = SigmaMode::Literal;
  bool normalize = true;  // min-max scale features before measuring distances
};

/// knn_search -> local_probabilities -> symmetrize.
NeighborGraph build_graph(const Mat& data, const GraphConfig& cfg);

/// Edge CSV "i,j,distance,p_ij" (one row per unordered edge, i < j), keeping
/// edges with p_ij > min_p (pass a negative value to keep everything).
void write_edge_csv(const NeighborGraph& g, const std::filesystem::path& path, double min_p = -1.0);
/// JSON sidecar {n, k, metric, sigma_mode, edges}.
void write_graph_sidecar(const NeighborGraph& g, const std::filesystem::path& path);

/// Dense n x n weight matrix with rows/columns ordered by (label, index).
/// `order` receives the permutation used.
Mat label_sorted_weights(const NeighborGraph& g, std::span<const int> labels,
                         std::vector<Index>* order = nullptr);

}  // namespace mnode
