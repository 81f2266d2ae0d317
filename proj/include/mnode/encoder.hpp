#pragma once

#include "mnode/knn_graph.hpp"
#include "mnode/nn.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace mnode {

/// Encoder G: R^n -> R^m plus the Student-t kernel parameters used on its
/// output space.
struct EncoderModel {
  Mlp net;
  double a = 1.0;
  double b = 1.0;

  Index input_dim() const { return net.spec().input_width(); }
  Index latent_dim() const { return net.spec().output_width(); }
  void validate() const;

  /// widths [input, hidden..., latent] with ReLU hidden layers.
  static EncoderModel make(Index input_dim, const std::vector<Index>& hidden, Index latent_dim,
                           std::uint64_t seed, Activation act = Activation::Relu,
                           std::string prefix = "encoder");
};

Mat encode(const EncoderModel& model, const ParamStore& params, const Mat& x,
           MlpCache* cache = nullptr);

/// q = (1 + a * dist^(2b))^-1 written in terms of the squared distance.
double q_from_squared_distance(double sq_dist, double a, double b);
/// d q / d (squared distance); 0 at the origin.
double dq_dsquared(double sq_dist, double a, double b);

template <typename A, typename B>
double q_kernel(const Eigen::MatrixBase<A>& zi, const Eigen::MatrixBase<B>& zj, double a,
                double b) {
  return q_from_squared_distance((zi - zj).squaredNorm(), a, b);
}

inline constexpr double kDefaultQClamp = 1e-7;

/// Dense within-batch p and clamped q, diagonals zero.
struct BatchPairSimilarities {
  std::vector<Index> indices;
  Mat p;
  Mat q;
  double eps = kDefaultQClamp;
};

/// Looks p up in the graph (0 for non-edges) and evaluates the clamped kernel
/// on the latent rows of `z`, which correspond to `indices`.
BatchPairSimilarities batch_similarities(const NeighborGraph& graph, std::span<const Index> indices,
                                         const Mat& z, double a, double b,
                                         double eps = kDefaultQClamp);

struct ManifoldLoss {
  double loss = 0.0;
  Mat dq;  // d loss / d q, zero diagonal
};

/// Fuzzy cross-entropy summed over ordered pairs i != j, 0 * log 0 := 0.
/// Expects q already clamped into (0, 1).
ManifoldLoss manifold_loss(const Mat& p, const Mat& q);

struct LatentLoss {
  double loss = 0.0;
  Mat dz;  // d loss / d z
  std::int64_t pairs = 0;
};

/// L1 on a latent batch with its gradient with respect to the latent rows.
/// With `normalize` set the loss is divided by the number of ordered pairs.
LatentLoss manifold_loss_latent(const Mat& z, const Mat& p, double a, double b, bool normalize,
                                double eps = kDefaultQClamp);

struct EncoderLoss {
  double loss = 0.0;
  Mat z;
  Gradients grads;  // encoder parameters only
};

/// encode -> batch similarities -> L1 -> gradient w.r.t. the encoder parameters.
EncoderLoss manifold_loss_backward(const EncoderModel& model, const ParamStore& params,
                                   const Mat& x, std::span<const Index> indices,
                                   const NeighborGraph& graph, bool normalize,
                                   double eps = kDefaultQClamp);

/// CSV "sample_id,label,z_1,...,z_m".
void write_latent_csv(const std::filesystem::path& path, std::span<const Index> ids,
                      std::span<const int> labels, const Mat& z);

}  // namespace mnode
