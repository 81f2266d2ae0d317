#include "mnode/encoder.hpp"

#include "mnode/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace mnode {

void EncoderModel::validate() const {
  if (latent_dim() < 2) throw ConfigError("encoder latent dimension must be >= 2");
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("kernel parameters a and b must be positive");
}

EncoderModel EncoderModel::make(Index input_dim, const std::vector<Index>& hidden, Index latent_dim,
                                std::uint64_t seed, Activation act, std::string prefix) {
  std::vector<Index> widths{input_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(latent_dim);
  EncoderModel m{Mlp(MlpSpec::uniform(std::move(widths), act, seed), std::move(prefix))};
  m.validate();
  return m;
}

Mat encode(const EncoderModel& model, const ParamStore& params, const Mat& x, MlpCache* cache) {
  return model.net.forward(params, x, cache);
}

double q_from_squared_distance(double sq_dist, double a, double b) {
  const double powered = b == 1.0 ? sq_dist : std::pow(sq_dist, b);
  return 1.0 / (1.0 + a * powered);
}

double dq_dsquared(double sq_dist, double a, double b) {
  if (sq_dist <= 0.0) return 0.0;
  const double q = q_from_squared_distance(sq_dist, a, b);
  const double slope = b == 1.0 ? a : a * b * std::pow(sq_dist, b - 1.0);
  return -slope * q * q;
}

BatchPairSimilarities batch_similarities(const NeighborGraph& graph, std::span<const Index> indices,
                                         const Mat& z, double a, double b, double eps) {
  const Index n = static_cast<Index>(indices.size());
  if (z.rows() != n) throw DimensionError("batch_similarities: z rows differ from index count");
  BatchPairSimilarities s;
  s.indices.assign(indices.begin(), indices.end());
  s.eps = eps;
  s.p = Mat::Zero(n, n);
  s.q = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = graph.probability(indices[i], indices[j]);
      const double q = std::clamp(q_kernel(z.row(i), z.row(j), a, b), eps, 1.0 - eps);
      s.p(i, j) = s.p(j, i) = p;
      s.q(i, j) = s.q(j, i) = q;
    }
  }
  return s;
}

namespace {

double xlogy_ratio(double x, double y) { return x > 0.0 ? x * std::log(x / y) : 0.0; }

}  // namespace

ManifoldLoss manifold_loss(const Mat& p, const Mat& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols() || p.rows() != p.cols())
    throw DimensionError("manifold_loss: p and q must be square and equally shaped");
  const Index n = p.rows();
  ManifoldLoss out;
  out.dq = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double pij = p(i, j);
      const double qij = q(i, j);
      if (!(qij > 0.0 && qij < 1.0))
        throw Error("manifold_loss: q outside (0, 1); clamp was not applied");
      out.loss += xlogy_ratio(pij, qij) + xlogy_ratio(1.0 - pij, 1.0 - qij);
      out.dq(i, j) = -pij / qij + (1.0 - pij) / (1.0 - qij);
    }
  }
  return out;
}

LatentLoss manifold_loss_latent(const Mat& z, const Mat& p, double a, double b, bool normalize,
                                double eps) {
  const Index n = z.rows();
  if (p.rows() != n || p.cols() != n) throw DimensionError("manifold_loss_latent: p shape");
  LatentLoss out;
  out.dz = Mat::Zero(n, z.cols());
  out.pairs = n * (n - 1);
  if (n < 2) return out;
  const double scale = normalize ? 1.0 / static_cast<double>(out.pairs) : 1.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const RowVec diff = z.row(i) - z.row(j);
      const double sq = diff.squaredNorm();
      const double raw = q_from_squared_distance(sq, a, b);
      const double q = std::clamp(raw, eps, 1.0 - eps);
      const double pij = p(i, j);
      // Both ordered pairs (i,j) and (j,i) carry the same term.
      out.loss += 2.0 * (xlogy_ratio(pij, q) + xlogy_ratio(1.0 - pij, 1.0 - q));
      if (raw != q) continue;  // clamped: flat
      const double dl_dq = 2.0 * (-pij / q + (1.0 - pij) / (1.0 - q));
      const RowVec g = (dl_dq * dq_dsquared(sq, a, b) * 2.0) * diff;
      out.dz.row(i) += g;
      out.dz.row(j) -= g;
    }
  }
  out.loss *= scale;
  out.dz *= scale;
  return out;
}

EncoderLoss manifold_loss_backward(const EncoderModel& model, const ParamStore& params,
                                   const Mat& x, std::span<const Index> indices,
                                   const NeighborGraph& graph, bool normalize, double eps) {
  if (static_cast<Index>(indices.size()) != x.rows())
    throw DimensionError("manifold_loss_backward: index count differs from batch rows");
  MlpCache cache;
  EncoderLoss out;
  out.z = encode(model, params, x, &cache);
  Mat p = Mat::Zero(x.rows(), x.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = i + 1; j < x.rows(); ++j)
      p(i, j) = p(j, i) = graph.probability(indices[i], indices[j]);
  const LatentLoss l = manifold_loss_latent(out.z, p, model.a, model.b, normalize, eps);
  out.loss = l.loss;
  model.net.add_zero_grads(params, out.grads);
  model.net.backward(params, cache, l.dz, &out.grads);
  return out;
}

void write_latent_csv(const std::filesystem::path& path, std::span<const Index> ids,
                      std::span<const int> labels, const Mat& z) {
  if (static_cast<Index>(ids.size()) != z.rows() || labels.size() != ids.size())
    throw DimensionError("write_latent_csv: ids, labels and z rows must agree");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id,label";
  for (Index c = 0; c < z.cols(); ++c) out << ",z_" << (c + 1);
  out << '\n' << std::setprecision(17);
  for (Index r = 0; r < z.rows(); ++r) {
    out << ids[r] << ',' << labels[r];
    for (Index c = 0; c < z.cols(); ++c) out << ',' << z(r, c);
    out << '\n';
  }
}

}  // namespace mnode
