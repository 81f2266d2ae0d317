#include "mnode/nn.hpp"

#include "mnode/error.hpp"
#include "mnode/rng.hpp"

#include <cmath>

namespace mnode {

Activation parse_activation(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

MlpSpec MlpSpec::uniform(std::vector<Index> widths, Activation act, std::uint64_t seed) {
  MlpSpec s;
  const std::size_t hidden = widths.size() >= 2 ? widths.size() - 2 : 0;
  s.widths = std::move(widths);
  s.hidden_activations.assign(hidden, act);
  s.seed = seed;
  return s;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("MLP needs at least one layer (two widths)");
  for (Index w : widths)
    if (w < 1) throw ConfigError("MLP layer widths must be >= 1");
  if (hidden_activations.size() != widths.size() - 2)
    throw ConfigError("MLP needs one activation per hidden layer");
}

namespace {

void apply_activation(Activation act, const Mat& pre, Mat& out) {
  switch (act) {
    case Activation::Identity: out = pre; break;
    case Activation::Relu: out = pre.cwiseMax(0.0); break;
    case Activation::Tanh: out = pre.array().tanh().matrix(); break;
    case Activation::Sigmoid: out = (1.0 / (1.0 + (-pre.array()).exp())).matrix(); break;
  }
}

// Multiplies `grad` in place by the activation derivative evaluated at `pre`.
void activation_backward(Activation act, const Mat& pre, Mat& grad) {
  switch (act) {
    case Activation::Identity: break;
    case Activation::Relu: grad = (pre.array() > 0.0).select(grad, 0.0); break;
    case Activation::Tanh: grad.array() *= 1.0 - pre.array().tanh().square(); break;
    case Activation::Sigmoid: {
      const Eigen::ArrayXXd s = 1.0 / (1.0 + (-pre.array()).exp());
      grad.array() *= s * (1.0 - s);
      break;
    }
  }
}

}  // namespace

Mlp::Mlp(MlpSpec spec, std::string prefix) : spec_(std::move(spec)), prefix_(std::move(prefix)) {
  spec_.validate();
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    weight_names_.push_back(prefix_ + "." + std::to_string(l) + ".weight");
    bias_names_.push_back(prefix_ + "." + std::to_string(l) + ".bias");
  }
}

void Mlp::init_params(ParamStore& params) const {
  Rng rng(spec_.seed);
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    const Index in = spec_.widths[l];
    const Index out = spec_.widths[l + 1];
    const bool feeds_relu =
        l < spec_.hidden_activations.size() && spec_.hidden_activations[l] == Activation::Relu;
    // Kaiming-uniform: gain sqrt(2) ahead of ReLU, 1/sqrt(fan_in) bound otherwise.
    const double bound = feeds_relu ? std::sqrt(6.0 / static_cast<double>(in))
                                    : 1.0 / std::sqrt(static_cast<double>(in));
    Mat w(out, in);
    for (Index r = 0; r < out; ++r)
      for (Index c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
    params.add(weight_name(l), std::move(w));
    params.add(bias_name(l), Mat::Zero(out, 1));
  }
}

Mat Mlp::forward(const ParamStore& params, const Mat& x, MlpCache* cache) const {
  if (x.cols() != spec_.input_width())
    throw DimensionError(prefix_ + " layer 0: expected input width " +
                         std::to_string(spec_.input_width()) + ", got " +
                         std::to_string(x.cols()));
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Mat act = x;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    const Mat& w = params.at(weight_name(l));
    const Mat& b = params.at(bias_name(l));
    if (w.cols() != act.cols() || w.rows() != spec_.widths[l + 1] || b.rows() != w.rows())
      throw DimensionError(prefix_ + " layer " + std::to_string(l) + ": parameter shape mismatch");
    Mat pre = act * w.transpose();
    pre.rowwise() += b.col(0).transpose();
    if (cache) cache->inputs.push_back(std::move(act));
    if (l < spec_.hidden_activations.size()) {
      apply_activation(spec_.hidden_activations[l], pre, act);
    } else {
      act = pre;
    }
    if (cache) cache->preacts.push_back(std::move(pre));
  }
  return act;
}

Mat Mlp::backward(const ParamStore& params, const MlpCache& cache, const Mat& upstream,
                  Gradients* grads) const {
  if (!cache.filled() || cache.inputs.size() != spec_.layer_count())
    throw Error(prefix_ + ": backward called without a forward cache");
  if (upstream.cols() != spec_.output_width() || upstream.rows() != cache.inputs.front().rows())
    throw DimensionError(prefix_ + ": upstream gradient shape mismatch");
  Mat grad = upstream;
  for (std::size_t l = spec_.layer_count(); l-- > 0;) {
    if (l < spec_.hidden_activations.size())
      activation_backward(spec_.hidden_activations[l], cache.preacts[l], grad);
    if (grads) {
      grads->at(weight_name(l)).noalias() += grad.transpose() * cache.inputs[l];
      grads->at(bias_name(l)).noalias() += grad.colwise().sum().transpose();
    }
    grad = grad * params.at(weight_name(l));
  }
  return grad;
}

void Mlp::add_zero_grads(const ParamStore& params, Gradients& grads) const {
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    for (const auto& name : {weight_name(l), bias_name(l)}) {
      const Mat& p = params.at(name);
      grads.add(name, Mat::Zero(p.rows(), p.cols()));
    }
  }
}

Vec softmax(const Vec& logits) {
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

CrossEntropyResult softmax_cross_entropy(const Vec& logits, Index label) {
  if (label < 0 || label >= logits.size())
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " logits");
  const double mx = logits.maxCoeff();
  const Eigen::ArrayXd shifted = logits.array() - mx;
  const double lse = std::log(shifted.exp().sum());
  CrossEntropyResult r;
  r.loss = lse - shifted(label);
  r.grad = (shifted - lse).exp().matrix();
  r.grad(label) -= 1.0;
  return r;
}

void adam_step(ParamStore& params, const Gradients& grads, double lr, const AdamOptions& opts) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const std::string& name = grads.names()[i];
    const Mat& p = params.at(name);
    const Mat& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw DimensionError("adam_step: gradient shape mismatch for '" + name + "'");
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient for '" + name + "'");
  }
  const std::int64_t t = params.step() + 1;
  params.set_step(t);
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const std::string& name = grads.names()[i];
    const Mat& g = grads[i];
    Mat& m = params.first_moment().at(name);
    Mat& v = params.second_moment().at(name);
    m = opts.beta1 * m + (1.0 - opts.beta1) * g;
    v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
    params.at(name).array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts.eps);
  }
}

}  // namespace mnode
