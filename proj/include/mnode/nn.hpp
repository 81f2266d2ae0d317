#pragma once

#include "mnode/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mnode {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Layer widths [in, hidden..., out] with one activation per hidden layer.
/// The output layer is always linear.
struct MlpSpec {
  std::vector<Index> widths;
  std::vector<Activation> hidden_activations;
  std::uint64_t seed = 0;

  /// Convenience: every hidden layer uses `act`.
  static MlpSpec uniform(std::vector<Index> widths, Activation act, std::uint64_t seed);

  std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }
  Index input_width() const { return widths.front(); }
  Index output_width() const { return widths.back(); }
  void validate() const;
};

/// Activations saved by a forward pass and consumed by the backward pass.
struct MlpCache {
  std::vector<Mat> inputs;       // input to each layer (batch x width)
  std::vector<Mat> preacts;      // pre-activation of each layer
  bool filled() const { return !inputs.empty(); }
};

/// A fixed-architecture multilayer perceptron whose parameters live in a
/// ParamStore under `<prefix>.<layer>.weight` (out x in) and
/// `<prefix>.<layer>.bias` (out x 1). Batches are row-major: one sample per row.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, std::string prefix);

  const MlpSpec& spec() const { return spec_; }
  const std::string& prefix() const { return prefix_; }
  const std::string& weight_name(std::size_t layer) const { return weight_names_[layer]; }
  const std::string& bias_name(std::size_t layer) const { return bias_names_[layer]; }

  /// Seeded Kaiming-uniform initialisation; biases start at zero.
  void init_params(ParamStore& params) const;

  Mat forward(const ParamStore& params, const Mat& x, MlpCache* cache = nullptr) const;

  /// Returns dL/dx and accumulates parameter gradients into `grads`
  /// (which may be null when only the input gradient is wanted).
  Mat backward(const ParamStore& params, const MlpCache& cache, const Mat& upstream,
               Gradients* grads) const;

  /// Registers zero gradient tensors for this network's parameters.
  void add_zero_grads(const ParamStore& params, Gradients& grads) const;

 private:
  MlpSpec spec_;
  std::string prefix_;
  std::vector<std::string> weight_names_;
  std::vector<std::string> bias_names_;
};

struct CrossEntropyResult {
  double loss;
  Vec grad;  // d loss / d logits
};

/// Softmax followed by negative log-likelihood of `label`.
CrossEntropyResult softmax_cross_entropy(const Vec& logits, Index label);

Vec softmax(const Vec& logits);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. Parameters absent from `grads` are left
/// untouched (frozen); the shared step counter still advances.
void adam_step(ParamStore& params, const Gradients& grads, double lr,
               const AdamOptions& opts = {});

}  // namespace mnode
