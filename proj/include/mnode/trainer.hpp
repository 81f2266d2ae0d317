#pragma once

#include "mnode/data.hpp"
#include "mnode/encoder.hpp"
#include "mnode/knn_graph.hpp"
#include "mnode/ode.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace mnode {

enum class Variant { ManifoldNode, Node, Anode };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

struct TrainConfig {
  Variant variant = Variant::ManifoldNode;
  Index latent_dim = 100;
  std::vector<Index> encoder_hidden{256, 128};
  std::vector<Index> field_hidden{64};
  Activation field_activation = Activation::Tanh;
  bool time_dependent_field = false;
  int augment_dims = 5;
  GraphConfig graph;
  double a = 1.0;
  double b = 1.0;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 5;
  SolverConfig solver;
  double lambda = 1.0;
  bool normalize_l1 = true;
  bool freeze_encoder = false;
  bool recompute_graph_each_epoch = false;
  int pretrain_encoder_epochs = 1;  // L1-only epochs before joint training
  std::int64_t nfe_budget = 0;      // forward + backward per run, 0 = unlimited
  std::uint64_t seed = 1;

  /// Five epochs and a [d, 64, d] field.
  static TrainConfig for_images();
  /// Thirty epochs and a [d, 16, d] field.
  static TrainConfig for_series();
  void validate() const;
};

/// Encoder (manifold variant only), vector field and linear head sharing one
/// parameter store under the prefixes "encoder", "field" and "head".
struct Model {
  Variant variant = Variant::ManifoldNode;
  Index input_dim = 0;
  int num_classes = 0;
  int augment_dims = 0;
  EncoderModel encoder;
  VectorField field;
  Mlp head;
  ParamStore params;

  Index state_dim() const { return field.state_dim(); }
  bool has_encoder() const { return variant == Variant::ManifoldNode; }
};

Model make_model(const TrainConfig& cfg, Index input_dim, int num_classes);

/// Initial ODE states for a batch: G(x), x, or [x, 0].
Mat initial_states(const Model& m, const Mat& x, MlpCache* encoder_cache = nullptr);

struct LatentForward {
  Mat h1;  // one row per sample
  std::int64_t nfe = 0;
};

/// Integrates every row of the batch separately from its initial state.
LatentForward forward_latent(const Model& m, const Mat& x, const SolverConfig& solver);

struct BatchResult {
  double loss = 0.0;  // lambda * l1 + l2
  double l1 = 0.0;
  double l2 = 0.0;    // mean cross-entropy over the batch
  std::int64_t nfe_forward = 0;
  std::int64_t nfe_backward = 0;
  int correct = 0;
  Gradients grads;    // empty unless requested
};

struct BatchOptions {
  bool compute_grads = true;
  /// Replay these per-sample step sequences instead of adaptive solves.
  const std::vector<std::vector<double>>* frozen_grids = nullptr;
  /// Receives the per-sample step sequences used.
  std::vector<std::vector<double>>* grids_out = nullptr;
};

/// Loss and gradients for the batch rows `indices` of `data`. `graph` must be
/// built over `data` when the variant is manifold-node and lambda > 0.
BatchResult batch_loss(const Model& m, const ParamStore& params, const Dataset& data,
                       std::span<const Index> indices, const NeighborGraph* graph,
                       const TrainConfig& cfg, const BatchOptions& opts = {});

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  std::int64_t nfe_forward = 0;
  std::int64_t nfe_backward = 0;
  double wall_time_s = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
  std::int64_t nfe = 0;
};

std::vector<int> predict(const Model& m, const Mat& x, const SolverConfig& solver,
                         std::int64_t* nfe = nullptr);

EvalResult evaluate(const Model& m, const Dataset& split, const SolverConfig& solver);

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> epochs;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Joint training with seeded per-epoch shuffling. `test`, when given, is
/// evaluated after every epoch. Throws TrainingAbort on a non-finite loss,
/// solver failure or exhausted NFE budget.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* test = nullptr,
                  const EpochCallback& on_epoch = {});

/// Trains from an existing model and keeps its parameters up to date.
std::vector<EpochMetrics> train_model(Model& m, const TrainConfig& cfg, const Dataset& train_set,
                                      const Dataset* test = nullptr, const EpochCallback& on_epoch = {});

}  // namespace mnode
