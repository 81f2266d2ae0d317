#include "mnode/trainer.hpp"

#include "mnode/error.hpp"
#include "mnode/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace mnode {

Variant parse_variant(std::string_view name) {
  if (name == "manifold-node") return Variant::ManifoldNode;
  if (name == "node") return Variant::Node;
  if (name == "anode") return Variant::Anode;
  throw ConfigError("unknown variant '" + std::string(name) + "' (manifold-node | node | anode)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::ManifoldNode: return "manifold-node";
    case Variant::Node: return "node";
    case Variant::Anode: return "anode";
  }
  return "?";
}

TrainConfig TrainConfig::for_images() {
  TrainConfig c;
  c.epochs = 5;
  c.field_hidden = {64};
  return c;
}

TrainConfig TrainConfig::for_series() {
  TrainConfig c;
  c.epochs = 30;
  c.field_hidden = {16};
  return c;
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("trainer.lambda must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("trainer.lr must be > 0");
  if (batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
  if (epochs < 0 || pretrain_encoder_epochs < 0) throw ConfigError("trainer.epochs must be >= 0");
  if (variant == Variant::ManifoldNode && latent_dim < 1)
    throw ConfigError("trainer.latent_dim must be >= 1");
  if (variant == Variant::Anode && augment_dims < 0)
    throw ConfigError("trainer.augment_dims must be >= 0");
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("trainer.a and trainer.b must be > 0");
  if (graph.k < 1) throw ConfigError("graph.k must be >= 1");
  if (nfe_budget < 0) throw ConfigError("trainer.nfe_budget must be >= 0");
  solver.validate();
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Index argmax(const Eigen::Ref<const RowVec>& r) {
  Index best = 0;
  r.maxCoeff(&best);
  return best;
}

}  // namespace

Model make_model(const TrainConfig& cfg, Index input_dim, int num_classes) {
  cfg.validate();
  if (input_dim < 1) throw DimensionError("make_model: input dimension must be >= 1");
  if (num_classes < 2) throw ConfigError("make_model: need at least two classes");
  Model m;
  m.variant = cfg.variant;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  Index state = input_dim;
  if (cfg.variant == Variant::ManifoldNode) {
    m.encoder = EncoderModel::make(input_dim, cfg.encoder_hidden, cfg.latent_dim,
                                   derive_seed(cfg.seed, 1));
    m.encoder.a = cfg.a;
    m.encoder.b = cfg.b;
    m.encoder.validate();
    m.encoder.net.init_params(m.params);
    state = cfg.latent_dim;
  } else if (cfg.variant == Variant::Anode) {
    m.augment_dims = cfg.augment_dims;
    state = input_dim + cfg.augment_dims;
  }
  m.field = VectorField::make(state, cfg.field_hidden, derive_seed(cfg.seed, 2),
                              cfg.field_activation, cfg.time_dependent_field);
  m.field.net.init_params(m.params);
  m.head = Mlp(MlpSpec{{state, num_classes}, {}, derive_seed(cfg.seed, 3)}, "head");
  m.head.init_params(m.params);
  return m;
}

Mat initial_states(const Model& m, const Mat& x, MlpCache* encoder_cache) {
  if (x.cols() != m.input_dim)
    throw DimensionError("model expects " + std::to_string(m.input_dim) + " features, got " +
                         std::to_string(x.cols()));
  switch (m.variant) {
    case Variant::ManifoldNode:
      return encode(m.encoder, m.params, x, encoder_cache);
    case Variant::Node:
      return x;
    case Variant::Anode: {
      Mat h = Mat::Zero(x.rows(), x.cols() + m.augment_dims);
      h.leftCols(x.cols()) = x;
      return h;
    }
  }
  return x;
}

LatentForward forward_latent(const Model& m, const Mat& x, const SolverConfig& solver) {
  const Mat h0 = initial_states(m, x);
  const FieldDynamics f(m.field, m.params);
  LatentForward out;
  out.h1.resize(h0.rows(), h0.cols());
  for (Index i = 0; i < h0.rows(); ++i) {
    const OdeSolution s = integrate(f, h0.row(i).transpose(), solver);
    out.h1.row(i) = s.endpoint.transpose();
    out.nfe += s.nfe;
  }
  return out;
}

namespace {

Mat initial_states_with(const Model& m, const ParamStore& params, const Mat& x, MlpCache* cache) {
  if (m.variant == Variant::ManifoldNode) {
    if (x.cols() != m.input_dim) throw DimensionError("model input width mismatch");
    return encode(m.encoder, params, x, cache);
  }
  return initial_states(m, x, nullptr);
}

Gradients trainable_zero_grads(const Model& m, const ParamStore& params, bool freeze_encoder) {
  Gradients g;
  const TensorDict& v = params.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string& name = v.names()[i];
    if (freeze_encoder && m.has_encoder() && name.starts_with(m.encoder.net.prefix() + ".")) continue;
    g.add(name, Mat::Zero(v[i].rows(), v[i].cols()));
  }
  return g;
}

}  // namespace

BatchResult batch_loss(const Model& m, const ParamStore& params, const Dataset& data,
                       std::span<const Index> indices, const NeighborGraph* graph,
                       const TrainConfig& cfg, const BatchOptions& opts) {
  const Index batch = static_cast<Index>(indices.size());
  if (batch == 0) throw ConfigError("batch_loss: empty batch");
  if (opts.frozen_grids && opts.frozen_grids->size() != indices.size())
    throw DimensionError("batch_loss: one frozen grid per sample required");
  Mat xb(batch, data.d());
  for (Index i = 0; i < batch; ++i) xb.row(i) = data.x.row(indices[i]);

  BatchResult out;
  MlpCache enc_cache;
  const Mat h0 = initial_states_with(m, params, xb, &enc_cache);
  if (opts.compute_grads) out.grads = trainable_zero_grads(m, params, cfg.freeze_encoder);
  Mat dh0 = Mat::Zero(batch, h0.cols());
  const FieldDynamics f(m.field, params);
  const bool record = opts.compute_grads || opts.grids_out;
  if (opts.grids_out) opts.grids_out->clear();

  for (Index i = 0; i < batch; ++i) {
    const Vec start = h0.row(i).transpose();
    const OdeSolution sol =
        opts.frozen_grids
            ? integrate_on_grid(f, start, cfg.solver.t0, (*opts.frozen_grids)[i], cfg.solver.method, record)
            : integrate(f, start, cfg.solver, record);
    out.nfe_forward += sol.nfe;
    if (opts.grids_out) opts.grids_out->push_back(sol.step_sizes());

    MlpCache head_cache;
    const Mat logits = m.head.forward(params, sol.endpoint.transpose(), &head_cache);
    const int label = data.y[indices[i]];
    const CrossEntropyResult ce = softmax_cross_entropy(logits.row(0).transpose(), label);
    out.l2 += ce.loss / static_cast<double>(batch);
    if (argmax(logits.row(0)) == label) ++out.correct;
    if (!opts.compute_grads) continue;

    const Mat dh1 = m.head.backward(params, head_cache,
                                    (ce.grad / static_cast<double>(batch)).transpose(), &out.grads);
    const Sensitivity sens = integrate_backward(f, sol, dh1.row(0).transpose());
    out.nfe_backward += sens.nfe;
    out.grads += sens.dtheta;
    dh0.row(i) = sens.dh0.transpose();
  }

  if (m.has_encoder() && graph) {
    const BatchPairSimilarities sim = batch_similarities(*graph, indices, h0, cfg.a, cfg.b);
    const LatentLoss lat = manifold_loss_latent(h0, sim.p, cfg.a, cfg.b, cfg.normalize_l1);
    out.l1 = lat.loss;
    if (opts.compute_grads && cfg.lambda > 0.0) dh0 += cfg.lambda * lat.dz;
  }
  out.loss = cfg.lambda * out.l1 + out.l2;

  if (opts.compute_grads && m.has_encoder() && !cfg.freeze_encoder)
    m.encoder.net.backward(params, enc_cache, dh0, &out.grads);
  return out;
}

std::vector<int> predict(const Model& m, const Mat& x, const SolverConfig& solver, std::int64_t* nfe) {
  const LatentForward lf = forward_latent(m, x, solver);
  if (nfe) *nfe += lf.nfe;
  const Mat logits = m.head.forward(m.params, lf.h1);
  std::vector<int> pred(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) pred[i] = static_cast<int>(argmax(logits.row(i)));
  return pred;
}

EvalResult evaluate(const Model& m, const Dataset& split, const SolverConfig& solver) {
  if (split.n() == 0) throw ConfigError("evaluate: empty split");
  EvalResult r;
  const std::vector<int> pred = predict(m, split.x, solver, &r.nfe);
  const auto c = static_cast<std::size_t>(std::max(m.num_classes, split.num_classes));
  r.confusion.assign(c, std::vector<std::int64_t>(c, 0));
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++r.confusion[split.y[i]][pred[i]];
    if (pred[i] == split.y[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  return r;
}

namespace {

void pretrain_encoder(Model& m, const TrainConfig& cfg, const Dataset& train_set,
                      const NeighborGraph& graph, Rng& rng, std::vector<Index>& order) {
  for (int epoch = 0; epoch < cfg.pretrain_encoder_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      const std::span<const Index> idx(order.data() + s, e - s);
      Mat xb(static_cast<Index>(idx.size()), train_set.d());
      for (std::size_t i = 0; i < idx.size(); ++i) xb.row(static_cast<Index>(i)) = train_set.x.row(idx[i]);
      const EncoderLoss el = manifold_loss_backward(m.encoder, m.params, xb, idx, graph, cfg.normalize_l1);
      if (!std::isfinite(el.loss))
        throw TrainingAbort("non-finite encoder pretraining loss", -epoch - 1,
                            static_cast<int>(s / cfg.batch_size));
      adam_step(m.params, el.grads, cfg.lr);
    }
  }
}

}  // namespace

std::vector<EpochMetrics> train_model(Model& m, const TrainConfig& cfg, const Dataset& train_set,
                                      const Dataset* test, const EpochCallback& on_epoch) {
  cfg.validate();
  train_set.validate();
  if (train_set.n() == 0) throw ConfigError("train: empty training set");
  if (train_set.num_classes < 2) throw ConfigError("train: dataset needs at least two classes");
  if (train_set.d() != m.input_dim) throw DimensionError("train: feature width differs from the model");

  const bool use_graph = m.has_encoder() && (cfg.lambda > 0.0 || cfg.pretrain_encoder_epochs > 0);
  std::optional<NeighborGraph> graph;
  if (use_graph) graph = build_graph(train_set.x, cfg.graph);

  Rng rng(derive_seed(cfg.seed, 4));
  std::vector<Index> order(static_cast<std::size_t>(train_set.n()));
  std::iota(order.begin(), order.end(), Index{0});
  if (use_graph) pretrain_encoder(m, cfg, train_set, *graph, rng, order);

  std::vector<EpochMetrics> history;
  std::int64_t nfe_total = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    if (use_graph && cfg.recompute_graph_each_epoch) graph = build_graph(train_set.x, cfg.graph);
    rng.shuffle(order);
    EpochMetrics em;
    em.epoch = epoch;
    std::int64_t correct = 0;
    int batch_no = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size, ++batch_no) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      const std::span<const Index> idx(order.data() + s, e - s);
      BatchResult r;
      try {
        r = batch_loss(m, m.params, train_set, idx, graph ? &*graph : nullptr, cfg);
      } catch (const SolverError& err) {
        throw TrainingAbort(std::string("solver failure at epoch ") + std::to_string(epoch) +
                                ", batch " + std::to_string(batch_no) + ": " + err.what() +
                                " (accepted " + std::to_string(err.stats().accepted) + ", rejected " +
                                std::to_string(err.stats().rejected) + ", nfe " +
                                std::to_string(err.stats().nfe) + ")",
                            epoch, batch_no);
      }
      if (!std::isfinite(r.loss))
        throw TrainingAbort("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_no),
                            epoch, batch_no);
      const double w = static_cast<double>(idx.size());
      em.loss += r.loss * w;
      em.l1 += r.l1 * w;
      em.l2 += r.l2 * w;
      em.nfe_forward += r.nfe_forward;
      em.nfe_backward += r.nfe_backward;
      correct += r.correct;
      nfe_total += r.nfe_forward + r.nfe_backward;
      if (cfg.nfe_budget > 0 && nfe_total > cfg.nfe_budget)
        throw TrainingAbort("NFE budget " + std::to_string(cfg.nfe_budget) + " exceeded at epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(batch_no) +
                                " (used " + std::to_string(nfe_total) + ")",
                            epoch, batch_no);
      adam_step(m.params, r.grads, cfg.lr);
    }
    const double n = static_cast<double>(train_set.n());
    em.loss /= n;
    em.l1 /= n;
    em.l2 /= n;
    em.train_accuracy = static_cast<double>(correct) / n;
    em.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (test) em.test_accuracy = evaluate(m, *test, cfg.solver).accuracy;
    history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return history;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset* test,
                  const EpochCallback& on_epoch) {
  TrainResult r{make_model(cfg, train_set.d(), train_set.num_classes), {}};
  r.epochs = train_model(r.model, cfg, train_set, test, on_epoch);
  return r;
}

}  // namespace mnode
