#pragma once

// Mini-batch SGD on the triplet objective.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/encoder.hpp"
#include "reid/error.hpp"
#include "reid/eval.hpp"
#include "reid/io.hpp"
#include "reid/metric.hpp"
#include "reid/random.hpp"

namespace reid {

struct TrainConfig {
  double alpha = 0.2;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::size_t triplets_per_batch = 256;
  MiningStrategy mining = MiningStrategy::semi_hard_negative;
  std::uint64_t seed = 0;
  double lr_decay = 1.0;
  // validation tracking
  std::size_t val_triplets = 256;
  std::size_t val_pairs = 200;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_auroc;
};

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
};

struct BatchStep {
  double loss = 0.0;  // mean over the batch's triplets
  std::size_t triplets = 0;
  std::vector<Layer> gradient;  // mean over triplets; empty when no triplets
};

inline void validate(const TrainConfig& config) {
  require(config.alpha >= 0.0 && std::isfinite(config.alpha), ErrorKind::invalid_argument, "alpha must be nonnegative");
  require(config.learning_rate >= 0.0 && std::isfinite(config.learning_rate), ErrorKind::invalid_argument,
          "learning_rate must be nonnegative");
  require(config.batch_size >= 2, ErrorKind::invalid_argument, "batch_size must be at least 2");
  require(config.triplets_per_batch > 0, ErrorKind::invalid_argument, "triplets_per_batch must be positive");
  require(config.lr_decay > 0.0 && config.lr_decay <= 1.0, ErrorKind::invalid_argument, "lr_decay must be in (0, 1]");
}

// Embeddings of every record, one row per record.
inline Matrix embed_all(const EncoderParams& params, const DataSet& dataset) {
  Matrix out(dataset.size(), params.config.output_dim);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto e = forward(params, dataset.records[i].features);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

inline void check_trainable(const DataSet& dataset, const std::string& what) {
  const auto groups = group_by_patient(dataset);
  require(groups.size() >= 2, ErrorKind::insufficient_data, what + " needs at least two patients");
  bool has_pair = false;
  for (const auto& [_, idx] : groups) has_pair = has_pair || idx.size() >= 2;
  require(has_pair, ErrorKind::insufficient_data, what + " needs a patient with at least two records");
}

// Loss and parameter gradient on one batch. Triplet gradients are summed per
// record (in triplet order) before a single backward pass per record, then
// averaged over the triplet count. Returns zero triplets when the batch
// cannot form any.
inline BatchStep batch_step(const EncoderParams& params, const DataSet& dataset,
                            const std::vector<std::size_t>& batch, const TrainConfig& config, std::uint64_t seed) {
  BatchStep step;
  std::vector<std::string> ids;
  std::vector<ForwardTrace> traces(batch.size());
  Matrix embeddings(batch.size(), params.config.output_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& record = dataset.records[batch[i]];
    ids.push_back(record.patient_id);
    const auto e = forward(params, record.features, traces[i]);
    std::copy(e.begin(), e.end(), embeddings.row(i).begin());
  }

  std::vector<Triplet> triplets;
  try {
    triplets = mine_triplets(embeddings, ids, config.mining, config.triplets_per_batch, seed, config.alpha);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::insufficient_data) return step;
    throw;
  }

  std::vector<Vector> grad_embedding(batch.size(), Vector(params.config.output_dim, 0.0));
  std::vector<bool> touched(batch.size(), false);
  double loss_sum = 0.0;
  for (const auto& t : triplets) {
    const auto a = embeddings.row(t.anchor);
    const auto p = embeddings.row(t.positive);
    const auto n = embeddings.row(t.negative);
    loss_sum += triplet_loss(a, p, n, config.alpha);
    const auto g = triplet_loss_grad(a, p, n, config.alpha);
    for (std::size_t k = 0; k < g.anchor.size(); ++k) {
      grad_embedding[t.anchor][k] += g.anchor[k];
      grad_embedding[t.positive][k] += g.positive[k];
      grad_embedding[t.negative][k] += g.negative[k];
    }
    touched[t.anchor] = touched[t.positive] = touched[t.negative] = true;
  }
  step.triplets = triplets.size();
  step.loss = loss_sum / static_cast<double>(triplets.size());

  step.gradient.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    step.gradient[l] = {Matrix(params.layers[l].weight.rows(), params.layers[l].weight.cols()),
                        Vector(params.layers[l].bias.size(), 0.0)};
  }
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!touched[i]) continue;
    const auto g = backward(params, traces[i], grad_embedding[i]);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
      auto& w = step.gradient[l].weight.data();
      const auto& gw = g.layers[l].weight.data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] += gw[k];
      auto& b = step.gradient[l].bias;
      for (std::size_t k = 0; k < b.size(); ++k) b[k] += g.layers[l].bias[k];
    }
  }
  for (auto& layer : step.gradient) {
    for (auto& w : layer.weight.data()) w *= scale;
    for (auto& b : layer.bias) b *= scale;
  }
  return step;
}

inline void sgd_update(EncoderParams& params, const std::vector<Layer>& gradient, double learning_rate) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& w = params.layers[l].weight.data();
    const auto& gw = gradient[l].weight.data();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= learning_rate * gw[k];
    auto& b = params.layers[l].bias;
    for (std::size_t k = 0; k < b.size(); ++k) b[k] -= learning_rate * gradient[l].bias[k];
  }
}

// Mean triplet loss over up to `count` randomly mined triplets.
inline double evaluate_mean_loss(const EncoderParams& params, const DataSet& dataset, double alpha,
                                 std::uint64_t seed, std::size_t count) {
  const auto embeddings = embed_all(params, dataset);
  const auto ids = patient_ids(dataset);
  const auto triplets = mine_triplets(embeddings, ids, MiningStrategy::random_within_batch, count, seed, alpha);
  // running mean: a constant loss (e.g. a collapsed encoder) comes back exactly
  double mean = 0.0;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    const double loss =
        triplet_loss(embeddings.row(t.anchor), embeddings.row(t.positive), embeddings.row(t.negative), alpha);
    mean += (loss - mean) / static_cast<double>(k + 1);
  }
  return mean;
}

namespace detail {

inline double validation_auroc(const EncoderParams& params, const DataSet& val_set, std::size_t pairs,
                               std::uint64_t seed) {
  EvalConfig cfg;
  cfg.n_pos = pairs;
  cfg.n_neg = pairs;
  cfg.clamp_to_available = true;
  const auto set = build_pairs_for(val_set, PairSetting::random(), cfg, seed);
  return auroc(score_pairs(params, val_set, set));
}

}  // namespace detail

// Validation metrics are NaN when val_set is empty.
inline TrainResult train(const TrainConfig& config, EncoderParams params, const DataSet& train_set,
                         const DataSet& val_set) {
  validate(config);
  check_shapes(params);
  require(train_set.ambient_dim == params.config.input_dim, ErrorKind::dimension_mismatch,
          "training features have dimension " + std::to_string(train_set.ambient_dim) + ", encoder expects " +
              std::to_string(params.config.input_dim));
  check_trainable(train_set, "training set");
  const bool track_val = !val_set.empty();
  if (track_val) {
    check_trainable(val_set, "validation set");
    const auto train_groups = group_by_patient(train_set);
    for (const auto& record : val_set.records) {
      require(train_groups.count(record.patient_id) == 0, ErrorKind::invalid_argument,
              "patient '" + record.patient_id + "' appears in both training and validation sets");
    }
  }

  TrainHistory history;
  double lr = config.learning_rate;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(config.seed, 1, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t triplet_total = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += config.batch_size, ++b) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      const auto step = batch_step(params, train_set, batch, config, derive_seed(config.seed, 2, epoch, b));
      if (step.triplets == 0) continue;
      require(std::isfinite(step.loss), ErrorKind::non_finite,
              "loss is not finite at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      loss_sum += step.loss * static_cast<double>(step.triplets);
      triplet_total += step.triplets;
      if (lr != 0.0) sgd_update(params, step.gradient, lr);
    }
    require(triplet_total > 0, ErrorKind::insufficient_data,
            "no batch formed a triplet in epoch " + std::to_string(epoch) + "; increase batch_size");
    history.train_loss.push_back(loss_sum / static_cast<double>(triplet_total));

    if (track_val) {
      const double val_loss =
          evaluate_mean_loss(params, val_set, config.alpha, derive_seed(config.seed, 3, epoch), config.val_triplets);
      require(std::isfinite(val_loss), ErrorKind::non_finite,
              "validation loss is not finite at epoch " + std::to_string(epoch));
      history.val_loss.push_back(val_loss);
      history.val_auroc.push_back(
          detail::validation_auroc(params, val_set, config.val_pairs, derive_seed(config.seed, 4, epoch)));
    } else {
      history.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      history.val_auroc.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    lr *= config.lr_decay;
  }
  return {std::move(params), std::move(history)};
}

inline std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,val_loss,val_auroc\n";
  for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
    out += std::to_string(e) + "," + format_double(history.train_loss[e]) + "," +
           format_double(history.val_loss[e]) + "," + format_double(history.val_auroc[e]) + "\n";
  }
  return out;
}

}  // namespace reid
