#pragma once

// Linear probes on frozen embeddings: a single softmax layer per attribute
// task, trained by full-batch gradient descent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/dataset.hpp"
#include "reid/encoder.hpp"
#include "reid/error.hpp"
#include "reid/eval.hpp"
#include "reid/io.hpp"
#include "reid/random.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct ProbeConfig {
  std::string task_attribute;
  std::vector<double> bucket_boundaries;  // numeric attributes only
  double learning_rate = 0.5;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  double l2_penalty = 1e-4;
  double train_fraction = 0.7;  // patient share used to fit the probe
};

struct LabeledEmbeddings {
  Matrix embeddings;                 // n x d, row i <-> record i
  std::vector<std::size_t> labels;   // class index per row
  std::vector<std::string> classes;
};

struct LinearProbe {
  Matrix weight;  // classes x d
  Vector bias;    // classes
  std::vector<std::string> classes;

  bool operator==(const LinearProbe&) const = default;
};

inline std::string available_attributes(const DataSet& dataset) {
  std::string names;
  for (const auto& [name, _] : dataset.schema) names += (names.empty() ? "" : ", ") + name;
  return names.empty() ? "(none)" : names;
}

inline std::vector<std::string> bucket_names(const std::vector<double>& bounds) {
  std::vector<std::string> names{"<" + format_double(bounds.front())};
  for (std::size_t i = 1; i < bounds.size(); ++i) {
    names.push_back("[" + format_double(bounds[i - 1]) + "," + format_double(bounds[i]) + ")");
  }
  names.push_back(">=" + format_double(bounds.back()));
  return names;
}

// Forward pass per record; the encoder is only read.
inline LabeledEmbeddings extract_embeddings(const EncoderParams& params, const DataSet& dataset,
                                            const std::string& attribute,
                                            const std::vector<double>& bucket_boundaries = {}) {
  const auto it = dataset.schema.find(attribute);
  require(it != dataset.schema.end(), ErrorKind::invalid_argument,
          "unknown attribute '" + attribute + "'; available: " + available_attributes(dataset));
  require(dataset.ambient_dim == params.config.input_dim, ErrorKind::dimension_mismatch,
          "dataset features have dimension " + std::to_string(dataset.ambient_dim) + ", encoder expects " +
              std::to_string(params.config.input_dim));
  const auto& spec = it->second;

  LabeledEmbeddings out;
  if (spec.kind == AttributeKind::categorical) {
    require(bucket_boundaries.empty(), ErrorKind::invalid_argument,
            "bucket boundaries given for categorical attribute '" + attribute + "'");
    out.classes = spec.values;
  } else {
    require(!bucket_boundaries.empty(), ErrorKind::invalid_argument,
            "numeric attribute '" + attribute + "' needs bucket boundaries");
    for (std::size_t i = 1; i < bucket_boundaries.size(); ++i) {
      require(bucket_boundaries[i] > bucket_boundaries[i - 1], ErrorKind::invalid_argument,
              "bucket boundaries must be strictly increasing");
    }
    out.classes = bucket_names(bucket_boundaries);
  }

  out.embeddings = Matrix(dataset.size(), params.config.output_dim);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& record = dataset.records[i];
    const auto e = forward(params, record.features);
    std::copy(e.begin(), e.end(), out.embeddings.row(i).begin());
    const auto& value = record.attributes.at(attribute);
    if (spec.kind == AttributeKind::categorical) {
      const auto& s = std::get<std::string>(value);
      out.labels.push_back(static_cast<std::size_t>(std::find(spec.values.begin(), spec.values.end(), s) -
                                                    spec.values.begin()));
    } else {
      const double v = std::get<double>(value);
      out.labels.push_back(static_cast<std::size_t>(
          std::upper_bound(bucket_boundaries.begin(), bucket_boundaries.end(), v) - bucket_boundaries.begin()));
    }
  }
  return out;
}

inline Vector probe_logits(const LinearProbe& probe, std::span<const double> x) {
  Vector z(probe.bias);
  for (std::size_t c = 0; c < z.size(); ++c) {
    const auto w = probe.weight.row(c);
    for (std::size_t j = 0; j < w.size(); ++j) z[c] += w[j] * x[j];
  }
  return z;
}

inline Vector softmax(Vector z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (auto& v : z) v /= total;
  return z;
}

// Mean cross-entropy plus l2_penalty * |W|^2 (bias unpenalized).
inline double probe_loss(const LinearProbe& probe, const LabeledEmbeddings& data, double l2_penalty) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto z = probe_logits(probe, data.embeddings.row(i));
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    loss += peak + std::log(total) - z[data.labels[i]];
  }
  loss /= static_cast<double>(data.labels.size());
  double sq = 0.0;
  for (double w : probe.weight.data()) sq += w * w;
  return loss + l2_penalty * sq;
}

// Gradient of probe_loss, shaped like the probe.
inline LinearProbe probe_gradient(const LinearProbe& probe, const LabeledEmbeddings& data, double l2_penalty) {
  LinearProbe grad{Matrix(probe.weight.rows(), probe.weight.cols()), Vector(probe.bias.size(), 0.0), probe.classes};
  const double inv_n = 1.0 / static_cast<double>(data.labels.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto x = data.embeddings.row(i);
    auto p = softmax(probe_logits(probe, x));
    p[data.labels[i]] -= 1.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      grad.bias[c] += p[c] * inv_n;
      auto row = grad.weight.row(c);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += p[c] * x[j] * inv_n;
    }
  }
  for (std::size_t k = 0; k < grad.weight.size(); ++k) grad.weight.data()[k] += 2.0 * l2_penalty * probe.weight.data()[k];
  return grad;
}

inline LinearProbe train_probe(const LabeledEmbeddings& data, const ProbeConfig& config) {
  require(data.embeddings.rows() == data.labels.size(), ErrorKind::dimension_mismatch,
          "embedding rows and labels disagree");
  require(config.learning_rate > 0.0 && config.l2_penalty >= 0.0, ErrorKind::invalid_argument,
          "probe learning_rate must be positive and l2_penalty nonnegative");
  std::vector<bool> present(data.classes.size(), false);
  for (auto y : data.labels) {
    require(y < data.classes.size(), ErrorKind::invalid_argument, "label index out of range");
    present[y] = true;
  }
  require(std::count(present.begin(), present.end(), true) >= 2, ErrorKind::insufficient_data,
          "probe training needs at least two classes present");

  LinearProbe probe{Matrix(data.classes.size(), data.embeddings.cols()), Vector(data.classes.size(), 0.0),
                    data.classes};
  Rng rng(config.seed);
  for (auto& w : probe.weight.data()) w = 0.01 * rng.normal();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto grad = probe_gradient(probe, data, config.l2_penalty);
    for (std::size_t k = 0; k < probe.weight.size(); ++k) {
      probe.weight.data()[k] -= config.learning_rate * grad.weight.data()[k];
    }
    for (std::size_t c = 0; c < probe.bias.size(); ++c) probe.bias[c] -= config.learning_rate * grad.bias[c];
  }
  require(std::isfinite(probe_loss(probe, data, config.l2_penalty)), ErrorKind::non_finite,
          "probe loss diverged; lower the learning rate");
  return probe;
}

inline std::size_t predict(const LinearProbe& probe, std::span<const double> x) {
  const auto z = probe_logits(probe, x);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

struct ProbeReport {
  std::string task;
  std::size_t n = 0;
  double accuracy = 0.0;
  double majority_baseline = 0.0;
  std::vector<std::pair<std::string, std::optional<double>>> per_class_auroc;  // nullopt when undefined
};

inline double majority_baseline(const std::vector<std::size_t>& labels, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (auto y : labels) counts.at(y) += 1;
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(labels.size());
}

inline ProbeReport probe_metrics(const LinearProbe& probe, const LabeledEmbeddings& data, const std::string& task = {}) {
  require(data.embeddings.rows() == data.labels.size() && !data.labels.empty(), ErrorKind::dimension_mismatch,
          "embedding rows and labels disagree");
  require(data.embeddings.cols() == probe.weight.cols() && data.classes.size() == probe.weight.rows(),
          ErrorKind::dimension_mismatch, "probe shape does not match the embeddings");
  ProbeReport report;
  report.task = task;
  report.n = data.labels.size();
  std::vector<Vector> probabilities;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto x = data.embeddings.row(i);
    correct += predict(probe, x) == data.labels[i] ? 1 : 0;
    probabilities.push_back(softmax(probe_logits(probe, x)));
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(data.labels.size());
  report.majority_baseline = majority_baseline(data.labels, data.classes.size());
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    std::vector<ScoredPair> scored;
    std::size_t members = 0;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
      const bool in_class = data.labels[i] == c;
      members += in_class ? 1 : 0;
      scored.push_back({probabilities[i][c], in_class});
    }
    std::optional<double> value;
    if (members > 0 && members < data.labels.size()) value = auroc(scored, ScoreOrientation::higher_is_same);
    report.per_class_auroc.emplace_back(data.classes[c], value);
  }
  return report;
}

inline nlohmann::ordered_json probe_report_json(const ProbeReport& report) {
  nlohmann::ordered_json j;
  j["task"] = report.task;
  j["n"] = report.n;
  j["accuracy"] = report.accuracy;
  j["majority_baseline"] = report.majority_baseline;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.per_class_auroc) {
    per_class[name] = value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
  }
  j["per_class_auroc"] = std::move(per_class);
  return j;
}

// The probe as a zero-hidden-layer encoder whose embedding is the logit
// vector; this is the attribute-classifier baseline for verification.
inline EncoderParams linear_encoder_from_probe(const LinearProbe& probe) {
  EncoderParams params{{probe.weight.cols(), {}, probe.weight.rows(), false, 0}, {}};
  params.layers.push_back({probe.weight, probe.bias});
  return params;
}

}  // namespace reid
