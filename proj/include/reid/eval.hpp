#pragma once

// Verification evaluation: pair construction under the three test settings,
// distance scoring, ROC / AUROC / EER / TPR@FPR and threshold calibration.
//
// Scores are squared embedding distances, so by default a pair is predicted
// "same patient" iff score <= t. ScoreOrientation::higher_is_same flips every
// comparison for similarity-style scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/dataset.hpp"
#include "reid/encoder.hpp"
#include "reid/error.hpp"
#include "reid/io.hpp"
#include "reid/metric.hpp"
#include "reid/random.hpp"

namespace reid {

enum class ScoreOrientation { lower_is_same, higher_is_same };

struct PairSetting {
  enum class Kind { random_negatives, same_attribute_negatives, out_of_distribution };

  Kind kind = Kind::random_negatives;
  std::string attribute;               // same_attribute_negatives
  const DataSet* shifted = nullptr;    // out_of_distribution

  static PairSetting random() { return {}; }
  static PairSetting same_attribute(std::string name) { return {Kind::same_attribute_negatives, std::move(name), nullptr}; }
  static PairSetting ood(const DataSet& shifted) { return {Kind::out_of_distribution, {}, &shifted}; }

  std::string name() const {
    switch (kind) {
      case Kind::random_negatives: return "random";
      case Kind::same_attribute_negatives: return "same_attribute:" + attribute;
      case Kind::out_of_distribution: return "ood";
    }
    return "?";
  }
};

// The dataset a setting draws its pairs from.
inline const DataSet& pair_source(const DataSet& dataset, const PairSetting& setting) {
  if (setting.kind == PairSetting::Kind::out_of_distribution) {
    require(setting.shifted != nullptr, ErrorKind::invalid_argument, "OOD setting without a shifted dataset");
    return *setting.shifted;
  }
  return dataset;
}

struct Pair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same = false;

  bool operator==(const Pair&) const = default;
};

struct PairSet {
  std::vector<Pair> pairs;
  PairSetting setting;
  std::uint64_t seed = 0;
};

struct EligiblePairs {
  std::vector<Pair> positives;
  std::vector<Pair> negatives;
};

// Every unordered pair (a < b) admissible under the setting.
inline EligiblePairs eligible_pairs(const DataSet& dataset, const PairSetting& setting) {
  const auto& source = pair_source(dataset, setting);
  const bool match_attribute = setting.kind == PairSetting::Kind::same_attribute_negatives;
  if (match_attribute) {
    require(source.schema.count(setting.attribute) == 1, ErrorKind::invalid_argument,
            "unknown attribute '" + setting.attribute + "'");
  }
  EligiblePairs out;
  const auto& records = source.records;
  for (std::size_t a = 0; a < records.size(); ++a) {
    for (std::size_t b = a + 1; b < records.size(); ++b) {
      if (records[a].patient_id == records[b].patient_id) {
        out.positives.push_back({a, b, true});
      } else if (!match_attribute ||
                 records[a].attributes.at(setting.attribute) == records[b].attributes.at(setting.attribute)) {
        out.negatives.push_back({a, b, false});
      }
    }
  }
  return out;
}

// n_pos same-patient pairs then n_neg different-patient pairs, each drawn
// uniformly without replacement from the eligible population.
inline PairSet build_pairs(const DataSet& dataset, const PairSetting& setting, std::size_t n_pos, std::size_t n_neg,
                           std::uint64_t seed) {
  require(n_pos > 0 && n_neg > 0, ErrorKind::invalid_argument, "pair counts must be positive");
  auto eligible = eligible_pairs(dataset, setting);
  require(eligible.positives.size() >= n_pos, ErrorKind::insufficient_data,
          "requested " + std::to_string(n_pos) + " positive pairs but only " +
              std::to_string(eligible.positives.size()) + " exist (short by " +
              std::to_string(n_pos - eligible.positives.size()) + ")");
  require(eligible.negatives.size() >= n_neg, ErrorKind::insufficient_data,
          "requested " + std::to_string(n_neg) + " negative pairs under '" + setting.name() + "' but only " +
              std::to_string(eligible.negatives.size()) + " exist (short by " +
              std::to_string(n_neg - eligible.negatives.size()) + ")");
  Rng rng(seed);
  PairSet set{rng.sample(std::move(eligible.positives), n_pos), setting, seed};
  auto negatives = rng.sample(std::move(eligible.negatives), n_neg);
  set.pairs.insert(set.pairs.end(), negatives.begin(), negatives.end());
  return set;
}

struct ScoredPair {
  double score = 0.0;
  bool same = false;
};

inline std::vector<ScoredPair> score_pairs(const EncoderParams& params, const DataSet& dataset, const PairSet& pairs) {
  const auto& source = pair_source(dataset, pairs.setting);
  std::map<std::size_t, Vector> cache;
  auto embed = [&](std::size_t i) -> const Vector& {
    require(i < source.records.size(), ErrorKind::invalid_argument,
            "pair index " + std::to_string(i) + " out of range (" + std::to_string(source.records.size()) + " records)");
    auto it = cache.find(i);
    if (it == cache.end()) it = cache.emplace(i, forward(params, source.records[i].features)).first;
    return it->second;
  };
  std::vector<ScoredPair> scored;
  scored.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    const auto& ea = embed(p.a);
    const auto& eb = embed(p.b);
    scored.push_back({squared_l2(ea, eb), p.same});
  }
  return scored;
}

namespace detail {

struct Keyed {
  double key;
  bool same;
};

// Maps scores to keys where lower always means "same", sorted ascending.
inline std::vector<Keyed> sorted_keys(const std::vector<ScoredPair>& scored, ScoreOrientation orientation) {
  std::vector<Keyed> keys;
  keys.reserve(scored.size());
  std::size_t pos = 0;
  for (const auto& s : scored) {
    require(!std::isnan(s.score), ErrorKind::non_finite, "NaN score");
    keys.push_back({orientation == ScoreOrientation::lower_is_same ? s.score : -s.score, s.same});
    pos += s.same ? 1 : 0;
  }
  require(pos > 0 && pos < scored.size(), ErrorKind::insufficient_data,
          "scores must include both same and different pairs");
  std::sort(keys.begin(), keys.end(), [](const Keyed& x, const Keyed& y) { return x.key < y.key; });
  return keys;
}

inline double from_key(double key, ScoreOrientation orientation) {
  return orientation == ScoreOrientation::lower_is_same ? key : -key;
}

}  // namespace detail

// P(positive scores below negative) + P(tie) / 2, by one sort and a sweep
// over tie groups. Twice the Mann-Whitney count is accumulated in integers.
inline double auroc(const std::vector<ScoredPair>& scored,
                    ScoreOrientation orientation = ScoreOrientation::lower_is_same) {
  const auto keys = detail::sorted_keys(scored, orientation);
  std::uint64_t positives_before = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t twice_u = 0;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    std::uint64_t group_pos = 0;
    std::uint64_t group_neg = 0;
    while (j < keys.size() && keys[j].key == keys[i].key) {
      (keys[j].same ? group_pos : group_neg) += 1;
      ++j;
    }
    twice_u += group_neg * (2 * positives_before + group_pos);
    positives_before += group_pos;
    n_pos += group_pos;
    i = j;
  }
  const std::uint64_t n_neg = keys.size() - n_pos;
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sweep order: predictions of "same" only grow
  ScoreOrientation orientation = ScoreOrientation::lower_is_same;
};

// One point per distinct score plus the starting point (0, 0), whose
// threshold is infinite (nothing predicted same).
inline RocCurve roc_curve(const std::vector<ScoredPair>& scored,
                          ScoreOrientation orientation = ScoreOrientation::lower_is_same) {
  const auto keys = detail::sorted_keys(scored, orientation);
  double n_pos = 0.0;
  for (const auto& k : keys) n_pos += k.same ? 1.0 : 0.0;
  const double n_neg = static_cast<double>(keys.size()) - n_pos;

  RocCurve curve;
  curve.orientation = orientation;
  curve.points.push_back({detail::from_key(-std::numeric_limits<double>::infinity(), orientation), 0.0, 0.0});
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j].key == keys[i].key) {
      (keys[j].same ? tp : fp) += 1.0;
      ++j;
    }
    curve.points.push_back({detail::from_key(keys[i].key, orientation), fp / n_neg, tp / n_pos});
    i = j;
  }
  return curve;
}

inline double roc_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i - 1];
    const auto& q = curve.points[i];
    area += (q.fpr - p.fpr) * (q.tpr + p.tpr) / 2.0;
  }
  return area;
}

// Operating point where FPR = 1 - TPR, interpolated linearly between points.
inline double eer(const RocCurve& curve) {
  const auto& pts = curve.points;
  if (pts.empty()) return 0.5;
  auto gap = [](const RocPoint& p) { return p.fpr + p.tpr - 1.0; };
  if (gap(pts.front()) >= 0.0) return pts.front().fpr;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double g0 = gap(pts[i - 1]);
    const double g1 = gap(pts[i]);
    if (g1 >= 0.0) {
      if (g1 == 0.0) return pts[i].fpr;
      const double lambda = -g0 / (g1 - g0);
      return pts[i - 1].fpr + lambda * (pts[i].fpr - pts[i - 1].fpr);
    }
  }
  return pts.back().fpr;
}

// Highest TPR among sweep points whose FPR stays within the budget.
inline double tpr_at_fpr(const RocCurve& curve, double max_fpr) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.fpr <= max_fpr) best = std::max(best, p.tpr);
  }
  return best;
}

inline bool predicts_same(double score, double threshold, ScoreOrientation orientation) {
  return orientation == ScoreOrientation::lower_is_same ? score <= threshold : score >= threshold;
}

inline double accuracy_at(const std::vector<ScoredPair>& scored, double threshold,
                          ScoreOrientation orientation = ScoreOrientation::lower_is_same) {
  require(!scored.empty(), ErrorKind::insufficient_data, "no scored pairs");
  std::size_t correct = 0;
  for (const auto& s : scored) correct += predicts_same(s.score, threshold, orientation) == s.same ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(scored.size());
}

struct ThresholdCriterion {
  enum class Kind { max_accuracy, target_fpr };
  Kind kind = Kind::max_accuracy;
  double target = 0.0;

  static ThresholdCriterion max_accuracy() { return {}; }
  static ThresholdCriterion target_fpr(double value) { return {Kind::target_fpr, value}; }
};

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// Candidate thresholds are the midpoints between adjacent distinct scores
// plus one point beyond each end. max_accuracy keeps the first (lowest, in
// the lower-is-same direction) best candidate; target_fpr keeps the last
// candidate whose FPR is within the target.
inline ThresholdChoice select_threshold(const std::vector<ScoredPair>& scored, ThresholdCriterion criterion,
                                        ScoreOrientation orientation = ScoreOrientation::lower_is_same) {
  const auto keys = detail::sorted_keys(scored, orientation);
  double n_pos = 0.0;
  for (const auto& k : keys) n_pos += k.same ? 1.0 : 0.0;
  const double n_neg = static_cast<double>(keys.size()) - n_pos;
  const double total = static_cast<double>(keys.size());

  auto below = [](double k) { return k - std::max(1.0, std::abs(k)); };
  auto above = [](double k) { return k + std::max(1.0, std::abs(k)); };

  std::optional<ThresholdChoice> best;
  double tp = 0.0;
  double fp = 0.0;
  auto consider = [&](double key_threshold) {
    ThresholdChoice c{detail::from_key(key_threshold, orientation), (tp + (n_neg - fp)) / total, fp / n_neg,
                      tp / n_pos};
    if (criterion.kind == ThresholdCriterion::Kind::max_accuracy) {
      if (!best || c.accuracy > best->accuracy) best = c;
    } else if (c.fpr <= criterion.target) {
      best = c;
    }
  };
  consider(below(keys.front().key));
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j].key == keys[i].key) {
      (keys[j].same ? tp : fp) += 1.0;
      ++j;
    }
    consider(j < keys.size() ? keys[i].key + (keys[j].key - keys[i].key) / 2.0 : above(keys[i].key));
    i = j;
  }
  // the below-everything candidate has FPR 0, so target_fpr always finds one
  return *best;
}

// ---------------------------------------------------------------------------

struct EvalConfig {
  std::size_t n_pos = 1000;
  std::size_t n_neg = 1000;
  std::uint64_t seed = 0;
  std::vector<double> fpr_targets{0.01, 0.05, 0.1};
  ThresholdCriterion criterion = ThresholdCriterion::max_accuracy();
  ScoreOrientation orientation = ScoreOrientation::lower_is_same;
  // Use min(requested, eligible) instead of failing on small datasets.
  bool clamp_to_available = false;
};

struct VerificationReport {
  std::string setting;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double auroc = 0.0;
  double eer = 0.0;
  std::vector<std::pair<double, double>> tpr_at_fpr;
  double threshold = 0.0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  RocCurve curve;
};

namespace detail {

inline PairSet build_pairs_for(const DataSet& dataset, const PairSetting& setting, const EvalConfig& config,
                               std::uint64_t seed) {
  std::size_t n_pos = config.n_pos;
  std::size_t n_neg = config.n_neg;
  if (config.clamp_to_available) {
    const auto eligible = eligible_pairs(dataset, setting);
    n_pos = std::min(n_pos, eligible.positives.size());
    n_neg = std::min(n_neg, eligible.negatives.size());
    require(n_pos > 0, ErrorKind::insufficient_data, "no positive pairs exist");
    require(n_neg > 0, ErrorKind::insufficient_data, "no eligible negative pairs exist");
  }
  return build_pairs(dataset, setting, n_pos, n_neg, seed);
}

}  // namespace detail

struct Calibration {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Threshold chosen on random-negative pairs of the validation set.
inline Calibration calibrate_threshold(const EncoderParams& params, const DataSet& validation, const EvalConfig& config) {
  try {
    const auto pairs = detail::build_pairs_for(validation, PairSetting::random(), config, derive_seed(config.seed, 0xCA1));
    const auto scored = score_pairs(params, validation, pairs);
    const auto choice = select_threshold(scored, config.criterion, config.orientation);
    return {choice.threshold, choice.accuracy};
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("validation calibration: ") + e.what());
  }
}

inline VerificationReport evaluate_setting(const EncoderParams& params, const DataSet& dataset,
                                           const PairSetting& setting, const EvalConfig& config,
                                           const Calibration& calibration, std::uint64_t seed) {
  try {
    const auto& source = pair_source(dataset, setting);
    const auto pairs = detail::build_pairs_for(source, setting, config, seed);
    const auto scored = score_pairs(params, source, pairs);
    VerificationReport report;
    report.setting = setting.name();
    for (const auto& p : pairs.pairs) (p.same ? report.n_pos : report.n_neg) += 1;
    report.auroc = auroc(scored, config.orientation);
    report.curve = roc_curve(scored, config.orientation);
    report.eer = eer(report.curve);
    for (double f : config.fpr_targets) report.tpr_at_fpr.emplace_back(f, tpr_at_fpr(report.curve, f));
    report.threshold = calibration.threshold;
    report.validation_accuracy = calibration.accuracy;
    report.test_accuracy = accuracy_at(scored, calibration.threshold, config.orientation);
    return report;
  } catch (const Error& e) {
    throw Error(e.kind(), "setting '" + setting.name() + "': " + e.what());
  }
}

inline std::vector<VerificationReport> evaluate(const EncoderParams& params, const DataSet& dataset,
                                                const std::vector<PairSetting>& settings, const EvalConfig& config,
                                                const DataSet& validation) {
  const auto calibration = calibrate_threshold(params, validation, config);
  std::vector<VerificationReport> reports;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    reports.push_back(evaluate_setting(params, dataset, settings[s], config, calibration, derive_seed(config.seed, s)));
  }
  return reports;
}

inline nlohmann::ordered_json report_json(const VerificationReport& report) {
  nlohmann::ordered_json j;
  j["setting"] = report.setting;
  j["n_pos"] = report.n_pos;
  j["n_neg"] = report.n_neg;
  j["auroc"] = report.auroc;
  j["eer"] = report.eer;
  nlohmann::ordered_json tpr = nlohmann::ordered_json::object();
  for (const auto& [f, t] : report.tpr_at_fpr) tpr[format_double(f)] = t;
  j["tpr_at_fpr"] = std::move(tpr);
  j["threshold"] = report.threshold;
  j["validation_accuracy"] = report.validation_accuracy;
  j["test_accuracy"] = report.test_accuracy;
  j["decision_rule"] = report.curve.orientation == ScoreOrientation::lower_is_same ? "same_if_score_le_threshold"
                                                                                   : "same_if_score_ge_threshold";
  return j;
}

inline std::string roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out += format_double(p.threshold) + "," + format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  }
  return out;
}

}  // namespace reid
