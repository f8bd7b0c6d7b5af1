#pragma once

// Triplet hinge loss on squared Euclidean distance, its gradient, and
// triplet mining over identity-labelled embeddings.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reid/error.hpp"
#include "reid/random.hpp"
#include "reid/tensor.hpp"

namespace reid {

inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::dimension_mismatch,
          "vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

// Hinge argument |a-p|^2 - |a-n|^2 + alpha.
inline double triplet_margin(std::span<const double> anchor, std::span<const double> positive,
                             std::span<const double> negative, double alpha) {
  require(alpha >= 0.0, ErrorKind::invalid_argument, "margin must be nonnegative");
  return squared_l2(anchor, positive) - squared_l2(anchor, negative) + alpha;
}

inline double triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, double alpha) {
  return std::max(triplet_margin(anchor, positive, negative, alpha), 0.0);
}

struct TripletGradient {
  Vector anchor;
  Vector positive;
  Vector negative;
};

// Zero on the inactive side and on the hinge boundary itself.
inline TripletGradient triplet_loss_grad(std::span<const double> anchor, std::span<const double> positive,
                                         std::span<const double> negative, double alpha) {
  const std::size_t d = anchor.size();
  TripletGradient g{Vector(d, 0.0), Vector(d, 0.0), Vector(d, 0.0)};
  if (!(triplet_margin(anchor, positive, negative, alpha) > 0.0)) return g;
  for (std::size_t i = 0; i < d; ++i) {
    g.anchor[i] = 2.0 * (negative[i] - positive[i]);
    g.positive[i] = -2.0 * (anchor[i] - positive[i]);
    g.negative[i] = 2.0 * (anchor[i] - negative[i]);
  }
  return g;
}

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  bool operator==(const Triplet&) const = default;
};

enum class MiningStrategy { random_within_batch, semi_hard_negative, hardest_negative };

inline const char* to_string(MiningStrategy s) {
  switch (s) {
    case MiningStrategy::random_within_batch: return "random";
    case MiningStrategy::semi_hard_negative: return "semi_hard";
    case MiningStrategy::hardest_negative: return "hardest";
  }
  return "?";
}

inline MiningStrategy parse_mining_strategy(const std::string& name) {
  if (name == "random") return MiningStrategy::random_within_batch;
  if (name == "semi_hard") return MiningStrategy::semi_hard_negative;
  if (name == "hardest") return MiningStrategy::hardest_negative;
  fail(ErrorKind::invalid_argument, "unknown mining strategy '" + name + "' (random|semi_hard|hardest)");
}

// Ordered anchor-positive pairs (a != p, same id) in index order.
inline std::vector<std::pair<std::size_t, std::size_t>> anchor_positive_pairs(
    std::span<const std::string> patient_ids) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) groups[patient_ids[i]].push_back(i);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < patient_ids.size(); ++a) {
    for (auto p : groups[patient_ids[a]]) {
      if (p != a) pairs.emplace_back(a, p);
    }
  }
  return pairs;
}

// Picks min(count, #anchor-positive pairs) anchor-positive pairs (all of them,
// in index order, when count covers them; otherwise a seeded sample without
// replacement) and attaches one negative to each:
//  - random: uniform over the anchor's negatives
//  - semi_hard: the closest negative with d_ap < d_an < d_ap + alpha, falling
//    back to the hardest negative when that band is empty
//  - hardest: argmin d_an
// Distance ties resolve to the lowest index.
inline std::vector<Triplet> mine_triplets(const Matrix& embeddings, std::span<const std::string> patient_ids,
                                          MiningStrategy strategy, std::size_t count, std::uint64_t seed,
                                          double alpha) {
  require(embeddings.rows() == patient_ids.size(), ErrorKind::dimension_mismatch,
          "embedding rows and patient ids disagree");
  require(count > 0, ErrorKind::invalid_argument, "triplet count must be positive");
  auto pairs = anchor_positive_pairs(patient_ids);
  require(!pairs.empty(), ErrorKind::insufficient_data, "no anchor-positive pair (no patient has two records)");
  require(std::any_of(patient_ids.begin(), patient_ids.end(),
                      [&](const std::string& id) { return id != patient_ids.front(); }),
          ErrorKind::insufficient_data, "fewer than two distinct patients");

  Rng rng(seed);
  if (count < pairs.size()) pairs = rng.sample(std::move(pairs), count);

  std::vector<Triplet> triplets;
  triplets.reserve(pairs.size());
  std::vector<std::size_t> negatives;
  for (const auto& [a, p] : pairs) {
    negatives.clear();
    for (std::size_t n = 0; n < patient_ids.size(); ++n) {
      if (patient_ids[n] != patient_ids[a]) negatives.push_back(n);
    }
    std::size_t chosen = negatives.front();
    if (strategy == MiningStrategy::random_within_batch) {
      chosen = negatives[rng.index(negatives.size())];
    } else {
      const auto anchor = embeddings.row(a);
      const double d_ap = squared_l2(anchor, embeddings.row(p));
      double hardest = std::numeric_limits<double>::infinity();
      double best_band = std::numeric_limits<double>::infinity();
      std::size_t hardest_idx = negatives.front();
      std::size_t band_idx = patient_ids.size();
      for (auto n : negatives) {
        const double d_an = squared_l2(anchor, embeddings.row(n));
        if (d_an < hardest) {
          hardest = d_an;
          hardest_idx = n;
        }
        if (d_an > d_ap && d_an < d_ap + alpha && d_an < best_band) {
          best_band = d_an;
          band_idx = n;
        }
      }
      chosen = (strategy == MiningStrategy::semi_hard_negative && band_idx < patient_ids.size()) ? band_idx
                                                                                                 : hardest_idx;
    }
    triplets.push_back({a, p, chosen});
  }
  return triplets;
}

}  // namespace reid
