#pragma once

// Independent reference implementations used to pin expected values in
// tests. Each is written the slow, obvious way on purpose: double loops
// and direct formula transcription, no shared code with the library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

// Classic deterministic-mastery DINA: p = (1-s)^eta * g^(1-eta) with
// eta = 1 iff every required concept is mastered.
inline double classic_dina(const std::vector<int>& mastery, double s, double g,
                           const std::vector<std::size_t>& required) {
  int eta = 1;
  for (std::size_t k : required)
    if (mastery.at(k) == 0) eta = 0;
  return eta == 1 ? (1.0 - s) : g;
}

// Contrastive loss by direct double loop. Rows of anchors and candidates
// must be L2-normalized by the caller. The denominator includes the
// positive term.
inline double infonce_brute(const std::vector<std::vector<double>>& anchors,
                            const std::vector<std::vector<double>>& candidates,
                            const std::vector<std::size_t>& positive, double tau) {
  if (anchors.size() != positive.size()) throw std::logic_error("oracle: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double d = 0.0;
      for (std::size_t t = 0; t < a.size(); ++t) d += a[t] * b[t];
      return d;
    };
    double denom = 0.0;
    for (const auto& c : candidates) denom += std::exp(dot(anchors[i], c) / tau);
    const double num = std::exp(dot(anchors[i], candidates.at(positive[i])) / tau);
    total += -std::log(num / denom);
  }
  return total / static_cast<double>(anchors.size());
}

// Area under the ROC curve by comparing every positive-negative pair,
// ties worth half.
inline double auc_pairwise(const std::vector<double>& scores, const std::vector<double>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0.0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  if (pairs == 0) throw std::logic_error("oracle: auc needs both classes");
  return wins / static_cast<double>(pairs);
}

// Accuracy at the 0.5 threshold and root mean squared error, transcribed
// directly from their definitions.
inline double accuracy_at_half(const std::vector<double>& scores,
                               const std::vector<double>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double hard = scores[i] >= 0.5 ? 1.0 : 0.0;
    if (hard == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

inline double rmse(const std::vector<double>& scores, const std::vector<double>& labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    acc += (scores[i] - labels[i]) * (scores[i] - labels[i]);
  return std::sqrt(acc / static_cast<double>(scores.size()));
}

// Spearman rank correlation with midranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0.0, equal = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) throw std::logic_error("oracle: constant ranks");
  return num / std::sqrt(dx * dy);
}

}  // namespace oracle
