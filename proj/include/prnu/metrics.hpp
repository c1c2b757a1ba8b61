#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "prnu/plane.hpp"

namespace prnu {

inline void require_two_classes(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (pos == 0 || pos == labels.size()) throw InvalidArgument("need at least one positive and one negative label");
}

/// Mann-Whitney AUC with mid-ranks for ties: P(pos > neg) + P(tie)/2.
inline double roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  require_two_classes(scores, labels);
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(m) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // accept when score >= threshold
};

/// Operating points from the strictest threshold (+inf, nothing accepted) down to the
/// lowest score (everything accepted). One point per distinct score.
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, const std::vector<bool>& labels) {
  require_two_classes(scores, labels);
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(m) - n_pos;

  std::vector<RocPoint> pts{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < m;) {
    const double t = scores[order[i]];
    while (i < m && scores[order[i]] == t) {
      (labels[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    pts.push_back({fp / n_neg, tp / n_pos, t});
  }
  return pts;
}

/// Equal error rate: where the false-accept rate meets the false-reject rate, linearly
/// interpolated between the two bracketing ROC points.
inline double eer_from_roc(const std::vector<RocPoint>& roc) {
  // d = FAR - FRR = fpr - (1 - tpr) rises monotonically from -1 to +1 along the curve.
  for (std::size_t i = 1; i < roc.size(); ++i) {
    const double d_prev = roc[i - 1].fpr - (1.0 - roc[i - 1].tpr);
    const double d_cur = roc[i].fpr - (1.0 - roc[i].tpr);
    if (d_prev < 0.0 && d_cur >= 0.0) {
      const double t = d_prev / (d_prev - d_cur);
      return roc[i - 1].fpr + t * (roc[i].fpr - roc[i - 1].fpr);
    }
  }
  return roc.back().fpr;  // unreachable for a complete curve
}

inline double eer(std::span<const double> scores, const std::vector<bool>& labels) {
  return eer_from_roc(roc_curve(scores, labels));
}

/// Percentage of queries whose true device is among the first k entries of its ranking.
inline double topk_accuracy(const std::vector<std::vector<std::string>>& rankings, const std::vector<std::string>& truth,
                            int k) {
  if (rankings.size() != truth.size()) throw InvalidArgument("topk_accuracy: rankings and truth differ in length");
  if (rankings.empty()) throw InvalidArgument("topk_accuracy: no queries");
  if (k < 1) throw InvalidArgument("topk_accuracy: k must be >= 1");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& r = rankings[q];
    if (static_cast<std::size_t>(k) > r.size())
      throw InvalidArgument("topk_accuracy: k = " + std::to_string(k) + " exceeds gallery of " + std::to_string(r.size()));
    if (std::find(r.begin(), r.begin() + k, truth[q]) != r.begin() + k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rankings.size());
}

}  // namespace prnu
