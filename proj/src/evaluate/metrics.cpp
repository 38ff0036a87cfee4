#include "inspectlab/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::evaluate {

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  require(k >= 2, "stratified_kfold: k must be at least 2");
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < labels.size(); ++i) by[labels[i]].push_back(i);
  std::string small;
  for (const auto& [label, members] : by)
    if (members.size() < static_cast<std::size_t>(k))
      small += (small.empty() ? "" : ", ") + std::to_string(label) + " (" + std::to_string(members.size()) + ")";
  if (!small.empty())
    fail(ErrorKind::invalid_argument,
         "stratified_kfold: classes with fewer than " + std::to_string(k) + " samples: " + small);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of.assign(labels.size(), -1);
  // Continue the deal where the previous class stopped so fold sizes stay within one overall.
  std::size_t next = 0;
  for (auto& [label, members] : by) {
    Rng rng(derive_seed(seed, "fold", static_cast<std::uint64_t>(label)));
    rng.shuffle(members.begin(), members.end());
    for (auto i : members) plan.fold_of[i] = static_cast<int>(next++ % static_cast<std::size_t>(k));
  }
  return plan;
}

double auc_binary(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "auc_binary: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] != 0) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::invalid_argument, "auc_binary: both classes must be present");
  const double u = pos_rank_sum - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MulticlassAuc auc_multiclass_ovr_weighted(const classify::ProbMatrix& probs, std::span<const int> labels,
                                          std::span<const int> classes) {
  require(probs.rows == labels.size() && probs.cols == classes.size(),
          "auc_multiclass_ovr_weighted: shape mismatch");
  MulticlassAuc out;
  std::vector<double> col(probs.rows);
  std::vector<int> is_c(probs.rows);
  std::size_t counted = 0;
  std::vector<std::pair<std::size_t, double>> terms;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    std::size_t n_c = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
      col[i] = probs.at(i, j);
      is_c[i] = labels[i] == classes[j];
      n_c += static_cast<std::size_t>(is_c[i]);
    }
    if (n_c == 0) {
      out.excluded.push_back(classes[j]);
      continue;
    }
    const double a = auc_binary(col, is_c);
    out.per_class[classes[j]] = a;
    terms.emplace_back(n_c, a);
    counted += n_c;
  }
  if (terms.size() < 2) fail(ErrorKind::invalid_argument, "auc_multiclass_ovr_weighted: fewer than two classes present");
  for (const auto& [n_c, a] : terms) out.weighted += static_cast<double>(n_c) / static_cast<double>(counted) * a;
  return out;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double P = 0, N = 0;
  for (int l : labels) (l != 0 ? P : N) += 1;
  std::vector<RocPoint> pts{{0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1;
      ++j;
    }
    pts.push_back({N > 0 ? fp / N : 0.0, P > 0 ? tp / P : 0.0});
    i = j;
  }
  return pts;
}

}  // namespace inspectlab::evaluate
