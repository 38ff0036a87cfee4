#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "inspectlab/classify.hpp"

namespace inspectlab::evaluate {

struct FoldPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // one entry per sample
  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Shuffles each class with its own seeded stream, then deals its members
/// round-robin into k folds. Errors name every class with fewer than k samples.
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Mann–Whitney AUC with average ranks for ties. labels: nonzero is positive.
double auc_binary(std::span<const double> scores, std::span<const int> labels);

struct MulticlassAuc {
  double weighted = 0.0;
  std::map<int, double> per_class;
  std::vector<int> excluded;  // classes with no instances
};

/// One-vs-rest AUC per class weighted by prevalence. Column j of `probs` scores classes[j].
MulticlassAuc auc_multiclass_ovr_weighted(const classify::ProbMatrix& probs, std::span<const int> labels,
                                          std::span<const int> classes);

struct RocPoint {
  double fpr, tpr;
};
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

}  // namespace inspectlab::evaluate
