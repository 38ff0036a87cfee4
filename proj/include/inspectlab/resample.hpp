#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inspectlab/features.hpp"

namespace inspectlab::resample {

using features::FeatureMatrix;

enum class Strategy { random, smote, adasyn };
std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view text);

struct ResamplePlan {
  Strategy strategy = Strategy::random;
  int k_neighbors = 5;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::map<int, std::size_t> per_class_targets;  // synthetic rows to generate per class label
  std::vector<std::string> warnings;             // fallbacks taken
};

/// parent is a row index into the input matrix. Interpolated rows also carry
/// neighbor and lambda: values = X[parent] + lambda·(X[neighbor] − X[parent]).
struct SyntheticRow {
  std::vector<float> values;
  int label = 0;
  std::size_t parent = 0;
  std::optional<std::size_t> neighbor;
  std::optional<double> lambda;
};

struct Result {
  FeatureMatrix X;  // input rows unchanged, then synthetic rows
  std::vector<int> y;
  std::vector<SyntheticRow> rows;
  ResamplePlan plan;
};

struct Options {
  int k_neighbors = 5;
  double beta = 1.0;
  std::uint64_t seed = 0;
  /// Test hook: use this λ for every interpolated point instead of drawing it.
  std::optional<double> fixed_lambda;
};

Result random_oversample(const FeatureMatrix& X, std::span<const int> y, std::uint64_t seed);
Result smote(const FeatureMatrix& X, std::span<const int> y, const Options& options);
Result adasyn(const FeatureMatrix& X, std::span<const int> y, const Options& options);
Result oversample(Strategy strategy, const FeatureMatrix& X, std::span<const int> y, const Options& options);

/// Indices of the k nearest rows to `row` among `candidates` (Euclidean), excluding `row`.
/// Ties go to the lower index.
std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& X, std::size_t row,
                                           std::span<const std::size_t> candidates, std::size_t k);

/// Splits `total` proportionally to integer weights with largest-remainder rounding.
/// The result sums to `total` exactly; ties in remainder go to the lower index.
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> weights, std::size_t total);

nlohmann::json to_json(const ResamplePlan& plan);
nlohmann::json to_json(const SyntheticRow& row, const FeatureMatrix& source);

}  // namespace inspectlab::resample
