#include "inspectlab/resample.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::resample {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::smote: return "smote";
    case Strategy::adasyn: return "adasyn";
  }
  return "?";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "random") return Strategy::random;
  if (text == "smote") return Strategy::smote;
  if (text == "adasyn") return Strategy::adasyn;
  fail(ErrorKind::config, "unknown resampling strategy '" + std::string(text) + "'");
}

namespace {

struct ClassInfo {
  int label;
  std::vector<std::size_t> members;
};

std::vector<ClassInfo> group_by_class(const FeatureMatrix& X, std::span<const int> y) {
  if (X.rows == 0) fail(ErrorKind::invalid_argument, "resample: empty input");
  require(y.size() == X.rows, "resample: label count does not match row count");
  std::map<int, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < y.size(); ++i) by[y[i]].push_back(i);
  std::vector<ClassInfo> out;
  for (auto& [label, m] : by) out.push_back({label, std::move(m)});
  return out;
}

std::size_t majority_count(const std::vector<ClassInfo>& classes) {
  std::size_t m = 0;
  for (const auto& c : classes) m = std::max(m, c.members.size());
  return m;
}

double sq_dist(const FeatureMatrix& X, std::size_t a, std::size_t b) {
  double s = 0.0;
  const auto ra = X.row(a), rb = X.row(b);
  for (std::size_t j = 0; j < X.cols; ++j) {
    const double d = static_cast<double>(ra[j]) - static_cast<double>(rb[j]);
    s += d * d;
  }
  return s;
}

SyntheticRow interpolate(const FeatureMatrix& X, int label, std::size_t parent, std::size_t neighbor, double lambda) {
  SyntheticRow r;
  r.label = label;
  r.parent = parent;
  r.neighbor = neighbor;
  r.lambda = lambda;
  r.values.resize(X.cols);
  const auto a = X.row(parent), b = X.row(neighbor);
  for (std::size_t j = 0; j < X.cols; ++j)
    r.values[j] = static_cast<float>(a[j] + lambda * (static_cast<double>(b[j]) - a[j]));
  return r;
}

std::vector<SyntheticRow> random_copies(const FeatureMatrix& X, const ClassInfo& c, std::size_t n, Rng& rng) {
  std::vector<SyntheticRow> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t parent = c.members[rng.index(c.members.size())];
    const auto v = X.row(parent);
    out.push_back({std::vector<float>(v.begin(), v.end()), c.label, parent, std::nullopt, std::nullopt});
  }
  return out;
}

Result assemble(const FeatureMatrix& X, std::span<const int> y, ResamplePlan plan,
                std::vector<std::vector<SyntheticRow>> per_class) {
  Result r;
  r.X = X;
  r.y.assign(y.begin(), y.end());
  r.plan = std::move(plan);
  for (auto& rows : per_class) {
    for (auto& row : rows) {
      const std::string id = std::string(to_string(r.plan.strategy)) + ":" + std::to_string(row.label) + ":" +
                             std::to_string(r.rows.size());
      r.X.append_row(row.values, id);
      r.y.push_back(row.label);
      r.rows.push_back(std::move(row));
    }
  }
  return r;
}

double draw_lambda(Rng& rng, const Options& o) { return o.fixed_lambda ? *o.fixed_lambda : rng.uniform(); }

void warn(ResamplePlan& plan, std::string message) {
  std::cerr << "warning: " << message << "\n";
  plan.warnings.push_back(std::move(message));
}

}  // namespace

std::vector<std::size_t> nearest_neighbors(const FeatureMatrix& X, std::size_t row,
                                           std::span<const std::size_t> candidates, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(candidates.size());
  for (auto c : candidates)
    if (c != row) d.emplace_back(sq_dist(X, row, c), c);
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

std::vector<std::size_t> largest_remainder(std::span<const std::size_t> weights, std::size_t total) {
  std::vector<std::size_t> out(weights.size(), 0);
  const std::size_t sum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (sum == 0 || total == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> rem;  // (remainder, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const unsigned __int128 p = static_cast<unsigned __int128>(weights[i]) * total;
    out[i] = static_cast<std::size_t>(p / sum);
    rem.emplace_back(static_cast<std::size_t>(p % sum), i);
    assigned += out[i];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[rem[i].second];
  return out;
}

Result random_oversample(const FeatureMatrix& X, std::span<const int> y, std::uint64_t seed) {
  const auto classes = group_by_class(X, y);
  const std::size_t majority = majority_count(classes);
  ResamplePlan plan{Strategy::random, 0, 1.0, seed, {}, {}};
  std::vector<std::vector<SyntheticRow>> per_class(classes.size());
#pragma omp parallel for schedule(static)
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    Rng rng(derive_seed(seed, "random", static_cast<std::uint64_t>(classes[ci].label)));
    per_class[ci] = random_copies(X, classes[ci], majority - classes[ci].members.size(), rng);
  }
  for (const auto& c : classes) plan.per_class_targets[c.label] = majority - c.members.size();
  return assemble(X, y, std::move(plan), std::move(per_class));
}

Result smote(const FeatureMatrix& X, std::span<const int> y, const Options& o) {
  require(o.k_neighbors >= 1, "smote: k_neighbors must be at least 1");
  const auto classes = group_by_class(X, y);
  const std::size_t majority = majority_count(classes);
  ResamplePlan plan{Strategy::smote, o.k_neighbors, 1.0, o.seed, {}, {}};
  std::vector<std::vector<SyntheticRow>> per_class(classes.size());
  for (const auto& c : classes) {
    plan.per_class_targets[c.label] = majority - c.members.size();
    if (c.members.size() == 1 && c.members.size() < majority)
      warn(plan, "smote: class " + std::to_string(c.label) + " has one sample; using random oversampling");
  }
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& c = classes[ci];
    const std::size_t need = majority - c.members.size();
    if (need == 0) continue;
    Rng rng(derive_seed(o.seed, "smote", static_cast<std::uint64_t>(c.label)));
    if (c.members.size() == 1) {
      per_class[ci] = random_copies(X, c, need, rng);
      continue;
    }
    const std::size_t k = std::min<std::size_t>(o.k_neighbors, c.members.size() - 1);
    std::vector<std::vector<std::size_t>> nn(c.members.size());
    for (std::size_t i = 0; i < c.members.size(); ++i) nn[i] = nearest_neighbors(X, c.members[i], c.members, k);
    for (std::size_t t = 0; t < need; ++t) {
      const std::size_t i = rng.index(c.members.size());
      const std::size_t neighbor = nn[i][rng.index(k)];
      per_class[ci].push_back(interpolate(X, c.label, c.members[i], neighbor, draw_lambda(rng, o)));
    }
  }
  return assemble(X, y, std::move(plan), std::move(per_class));
}

Result adasyn(const FeatureMatrix& X, std::span<const int> y, const Options& o) {
  require(o.k_neighbors >= 1, "adasyn: k_neighbors must be at least 1");
  require(o.beta >= 0.0 && o.beta <= 1.0, "adasyn: beta must lie in [0, 1]");
  const auto classes = group_by_class(X, y);
  const std::size_t majority = majority_count(classes);
  ResamplePlan plan{Strategy::adasyn, o.k_neighbors, o.beta, o.seed, {}, {}};
  std::vector<std::size_t> all(X.rows);
  std::iota(all.begin(), all.end(), 0);

  std::vector<std::size_t> G(classes.size());
  std::vector<std::vector<std::size_t>> delta(classes.size());
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& c = classes[ci];
    G[ci] = static_cast<std::size_t>(std::floor(o.beta * static_cast<double>(majority - c.members.size()) + 1e-9));
    plan.per_class_targets[c.label] = G[ci];
    if (G[ci] == 0) continue;
    if (c.members.size() == 1) {
      warn(plan, "adasyn: class " + std::to_string(c.label) + " has one sample; using random oversampling");
      continue;
    }
    const std::size_t k = std::min<std::size_t>(o.k_neighbors, X.rows - 1);
    delta[ci].resize(c.members.size());
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      std::size_t d = 0;
      for (auto j : nearest_neighbors(X, c.members[i], all, k)) d += (y[j] != c.label);
      delta[ci][i] = d;
    }
    if (std::accumulate(delta[ci].begin(), delta[ci].end(), std::size_t{0}) == 0) {
      warn(plan, "adasyn: class " + std::to_string(c.label) + " has no hard examples; allocating uniformly");
      std::fill(delta[ci].begin(), delta[ci].end(), 1);
    }
  }

  std::vector<std::vector<SyntheticRow>> per_class(classes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const auto& c = classes[ci];
    if (G[ci] == 0) continue;
    Rng rng(derive_seed(o.seed, "adasyn", static_cast<std::uint64_t>(c.label)));
    if (c.members.size() == 1) {
      per_class[ci] = random_copies(X, c, G[ci], rng);
      continue;
    }
    const auto g = largest_remainder(delta[ci], G[ci]);
    const std::size_t k = std::min<std::size_t>(o.k_neighbors, c.members.size() - 1);
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      if (g[i] == 0) continue;
      const auto nn = nearest_neighbors(X, c.members[i], c.members, k);
      for (std::size_t t = 0; t < g[i]; ++t) {
        const std::size_t neighbor = nn[rng.index(nn.size())];
        per_class[ci].push_back(interpolate(X, c.label, c.members[i], neighbor, draw_lambda(rng, o)));
      }
    }
  }
  return assemble(X, y, std::move(plan), std::move(per_class));
}

Result oversample(Strategy strategy, const FeatureMatrix& X, std::span<const int> y, const Options& options) {
  switch (strategy) {
    case Strategy::random: return random_oversample(X, y, options.seed);
    case Strategy::smote: return smote(X, y, options);
    case Strategy::adasyn: return adasyn(X, y, options);
  }
  fail(ErrorKind::invalid_argument, "unknown strategy");
}

nlohmann::json to_json(const ResamplePlan& plan) {
  nlohmann::json targets = nlohmann::json::object();
  for (const auto& [label, n] : plan.per_class_targets) targets[std::to_string(label)] = n;
  return {{"strategy", to_string(plan.strategy)}, {"k_neighbors", plan.k_neighbors}, {"beta", plan.beta},
          {"seed", plan.seed}, {"per_class_targets", targets}, {"warnings", plan.warnings}};
}

nlohmann::json to_json(const SyntheticRow& row, const FeatureMatrix& source) {
  nlohmann::json j{{"label", row.label}, {"parent", source.row_ids.at(row.parent)}};
  j["neighbor"] = row.neighbor ? nlohmann::json(source.row_ids.at(*row.neighbor)) : nlohmann::json(nullptr);
  j["lambda"] = row.lambda ? nlohmann::json(*row.lambda) : nlohmann::json(nullptr);
  return j;
}

}  // namespace inspectlab::resample
