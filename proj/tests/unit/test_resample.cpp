#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "inspectlab/core/error.hpp"
#include "inspectlab/resample.hpp"

using namespace inspectlab;
using namespace inspectlab::resample;

namespace {

struct Data {
  FeatureMatrix X;
  std::vector<int> y;
};

// Three overlapping Gaussian blobs, class sizes 60/15/9.
Data blobs(unsigned seed = 2) {
  std::mt19937 g(seed);
  std::normal_distribution<float> d;
  Data out;
  out.X = FeatureMatrix(0, 4);
  int idx = 0;
  for (auto [label, count] : {std::pair{0, 60}, {1, 15}, {2, 9}})
    for (int i = 0; i < count; ++i) {
      std::vector<float> row(4);
      for (auto& v : row) v = d(g) + 1.2f * label;
      out.X.append_row(row, "r" + std::to_string(idx++));
      out.y.push_back(label);
    }
  return out;
}

double dist2(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
  return s;
}

// Brute-force k nearest (lower index wins ties) among rows satisfying `keep`.
template <typename Keep>
std::vector<std::size_t> brute_knn(const FeatureMatrix& X, std::size_t row, std::size_t k, Keep keep) {
  std::vector<std::pair<double, std::size_t>> c;
  for (std::size_t j = 0; j < X.rows; ++j)
    if (j != row && keep(j)) c.push_back({dist2(X.row(row), X.row(j)), j});
  std::sort(c.begin(), c.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, c.size()); ++i) out.push_back(c[i].second);
  return out;
}

std::map<int, std::size_t> counts(const std::vector<int>& y) {
  std::map<int, std::size_t> m;
  for (int v : y) ++m[v];
  return m;
}

}  // namespace

TEST(LargestRemainder, SumsExactlyAndFollowsHamilton) {
  EXPECT_EQ(largest_remainder(std::vector<std::size_t>{1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(largest_remainder(std::vector<std::size_t>{5, 3, 2}, 7), (std::vector<std::size_t>{4, 2, 1}));
  EXPECT_EQ(largest_remainder(std::vector<std::size_t>{0, 2, 0}, 5), (std::vector<std::size_t>{0, 5, 0}));
  std::mt19937 g(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::size_t> w(1 + g() % 12);
    for (auto& v : w) v = g() % 6;
    w[0] += 1;
    const std::size_t total = g() % 500;
    const auto r = largest_remainder(w, total);
    EXPECT_EQ(std::accumulate(r.begin(), r.end(), std::size_t{0}), total);
    const double sw = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double q = total * w[i] / sw;
      EXPECT_GE(static_cast<double>(r[i]), std::floor(q) - 1e-9);
      EXPECT_LE(static_cast<double>(r[i]), std::floor(q) + 1);
    }
  }
}

TEST(NearestNeighbors, MatchesBruteForce) {
  const auto d = blobs();
  std::vector<std::size_t> all(d.X.rows);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t r : {0u, 17u, 70u, 83u})
    EXPECT_EQ(nearest_neighbors(d.X, r, all, 5), brute_knn(d.X, r, 5, [](std::size_t) { return true; }));
}

TEST(NearestNeighbors, TiesGoToLowerIndex) {
  FeatureMatrix X(0, 1);
  for (float v : {0.0f, 1.0f, -1.0f, 1.0f, 2.0f}) X.append_row(std::vector<float>{v}, std::to_string(X.rows));
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  EXPECT_EQ(nearest_neighbors(X, 0, all, 3), (std::vector<std::size_t>{1, 2, 3}));
}

TEST(RandomOversample, CopiesParentsToBalance) {
  const auto d = blobs();
  const auto r = random_oversample(d.X, d.y, 9);
  const auto c = counts(r.y);
  EXPECT_EQ(c.at(0), 60u);
  EXPECT_EQ(c.at(1), 60u);
  EXPECT_EQ(c.at(2), 60u);
  for (std::size_t i = 0; i < d.X.rows; ++i) EXPECT_TRUE(std::equal(r.X.row(i).begin(), r.X.row(i).end(), d.X.row(i).begin()));
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& s = r.rows[i];
    EXPECT_EQ(d.y[s.parent], s.label);
    EXPECT_EQ(s.values, std::vector<float>(d.X.row(s.parent).begin(), d.X.row(s.parent).end()));
    EXPECT_FALSE(s.neighbor.has_value());
  }
}

TEST(Smote, PointsLieOnSegmentsToSameClassNeighbors) {
  const auto d = blobs();
  const auto r = smote(d.X, d.y, {.k_neighbors = 5, .beta = 1.0, .seed = 4});
  const auto c = counts(r.y);
  EXPECT_EQ(c.at(1), 60u);
  EXPECT_EQ(c.at(2), 60u);
  EXPECT_EQ(r.rows.size(), 45u + 51u);
  for (const auto& s : r.rows) {
    ASSERT_TRUE(s.neighbor && s.lambda);
    EXPECT_EQ(d.y[s.parent], s.label);
    EXPECT_EQ(d.y[*s.neighbor], s.label);
    EXPECT_GE(*s.lambda, 0.0);
    EXPECT_LT(*s.lambda, 1.0);
    const auto nn = brute_knn(d.X, s.parent, 5, [&](std::size_t j) { return d.y[j] == s.label; });
    EXPECT_NE(std::find(nn.begin(), nn.end(), *s.neighbor), nn.end());
    for (std::size_t f = 0; f < 4; ++f) {
      const double p = d.X.at(s.parent, f), q = d.X.at(*s.neighbor, f);
      EXPECT_NEAR(s.values[f], p + *s.lambda * (q - p), 1e-5);
    }
  }
}

TEST(Smote, FixedLambdaEndpoints) {
  const auto d = blobs();
  for (double lam : {0.0, 1.0}) {
    const auto r = smote(d.X, d.y, {.k_neighbors = 3, .beta = 1.0, .seed = 1, .fixed_lambda = lam});
    for (const auto& s : r.rows) {
      const std::size_t src = lam == 0.0 ? s.parent : *s.neighbor;
      for (std::size_t f = 0; f < 4; ++f) EXPECT_EQ(s.values[f], d.X.at(src, f));
    }
  }
}

TEST(Smote, DeterministicPerSeedAndTinyClassFallback) {
  auto d = blobs();
  const Options o{.k_neighbors = 5, .beta = 1.0, .seed = 7};
  EXPECT_EQ(smote(d.X, d.y, o).X, smote(d.X, d.y, o).X);
  EXPECT_NE(smote(d.X, d.y, o).X, smote(d.X, d.y, {.k_neighbors = 5, .beta = 1.0, .seed = 8}).X);
  d.X.append_row(std::vector<float>{9, 9, 9, 9}, "lonely");
  d.y.push_back(3);
  const auto r = smote(d.X, d.y, o);
  EXPECT_EQ(counts(r.y).at(3), 60u);
  EXPECT_FALSE(r.plan.warnings.empty());
}

TEST(Adasyn, AllocationFollowsHardnessAndSumsToG) {
  const auto d = blobs(5);
  for (double beta : {1.0, 0.5, 0.3}) {
    const auto r = adasyn(d.X, d.y, {.k_neighbors = 5, .beta = beta, .seed = 2});
    for (int label : {1, 2}) {
      const std::size_t n_c = label == 1 ? 15 : 9;
      const auto G = static_cast<std::size_t>(std::floor(beta * (60.0 - n_c) + 1e-9));
      EXPECT_EQ(r.plan.per_class_targets.at(label), G);
      // oracle: hardness = other-class neighbours among the 5 nearest of all rows
      std::vector<std::size_t> members, hard;
      for (std::size_t i = 0; i < d.X.rows; ++i)
        if (d.y[i] == label) members.push_back(i);
      for (auto m : members) {
        std::size_t h = 0;
        for (auto j : brute_knn(d.X, m, 5, [](std::size_t) { return true; })) h += d.y[j] != label;
        hard.push_back(h);
      }
      const auto expected = largest_remainder(hard, G);
      std::map<std::size_t, std::size_t> got;
      std::size_t total = 0;
      for (const auto& s : r.rows)
        if (s.label == label) {
          ++got[s.parent];
          ++total;
        }
      EXPECT_EQ(total, G);
      for (std::size_t i = 0; i < members.size(); ++i) EXPECT_EQ(got[members[i]], expected[i]) << "member " << i;
    }
  }
}

TEST(Adasyn, BetaZeroIsIdentity) {
  const auto d = blobs();
  const auto r = adasyn(d.X, d.y, {.k_neighbors = 5, .beta = 0.0, .seed = 2});
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.X, d.X);
  EXPECT_EQ(r.y, d.y);
}

TEST(Adasyn, SeparableClassFallsBackToUniform) {
  FeatureMatrix X(0, 1);
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    X.append_row(std::vector<float>{static_cast<float>(i)}, "a" + std::to_string(i));
    y.push_back(0);
  }
  for (int i = 0; i < 6; ++i) {
    X.append_row(std::vector<float>{1000.0f + i}, "b" + std::to_string(i));
    y.push_back(1);
  }
  const auto r = adasyn(X, y, {.k_neighbors = 3, .beta = 1.0, .seed = 1});
  EXPECT_EQ(r.rows.size(), 14u);
  EXPECT_FALSE(r.plan.warnings.empty());
}

TEST(Oversample, RejectsBadArguments) {
  const auto d = blobs();
  EXPECT_THROW(adasyn(d.X, d.y, {.k_neighbors = 5, .beta = 1.5}), Error);
  EXPECT_THROW(smote(d.X, d.y, {.k_neighbors = 0}), Error);
  EXPECT_THROW(random_oversample(d.X, std::vector<int>{0, 1}, 0), Error);
  EXPECT_EQ(strategy_from_string(to_string(Strategy::adasyn)), Strategy::adasyn);
}
