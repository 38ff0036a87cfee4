#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "inspectlab/core/error.hpp"
#include "inspectlab/metrics.hpp"

using namespace inspectlab;
using namespace inspectlab::evaluate;

namespace {

// Pairwise definition: P(score_pos > score_neg) + ½ P(equal).
double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / den;
}

}  // namespace

TEST(Auc, PerfectInvertedAndConstant) {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(auc_binary(s, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc_binary(s, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc_binary(std::vector<double>(4, 0.3), std::vector<int>{0, 1, 0, 1}), 0.5);
}

TEST(Auc, MatchesPairwiseCountWithTies) {
  std::mt19937 g(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(60);
    std::vector<int> y(60);
    for (int i = 0; i < 60; ++i) {
      s[i] = static_cast<int>(g() % 10) / 10.0;  // many ties
      y[i] = i < 5 ? 1 : (i < 10 ? 0 : static_cast<int>(g() % 2));
    }
    EXPECT_NEAR(auc_binary(s, y), brute_auc(s, y), 1e-12);
  }
}

TEST(Auc, RejectsSingleClass) {
  EXPECT_THROW(auc_binary(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(Auc, MulticlassWeightedByPrevalence) {
  // 3 classes, hand-built probabilities.
  const std::vector<int> labels{0, 0, 0, 0, 1, 1, 2, 2};
  classify::ProbMatrix p;
  p.rows = 8;
  p.cols = 3;
  std::mt19937 g(3);
  for (std::size_t i = 0; i < 24; ++i) p.values.push_back((g() % 1000) / 1000.0);
  const std::vector<int> classes{0, 1, 2};
  const auto r = auc_multiclass_ovr_weighted(p, labels, classes);
  double expected = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < 8; ++i) {
      s.push_back(p.at(i, c));
      y.push_back(labels[i] == c);
    }
    const double a = brute_auc(s, y);
    EXPECT_NEAR(r.per_class.at(c), a, 1e-12);
    expected += a * std::count(labels.begin(), labels.end(), c) / 8.0;
  }
  EXPECT_NEAR(r.weighted, expected, 1e-12);
  EXPECT_TRUE(r.excluded.empty());
}

TEST(Auc, MulticlassExcludesAbsentClass) {
  const std::vector<int> labels{0, 0, 1, 1};
  classify::ProbMatrix p{4, 3, {0.9, 0.05, 0.05, 0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.3, 0.6, 0.1}};
  const std::vector<int> classes{0, 1, 2};
  const auto r = auc_multiclass_ovr_weighted(p, labels, classes);
  EXPECT_EQ(r.excluded, std::vector<int>{2});
  EXPECT_DOUBLE_EQ(r.weighted, 1.0);
}

TEST(Roc, EndpointsAndMonotone) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  const auto roc = roc_curve(s, y);
  ASSERT_GE(roc.size(), 2u);
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
  }
  EXPECT_NEAR(area, auc_binary(s, y), 1e-12);
}

TEST(StratifiedKFold, BalancedDisjointCovering) {
  std::vector<int> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(0);
  for (int i = 0; i < 17; ++i) labels.push_back(1);
  for (int i = 0; i < 15; ++i) labels.push_back(2);
  const auto plan = stratified_kfold(labels, 10, 5);
  ASSERT_EQ(plan.fold_of.size(), labels.size());
  std::vector<int> seen(labels.size(), 0);
  std::size_t min_size = labels.size(), max_size = 0;
  for (int f = 0; f < 10; ++f) {
    const auto test = plan.test_indices(f);
    const auto train = plan.train_indices(f);
    EXPECT_EQ(test.size() + train.size(), labels.size());
    min_size = std::min(min_size, test.size());
    max_size = std::max(max_size, test.size());
    std::map<int, int> per_class;
    for (auto i : test) {
      ++seen[i];
      ++per_class[labels[i]];
    }
    for (auto i : train) EXPECT_NE(plan.fold_of[i], f);
    // every class's fold share is within one of its ideal
    EXPECT_GE(per_class[0], 10);
    EXPECT_LE(per_class[0], 11);
    EXPECT_GE(per_class[1], 1);
    EXPECT_LE(per_class[1], 2);
    EXPECT_GE(per_class[2], 1);
    EXPECT_LE(per_class[2], 2);
  }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_LE(max_size - min_size, 1u);
}

TEST(StratifiedKFold, DeterministicAndSeedSensitive) {
  std::vector<int> labels(200);
  for (int i = 0; i < 200; ++i) labels[i] = i % 4;
  EXPECT_EQ(stratified_kfold(labels, 5, 1).fold_of, stratified_kfold(labels, 5, 1).fold_of);
  EXPECT_NE(stratified_kfold(labels, 5, 1).fold_of, stratified_kfold(labels, 5, 2).fold_of);
}

TEST(StratifiedKFold, ErrorNamesSmallClasses) {
  std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 2};
  try {
    stratified_kfold(labels, 3, 0);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('1'), std::string::npos);
    EXPECT_NE(msg.find('2'), std::string::npos);
  }
}
