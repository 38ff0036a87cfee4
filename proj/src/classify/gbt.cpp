#include <algorithm>
#include <cmath>
#include <numeric>

#include "inspectlab/classify.hpp"
#include "inspectlab/core/error.hpp"
#include "internal.hpp"

namespace inspectlab::classify {

double Tree::predict(std::span<const float> x) const {
  int i = 0;
  while (nodes[i].feature >= 0)
    i = static_cast<double>(x[nodes[i].feature]) <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
  }
  return best;
}

namespace {

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& X, const std::vector<double>& g, const std::vector<double>& h,
              const GbtConfig& c)
      : X_(X), g_(g), h_(h), c_(c) {}

  Tree build() {
    std::vector<std::size_t> all(X_.rows);
    std::iota(all.begin(), all.end(), 0);
    tree_.nodes.clear();
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  double score(double G, double H) const { return G * G / (H + c_.lambda); }

  int grow(const std::vector<std::size_t>& idx, int depth) {
    double G = 0.0, H = 0.0;
    for (auto i : idx) {
      G += g_[i];
      H += h_[i];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back({});
    tree_.nodes[id].value = -G / (H + c_.lambda) * c_.learning_rate;
    if (depth >= c_.max_depth || idx.size() < 2) return id;

    const Split s = best_split(idx, G, H);
    if (s.feature < 0) return id;
    std::vector<std::size_t> left, right;
    for (auto i : idx) (static_cast<double>(X_.at(i, s.feature)) <= s.threshold ? left : right).push_back(i);
    tree_.nodes[id].feature = s.feature;
    tree_.nodes[id].threshold = s.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& idx, double G, double H) const {
    Split best;
    const double parent = score(G, H);
    std::vector<std::size_t> sorted;
    for (std::size_t f = 0; f < X_.cols; ++f) {
      sorted = idx;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return X_.at(a, f) < X_.at(b, f); });
      double GL = 0.0, HL = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        GL += g_[sorted[k]];
        HL += h_[sorted[k]];
        const float a = X_.at(sorted[k], f), b = X_.at(sorted[k + 1], f);
        if (!(a < b)) continue;
        const double HR = H - HL;
        if (HL < c_.min_child_weight || HR < c_.min_child_weight) continue;
        const double gain = score(GL, HL) + score(G - GL, HR) - parent;
        if (gain > best.gain + 1e-12) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (static_cast<double>(a) + static_cast<double>(b));
        }
      }
    }
    return best;
  }

  const FeatureMatrix& X_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const GbtConfig& c_;
  Tree tree_;
};

void softmax_rows(std::vector<double>& f, std::size_t C) {
  for (std::size_t i = 0; i < f.size(); i += C) {
    const double mx = *std::max_element(f.begin() + static_cast<std::ptrdiff_t>(i),
                                        f.begin() + static_cast<std::ptrdiff_t>(i + C));
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += (f[i + c] = std::exp(f[i + c] - mx));
    for (std::size_t c = 0; c < C; ++c) f[i + c] /= s;
  }
}

}  // namespace

TrainedModel train_gbt(const FeatureMatrix& X, std::span<const int> y, const GbtConfig& config) {
  if (X.rows == 0) fail(ErrorKind::invalid_argument, "train_gbt: empty training set");
  require(y.size() == X.rows, "train_gbt: label count mismatch");
  require(config.max_depth >= 1 && config.iterations >= 1, "train_gbt: max_depth and iterations must be positive");
  TrainedModel model;
  model.kind = ModelKind::gbt;
  model.config = to_json(config);
  const auto cols = detail::encode_labels(y, model.classes);
  model.gbt_learning_rate = config.learning_rate;
  model.input_dim = X.cols;
  const std::size_t n = X.rows, C = model.classes.size();

  std::vector<double> F(n * C, 0.0), p(n * C);
  std::vector<double> g(n), h(n);
  for (int round = 0; round < config.iterations; ++round) {
    p = F;
    softmax_rows(p, C);
    std::vector<Tree> round_trees(C);
#pragma omp parallel for schedule(static) firstprivate(g, h)
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double pc = p[i * C + c];
        g[i] = pc - (static_cast<std::size_t>(cols[i]) == c ? 1.0 : 0.0);
        h[i] = std::max(pc * (1.0 - pc), 1e-16);
      }
      round_trees[c] = TreeBuilder(X, g, h, config).build();
    }
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < n; ++i) F[i * C + c] += round_trees[c].predict(X.row(i));
      model.trees.push_back(std::move(round_trees[c]));
    }
    p = F;
    softmax_rows(p, C);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) ll -= std::log(std::max(p[i * C + cols[i]], 1e-300));
    model.history.push_back(ll / static_cast<double>(n));
  }
  return model;
}

}  // namespace inspectlab::classify
