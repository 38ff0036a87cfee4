#include "inspectlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <future>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/metrics.hpp"
#include "inspectlab/resample.hpp"

namespace inspectlab::evaluate {

using features::FeatureMatrix;

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  std::string options;
  for (const auto& [e, name] : table) options += (options.empty() ? "" : ", ") + std::string(name);
  fail(ErrorKind::config, std::string("unknown ") + what + " '" + std::string(s) + "' (expected one of " + options + ")");
}

constexpr std::array<std::pair<ModelChoice, std::string_view>, 5> kModels{{{ModelChoice::baseline_mlp, "baseline_mlp"},
                                                                           {ModelChoice::gbt, "gbt"},
                                                                           {ModelChoice::cnn, "cnn"},
                                                                           {ModelChoice::cnn_weighted, "cnn_weighted"},
                                                                           {ModelChoice::anomaly, "anomaly"}}};
constexpr std::array<std::pair<Augmentation, std::string_view>, 5> kAugmentations{{{Augmentation::none, "none"},
                                                                                   {Augmentation::random, "random"},
                                                                                   {Augmentation::smote, "smote"},
                                                                                   {Augmentation::adasyn, "adasyn"},
                                                                                   {Augmentation::gan, "gan"}}};
constexpr std::array<std::pair<Task, std::string_view>, 2> kTasks{{{Task::binary, "binary"}, {Task::multiclass, "multiclass"}}};
constexpr std::array<std::pair<BinaryMode, std::string_view>, 2> kBinaryModes{
    {{BinaryMode::collapse, "collapse"}, {BinaryMode::dedicated, "dedicated"}}};
constexpr std::array<std::pair<SelectionRows, std::string_view>, 2> kSelectionRows{
    {{SelectionRows::augmented, "augmented"}, {SelectionRows::real, "real"}}};

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [x, name] : table)
    if (x == e) return name;
  return "?";
}

int percent(double retention) { return static_cast<int>(std::lround(retention * 100.0)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(ModelChoice m) { return name_of(m, kModels); }
std::string_view to_string(Augmentation a) { return name_of(a, kAugmentations); }
std::string_view to_string(Task t) { return name_of(t, kTasks); }
std::string_view to_string(BinaryMode b) { return name_of(b, kBinaryModes); }
ModelChoice model_from_string(std::string_view s) { return parse_enum(s, kModels, "model"); }
Augmentation augmentation_from_string(std::string_view s) { return parse_enum(s, kAugmentations, "augmentation"); }
Task task_from_string(std::string_view s) { return parse_enum(s, kTasks, "task"); }
BinaryMode binary_mode_from_string(std::string_view s) { return parse_enum(s, kBinaryModes, "binary mode"); }
std::string_view to_string(SelectionRows s) { return name_of(s, kSelectionRows); }
SelectionRows selection_rows_from_string(std::string_view s) { return parse_enum(s, kSelectionRows, "selection rows"); }

Seeds seeds_from_master(std::uint64_t master_seed) {
  return {derive_seed(master_seed, "folds"), derive_seed(master_seed, "train"), derive_seed(master_seed, "augment")};
}

void ExperimentSpec::validate() const {
  if (!(retention > 0.0 && retention <= 1.0))
    fail(ErrorKind::config, "retention must be in (0, 1], got " + std::to_string(retention));
  if (model == ModelChoice::anomaly) {
    if (task != Task::binary) fail(ErrorKind::config, "the anomaly model only supports the binary task");
    if (augmentation != Augmentation::none) fail(ErrorKind::config, "the anomaly model takes no augmentation");
  }
  if ((model == ModelChoice::cnn || model == ModelChoice::cnn_weighted) && augmentation != Augmentation::none &&
      augmentation != Augmentation::gan)
    fail(ErrorKind::config, "CNN models train on pixels; feature-space augmentation '" +
                                std::string(to_string(augmentation)) + "' does not apply");
}

std::string ExperimentSpec::row_label() const {
  std::string base;
  switch (model) {
    case ModelChoice::baseline_mlp: base = "Baseline"; break;
    case ModelChoice::gbt: base = "GBT"; break;
    case ModelChoice::cnn: base = "CNN"; break;
    case ModelChoice::cnn_weighted: base = "CNN + loss weighting"; break;
    case ModelChoice::anomaly: base = "DRAEM-style"; break;
  }
  switch (augmentation) {
    case Augmentation::none: return base;
    case Augmentation::gan:
      return model == ModelChoice::baseline_mlp ? "OS-GAN" : "OS-GAN(" + base + ")";
    default: {
      std::string a(to_string(augmentation));
      std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
      return "OS-" + a + "(" + (model == ModelChoice::baseline_mlp ? std::string("baseline") : base) + ")";
    }
  }
}

std::string ExperimentSpec::cell_id() const {
  return std::string(to_string(model)) + "-" + std::string(to_string(augmentation)) + "-" +
         std::string(to_string(task)) + "-" + std::to_string(percent(retention));
}

nlohmann::json to_json(const ExperimentSpec& s) {
  return {{"model", to_string(s.model)},
          {"augmentation", to_string(s.augmentation)},
          {"retention", s.retention},
          {"task", to_string(s.task)},
          {"seeds", {{"fold_seed", s.seeds.fold_seed}, {"train_seed", s.seeds.train_seed}, {"augment_seed", s.seeds.augment_seed}}}};
}

nlohmann::json to_json(const TrainingConfigs& c) {
  return {{"mlp", classify::to_json(c.mlp)},
          {"gbt", classify::to_json(c.gbt)},
          {"cnn", classify::to_json(c.cnn)},
          {"gan", generative::to_json(c.gan)},
          {"anomaly", anomaly::to_json(c.anomaly)},
          {"k_neighbors", c.k_neighbors},
          {"adasyn_beta", c.adasyn_beta},
          {"folds", c.folds},
          {"mi_bins", c.mi_bins},
          {"selection_rows", to_string(c.selection_rows)},
          {"binary_mode", to_string(c.binary_mode)},
          {"backend", features::to_string(c.extract.backend)},
          {"backbone_input_size", c.extract.backbone_input_size}};
}

void check_fold_hygiene(std::span<const std::string> test_ids, std::span<const std::string> train_ids, int fold) {
  std::unordered_set<std::string_view> test(test_ids.begin(), test_ids.end());
  for (const auto& id : train_ids)
    if (test.count(id))
      fail(ErrorKind::invalid_argument,
           "fold " + std::to_string(fold) + ": test sample '" + id + "' appears in the training set");
}

// ---------------------------------------------------------------- context

namespace {

/// Computes each key once; concurrent callers of the same key wait for the first.
template <typename K, typename V>
class OnceCache {
 public:
  template <typename F>
  V get(const K& key, F&& compute) {
    std::promise<V> promise;
    std::shared_future<V> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it == entries_.end()) {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(compute());
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  std::mutex mutex_;
  std::map<K, std::shared_future<V>> entries_;
};

}  // namespace

struct ExperimentContext::Impl {
  corpus::Manifest manifest;
  TrainingConfigs configs;
  Seeds seeds;
  std::filesystem::path work_dir;
  std::vector<int> labels;
  std::vector<GrayImage> images;
  FeatureMatrix embeddings;
  FoldPlan plan;
  std::unordered_map<std::string, std::size_t> index_of;
  std::mutex log_mutex;

  using GanKey = std::tuple<int, int, int>;  // fold, retention percent, class
  OnceCache<GanKey, std::shared_ptr<const generative::GeneratorCheckpoint>> gans;
  using AnomalyKey = std::vector<std::string>;  // Good training ids
  OnceCache<AnomalyKey, std::shared_ptr<const anomaly::AnomalyModel>> anomaly_models;
};

ExperimentContext::ExperimentContext(corpus::Manifest manifest, TrainingConfigs configs, Seeds seeds,
                                     std::filesystem::path work_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.manifest = std::move(manifest);
  m.configs = std::move(configs);
  m.seeds = seeds;
  m.work_dir = std::move(work_dir);
  const auto& samples = m.manifest.samples;
  require(!samples.empty(), "experiment: the corpus has no samples");
  m.labels.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.labels.push_back(corpus::class_index(samples[i].label));
    if (!m.index_of.emplace(samples[i].id, i).second)
      fail(ErrorKind::invalid_argument, "experiment: duplicate sample id '" + samples[i].id + "'");
  }
  m.images.resize(samples.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t i = 0; i < samples.size(); ++i) m.images[i] = m.manifest.load_image(samples[i]);
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  m.embeddings = features::extract_embeddings(m.images, ids, m.configs.extract);
  m.plan = stratified_kfold(m.labels, m.configs.folds, m.seeds.fold_seed);
}

ExperimentContext::~ExperimentContext() = default;
const corpus::Manifest& ExperimentContext::manifest() const { return impl_->manifest; }
const TrainingConfigs& ExperimentContext::configs() const { return impl_->configs; }
const Seeds& ExperimentContext::seeds() const { return impl_->seeds; }
const std::vector<int>& ExperimentContext::labels() const { return impl_->labels; }

// ---------------------------------------------------------------- per-fold pipeline

namespace {

using Impl = ExperimentContext::Impl;

struct FoldOutput {
  std::vector<std::size_t> test;
  std::vector<double> binary_scores;
  std::optional<classify::ProbMatrix> probs;
  std::vector<int> classes;
  double train_seconds = 0.0;
  double generator_seconds = 0.0;
  std::map<LabelClass, double> fid;
};

void say(ExperimentContext& ctx, Impl& m, const std::string& line) {
  if (!ctx.log) return;
  std::lock_guard lock(m.log_mutex);
  ctx.log(line);
}

/// Training split of `fold` after defective retention, as indices into the corpus.
std::vector<std::size_t> retained_train(const Impl& m, int fold, double retention) {
  corpus::Manifest split = m.manifest;
  split.samples.clear();
  for (auto i : m.plan.train_indices(fold)) split.samples.push_back(m.manifest.samples[i]);
  const auto kept = corpus::subsample_defective(split, retention,
                                                derive_seed(m.seeds.augment_seed, "retain", static_cast<std::uint64_t>(fold)));
  std::vector<std::size_t> out;
  out.reserve(kept.samples.size());
  for (const auto& s : kept.samples) out.push_back(m.index_of.at(s.id));
  return out;
}

std::shared_ptr<const generative::GeneratorCheckpoint> generator_for(ExperimentContext& ctx, Impl& m, int fold,
                                                                     double retention, LabelClass label,
                                                                     std::span<const std::size_t> train) {
  const Impl::GanKey key{fold, percent(retention), corpus::class_index(label)};
  return m.gans.get(key, [&] {
    std::vector<GrayImage> images;
    for (auto i : train)
      if (m.manifest.samples[i].label == label) images.push_back(m.images[i]);
    auto config = m.configs.gan;
    config.label = label;
    config.image_size = images.empty() ? config.image_size : images[0].width;
    config.seed = derive_seed(derive_seed(m.seeds.augment_seed, "gan@" + std::to_string(percent(retention)),
                                          static_cast<std::uint64_t>(fold)),
                              corpus::to_string(label));
    const auto dir = m.work_dir / "generators";
    std::filesystem::create_directories(dir);
    generative::TrainHooks hooks;
    hooks.checkpoint_path = dir / ("fold" + std::to_string(fold) + "_r" + std::to_string(percent(retention)) + "_" +
                                   std::string(corpus::to_string(label)) + ".lgan");
    auto ckpt = generative::train_gan(images, config, nullptr, hooks);
    say(ctx, m, "[gan fold " + std::to_string(fold) + " r" + std::to_string(percent(retention)) + " " +
                    std::string(corpus::to_string(label)) + "] trained on " + std::to_string(images.size()) +
                    " images, FID " + std::to_string(ckpt.fid_history.front().second) + " -> " +
                    std::to_string(ckpt.fid_history.back().second));
    return std::make_shared<const generative::GeneratorCheckpoint>(std::move(ckpt));
  });
}

std::shared_ptr<const anomaly::AnomalyModel> anomaly_for(ExperimentContext& ctx, Impl& m, int fold,
                                                         std::span<const std::size_t> train) {
  std::vector<std::string> good_ids;
  std::vector<GrayImage> good;
  std::vector<LabelClass> good_labels;
  for (auto i : train)
    if (m.manifest.samples[i].label == LabelClass::good) {
      good_ids.push_back(m.manifest.samples[i].id);
      good.push_back(m.images[i]);
      good_labels.push_back(LabelClass::good);
    }
  // Keyed by the Good training ids: retention never touches them, so every level shares one model.
  return m.anomaly_models.get(good_ids, [&] {
    auto config = m.configs.anomaly;
    config.seed = derive_seed(m.seeds.train_seed, "anomaly", static_cast<std::uint64_t>(fold));
    auto model = anomaly::train_unsupervised(good, good_labels, config);
    say(ctx, m, "[anomaly fold " + std::to_string(fold) + "] trained on " + std::to_string(good.size()) +
                    " Good images, reconstruction loss " + std::to_string(model.reconstruction_history().front()) +
                    " -> " + std::to_string(model.reconstruction_history().back()));
    return std::make_shared<const anomaly::AnomalyModel>(std::move(model));
  });
}

std::size_t column_of(const std::vector<int>& classes, int label) {
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) fail(ErrorKind::invalid_argument, "model has no column for class " + std::to_string(label));
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<double> defect_scores(const classify::ProbMatrix& p, const std::vector<int>& classes) {
  const auto good = column_of(classes, corpus::class_index(LabelClass::good));
  std::vector<double> s(p.rows);
  for (std::size_t r = 0; r < p.rows; ++r) s[r] = 1.0 - p.at(r, good);
  return s;
}

std::vector<int> collapse(std::span<const int> y) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] != corpus::class_index(LabelClass::good);
  return out;
}

template <typename Train, typename Predict>
void fit_and_score(const Impl& m, FoldOutput& out, std::span<const int> y, Train&& train, Predict&& predict) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train(y, "multiclass");
  out.train_seconds += seconds_since(t0);
  out.probs = predict(model);
  out.classes = model.classes;
  if (m.configs.binary_mode == BinaryMode::collapse) {
    out.binary_scores = defect_scores(*out.probs, model.classes);
  } else {
    const auto yb = collapse(y);
    const auto t1 = std::chrono::steady_clock::now();
    const auto binary = train(yb, "binary");
    out.train_seconds += seconds_since(t1);
    const auto p = predict(binary);
    const auto col = column_of(binary.classes, 1);
    out.binary_scores.resize(p.rows);
    for (std::size_t r = 0; r < p.rows; ++r) out.binary_scores[r] = p.at(r, col);
  }
}

FoldOutput run_fold(ExperimentContext& ctx, Impl& m, ModelChoice model, Augmentation aug, double retention, int fold) {
  FoldOutput out;
  out.test = m.plan.test_indices(fold);
  std::vector<std::string> test_ids;
  for (auto i : out.test) test_ids.push_back(m.manifest.samples[i].id);
  std::string stage = "retention";
  const std::string where = "fold " + std::to_string(fold);
  try {
    const auto train = retained_train(m, fold, retention);
    const auto train_seed = derive_seed(m.seeds.train_seed, to_string(model), static_cast<std::uint64_t>(fold));

    if (model == ModelChoice::anomaly) {
      stage = "anomaly training";
      std::vector<std::string> ids;
      for (auto i : train)
        if (m.manifest.samples[i].label == LabelClass::good) ids.push_back(m.manifest.samples[i].id);
      check_fold_hygiene(test_ids, ids, fold);
      const auto t0 = std::chrono::steady_clock::now();
      const auto detector = anomaly_for(ctx, m, fold, train);
      out.train_seconds = seconds_since(t0);
      stage = "scoring";
      std::vector<GrayImage> test_images;
      for (auto i : out.test) test_images.push_back(m.images[i]);
      out.binary_scores = anomaly::score_all(*detector, test_images);
      return out;
    }

    // Training set after augmentation: real rows first, then synthetic ones.
    std::vector<int> y;
    std::vector<std::string> ids;
    std::vector<GrayImage> synthetic_images;
    std::vector<int> synthetic_labels;
    std::vector<std::string> synthetic_ids;
    for (auto i : train) {
      y.push_back(m.labels[i]);
      ids.push_back(m.manifest.samples[i].id);
    }
    if (aug == Augmentation::gan) {
      stage = "gan augmentation";
      corpus::Manifest split = m.manifest;
      split.samples.clear();
      for (auto i : train) split.samples.push_back(m.manifest.samples[i]);
      const auto counts = split.class_counts();
      int majority = 0;
      for (const auto& [label, n] : counts) majority = std::max(majority, n);
      std::map<LabelClass, generative::GeneratorCheckpoint> generators;
      for (const auto& [label, n] : counts)
        if (n < majority) {
          const auto t_gen = std::chrono::steady_clock::now();
          generators.emplace(label, *generator_for(ctx, m, fold, retention, label, train));
          out.generator_seconds += seconds_since(t_gen);
        }
      const auto seed = derive_seed(m.seeds.augment_seed, "gan-sample@" + std::to_string(percent(retention)),
                                    static_cast<std::uint64_t>(fold));
      const auto augmented = generative::gan_oversample(
          split, generators, seed,
          m.work_dir / ("fold" + std::to_string(fold) + "_r" + std::to_string(percent(retention))));
      for (std::size_t j = split.samples.size(); j < augmented.samples.size(); ++j) {
        const auto& s = augmented.samples[j];
        synthetic_images.push_back(augmented.load_image(s));
        synthetic_labels.push_back(corpus::class_index(s.label));
        synthetic_ids.push_back(s.id);
      }
      y.insert(y.end(), synthetic_labels.begin(), synthetic_labels.end());
      ids.insert(ids.end(), synthetic_ids.begin(), synthetic_ids.end());
    }

    if (model == ModelChoice::cnn || model == ModelChoice::cnn_weighted) {
      check_fold_hygiene(test_ids, ids, fold);
      std::vector<GrayImage> images;
      for (auto i : train) images.push_back(m.images[i]);
      images.insert(images.end(), synthetic_images.begin(), synthetic_images.end());
      std::vector<GrayImage> test_images;
      for (auto i : out.test) test_images.push_back(m.images[i]);
      stage = "cnn training";
      fit_and_score(
          m, out, y,
          [&](std::span<const int> labels, std::string_view task) {
            auto config = m.configs.cnn;
            config.seed = derive_seed(train_seed, task);
            if (model == ModelChoice::cnn_weighted) config.class_weights = classify::inverse_frequency_weights(labels);
            return classify::train_cnn(images, labels, config);
          },
          [&](const classify::TrainedModel& trained) { return classify::predict_proba(trained, test_images); });
      return out;
    }

    stage = "features";
    FeatureMatrix X = features::take_rows(m.embeddings, train);
    if (!synthetic_images.empty()) {
      const auto extra = features::extract_embeddings(synthetic_images, synthetic_ids, m.configs.extract);
      for (std::size_t r = 0; r < extra.rows; ++r) X.append_row(extra.row(r), extra.row_ids[r]);
      // Per-class FID of this fold's synthetic images against the real training images they top up.
      for (int label : std::set<int>(synthetic_labels.begin(), synthetic_labels.end())) {
        std::vector<std::size_t> real_rows, synth_rows;
        for (std::size_t r = 0; r < train.size(); ++r)
          if (y[r] == label) real_rows.push_back(r);
        for (std::size_t r = 0; r < extra.rows; ++r)
          if (synthetic_labels[r] == label) synth_rows.push_back(r);
        if (real_rows.size() < 2 || synth_rows.size() < 2) continue;
        out.fid[corpus::kAllClasses[static_cast<std::size_t>(label)]] =
            generative::compute_fid(features::take_rows(X, real_rows), features::take_rows(extra, synth_rows),
                                    m.configs.extract.backend)
                .value;
      }
    }
    if (aug == Augmentation::random || aug == Augmentation::smote || aug == Augmentation::adasyn) {
      stage = "resampling";
      const auto strategy = aug == Augmentation::random  ? resample::Strategy::random
                            : aug == Augmentation::smote ? resample::Strategy::smote
                                                         : resample::Strategy::adasyn;
      resample::Options options;
      options.k_neighbors = m.configs.k_neighbors;
      options.beta = m.configs.adasyn_beta;
      options.seed = derive_seed(m.seeds.augment_seed, std::string(to_string(aug)) + "@" + std::to_string(percent(retention)),
                                 static_cast<std::uint64_t>(fold));
      auto result = resample::oversample(strategy, X, y, options);
      // Synthetic rows may only be built from training rows.
      for (const auto& row : result.rows)
        if (row.parent >= X.rows || (row.neighbor && *row.neighbor >= X.rows))
          fail(ErrorKind::invalid_argument, where + ": synthetic row built from a row outside the training split");
      X = std::move(result.X);
      y = std::move(result.y);
    }
    check_fold_hygiene(test_ids, X.row_ids, fold);

    stage = "feature selection";
    std::vector<std::size_t> real_rows(train.size());
    std::iota(real_rows.begin(), real_rows.end(), std::size_t{0});
    const auto mask = m.configs.selection_rows == SelectionRows::real
                          ? features::select_top_k(features::take_rows(X, real_rows),
                                                   std::span<const int>(y).first(train.size()), m.configs.mi_bins)
                          : features::select_top_k(X, y, m.configs.mi_bins);
    const auto Xtrain = features::apply_mask(X, mask);
    const auto Xtest = features::apply_mask(features::take_rows(m.embeddings, out.test), mask);

    stage = model == ModelChoice::gbt ? "gbt training" : "mlp training";
    fit_and_score(
        m, out, y,
        [&](std::span<const int> labels, std::string_view task) {
          if (model == ModelChoice::gbt) {
            auto config = m.configs.gbt;
            config.seed = derive_seed(train_seed, task);
            return classify::train_gbt(Xtrain, labels, config);
          }
          auto config = m.configs.mlp;
          config.seed = derive_seed(train_seed, task);
          return classify::train_mlp(Xtrain, labels, config);
        },
        [&](const classify::TrainedModel& trained) { return classify::predict_proba(trained, Xtest); });
    return out;
  } catch (const Error& e) {
    throw Error(e.kind(), where + ", " + stage + ": " + e.what());
  }
}

}  // namespace

std::vector<MetricsReport> run_cell_pair(ExperimentContext& ctx, ModelChoice model, Augmentation augmentation,
                                         double retention) {
  auto& m = *ctx.impl_;
  ExperimentSpec spec{model, augmentation, retention, Task::binary, m.seeds};
  spec.validate();
  const bool multiclass = model != ModelChoice::anomaly;
  const auto t0 = std::chrono::steady_clock::now();

  MetricsReport binary, multi;
  binary.spec = spec;
  multi.spec = spec;
  multi.spec.task = Task::multiclass;
  std::map<int, std::vector<double>> per_class;
  std::map<LabelClass, std::vector<double>> fid;
  std::set<int> excluded;
  const std::string tag = spec.row_label() + " @" + std::to_string(percent(retention)) + "%";

  for (int fold = 0; fold < m.configs.folds; ++fold) {
    auto out = run_fold(ctx, m, model, augmentation, retention, fold);
    std::vector<int> y_test, y_bin;
    for (auto i : out.test) {
      y_test.push_back(m.labels[i]);
      y_bin.push_back(corpus::is_defective(m.manifest.samples[i].label));
    }
    binary.per_fold_auc.push_back(auc_binary(out.binary_scores, y_bin));
    for (std::size_t r = 0; r < out.test.size(); ++r)
      binary.predictions.push_back({m.manifest.samples[out.test[r]].id, fold, y_test[r], out.binary_scores[r]});
    binary.hygiene_checks++;
    binary.train_seconds += out.train_seconds;
    binary.generator_seconds += out.generator_seconds;
    if (multiclass) {
      const auto auc = auc_multiclass_ovr_weighted(*out.probs, y_test, out.classes);
      multi.per_fold_auc.push_back(auc.weighted);
      for (const auto& [c, v] : auc.per_class) per_class[c].push_back(v);
      excluded.insert(auc.excluded.begin(), auc.excluded.end());
      multi.hygiene_checks++;
    }
    for (const auto& [label, v] : out.fid) fid[label].push_back(v);
    say(ctx, m, "[" + tag + " fold " + std::to_string(fold) + "] binary AUC " +
                    std::to_string(binary.per_fold_auc.back()) +
                    (multiclass ? ", multiclass AUC " + std::to_string(multi.per_fold_auc.back()) : std::string()));
  }

  binary.mean_auc = mean(binary.per_fold_auc);
  binary.total_seconds = seconds_since(t0);
  if (!fid.empty()) {
    generative::FidReport report;
    report.embedding_backend = m.configs.extract.backend;
    std::vector<double> values;
    for (const auto& [label, v] : fid) {
      report.per_class[label] = mean(v);
      values.push_back(report.per_class[label]);
    }
    report.value = mean(values);
    binary.fid = report;
  }
  std::vector<MetricsReport> reports{binary};
  if (multiclass) {
    multi.mean_auc = mean(multi.per_fold_auc);
    for (const auto& [c, v] : per_class) multi.per_class_auc[c] = mean(v);
    multi.excluded_classes.assign(excluded.begin(), excluded.end());
    multi.train_seconds = binary.train_seconds;
    multi.total_seconds = binary.total_seconds;
    multi.generator_seconds = binary.generator_seconds;
    multi.fid = binary.fid;
    reports.push_back(std::move(multi));
  }
  return reports;
}

MetricsReport run_experiment(ExperimentContext& ctx, const ExperimentSpec& spec) {
  spec.validate();
  auto reports = run_cell_pair(ctx, spec.model, spec.augmentation, spec.retention);
  for (auto& r : reports)
    if (r.spec.task == spec.task) return std::move(r);
  fail(ErrorKind::invalid_argument, "no report for task " + std::string(to_string(spec.task)));
}

std::map<LabelClass, generative::FidReport> class_fid(ExperimentContext& ctx) {
  auto& m = *ctx.impl_;
  const auto train = retained_train(m, 0, 1.0);
  std::map<LabelClass, generative::FidReport> out;
  for (auto label : corpus::kAllClasses) {
    std::vector<std::size_t> rows;
    for (auto i : train)
      if (m.manifest.samples[i].label == label) rows.push_back(i);
    const auto gen = generator_for(ctx, m, 0, 1.0, label, train);
    const auto images = generative::sample(*gen, rows.size(), derive_seed(m.seeds.augment_seed, "fid-sample"));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < images.size(); ++i) ids.push_back("fid:" + std::to_string(i));
    const auto synth = features::extract_embeddings(images, ids, m.configs.extract);
    auto report = generative::compute_fid(features::take_rows(m.embeddings, rows), synth, m.configs.extract.backend);
    report.per_class[label] = report.value;
    out[label] = report;
  }
  return out;
}

// ---------------------------------------------------------------- grid

std::vector<GridRow> paper_grid_rows() {
  using M = ModelChoice;
  using A = Augmentation;
  return {{M::baseline_mlp, A::none}, {M::gbt, A::none},          {M::anomaly, A::none},
          {M::baseline_mlp, A::random}, {M::gbt, A::random},      {M::baseline_mlp, A::adasyn},
          {M::gbt, A::adasyn},          {M::baseline_mlp, A::smote}, {M::gbt, A::smote},
          {M::baseline_mlp, A::gan},    {M::cnn, A::none},        {M::cnn_weighted, A::none}};
}

std::size_t cell_count(const GridSpec& grid) {
  std::size_t n = 0;
  for (const auto& row : grid.rows)
    for (auto task : grid.tasks)
      if (row.model != ModelChoice::anomaly || task == Task::binary) n += grid.retentions.size();
  return n;
}

GridResult run_grid(ExperimentContext& ctx, const GridSpec& grid, int workers) {
  struct Job {
    GridRow row;
    double retention;
    std::vector<MetricsReport> reports;
    std::optional<std::string> error;
  };
  std::vector<Job> jobs;
  for (const auto& row : grid.rows)
    for (double r : grid.retentions) {
      const bool wanted = std::any_of(grid.tasks.begin(), grid.tasks.end(), [&](Task t) {
        return row.model != ModelChoice::anomaly || t == Task::binary;
      });
      if (wanted) jobs.push_back({row, r, {}, {}});
    }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      auto& job = jobs[j];
      try {
        job.reports = run_cell_pair(ctx, job.row.model, job.row.augmentation, job.retention);
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  GridResult result;
  for (const auto& row : grid.rows)
    for (auto task : grid.tasks) {
      if (row.model == ModelChoice::anomaly && task != Task::binary) continue;
      for (double r : grid.retentions)
        for (const auto& job : jobs) {
          if (job.row.model != row.model || job.row.augmentation != row.augmentation || job.retention != r) continue;
          ExperimentSpec spec{row.model, row.augmentation, r, task, ctx.seeds()};
          if (job.error) {
            result.failures.push_back({spec.cell_id(), *job.error});
            continue;
          }
          for (const auto& rep : job.reports)
            if (rep.spec.task == task) result.reports.push_back(rep);
        }
    }
  return result;
}

}  // namespace inspectlab::evaluate
