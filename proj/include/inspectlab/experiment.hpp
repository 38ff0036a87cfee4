#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inspectlab/anomaly.hpp"
#include "inspectlab/classify.hpp"
#include "inspectlab/corpus.hpp"
#include "inspectlab/features.hpp"
#include "inspectlab/generative.hpp"

namespace inspectlab::evaluate {

using corpus::LabelClass;

enum class ModelChoice { baseline_mlp, gbt, cnn, cnn_weighted, anomaly };
enum class Augmentation { none, random, smote, adasyn, gan };
enum class Task { binary, multiclass };
/// How binary scores are obtained: 1 − P(Good) of the multiclass model, or a separate two-class model.
enum class BinaryMode { collapse, dedicated };
enum class SelectionRows { augmented, real };

std::string_view to_string(ModelChoice m);
std::string_view to_string(Augmentation a);
std::string_view to_string(Task t);
std::string_view to_string(BinaryMode b);
std::string_view to_string(SelectionRows s);
ModelChoice model_from_string(std::string_view s);
Augmentation augmentation_from_string(std::string_view s);
Task task_from_string(std::string_view s);
BinaryMode binary_mode_from_string(std::string_view s);
SelectionRows selection_rows_from_string(std::string_view s);

struct Seeds {
  std::uint64_t fold_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t augment_seed = 0;
};

/// fold_seed = derive_seed(master, "folds"), train_seed = derive_seed(master, "train"),
/// augment_seed = derive_seed(master, "augment").
Seeds seeds_from_master(std::uint64_t master_seed);

struct ExperimentSpec {
  ModelChoice model = ModelChoice::baseline_mlp;
  Augmentation augmentation = Augmentation::none;
  double retention = 1.0;
  Task task = Task::binary;
  Seeds seeds;

  /// Anomaly runs are binary without augmentation; CNN runs take no feature-space augmentation.
  void validate() const;
  /// Table row, e.g. "OS-SMOTE(GBT)".
  std::string row_label() const;
  /// File-name safe identifier, e.g. "gbt-smote-binary-25".
  std::string cell_id() const;
};

nlohmann::json to_json(const ExperimentSpec& s);

struct TrainingConfigs {
  classify::MlpConfig mlp;
  classify::GbtConfig gbt;
  classify::CnnConfig cnn;
  generative::GanConfig gan;
  anomaly::AnomalyConfig anomaly;
  int k_neighbors = 5;
  double adasyn_beta = 1.0;
  int folds = 10;
  int mi_bins = features::kDefaultMiBins;
  /// Rows the MI ranking is fit on: the augmented training set, or its real rows only.
  SelectionRows selection_rows = SelectionRows::augmented;
  BinaryMode binary_mode = BinaryMode::collapse;
  features::ExtractOptions extract;
};

nlohmann::json to_json(const TrainingConfigs& c);

struct Prediction {
  std::string id;
  int fold = 0;
  int label = 0;  // class index
  double score = 0.0;  // binary decision value
};

struct MetricsReport {
  ExperimentSpec spec;
  std::vector<double> per_fold_auc;
  double mean_auc = 0.0;
  std::map<int, double> per_class_auc;  // multiclass: mean over folds
  std::vector<int> excluded_classes;
  std::size_t hygiene_checks = 0;  // folds whose training set was checked against the test fold
  double train_seconds = 0.0;
  double total_seconds = 0.0;
  double generator_seconds = 0.0;  // GAN training (or waiting on a shared generator), included in total_seconds
  std::optional<generative::FidReport> fid;
  std::vector<Prediction> predictions;  // binary task only
};

/// Throws Error(invalid_argument) naming the first test id found among the training ids.
void check_fold_hygiene(std::span<const std::string> test_ids, std::span<const std::string> train_ids, int fold);

/// Loaded corpus, fold plan, precomputed real-image embeddings and the caches shared by all cells.
class ExperimentContext {
 public:
  /// work_dir receives generator checkpoints and synthetic images.
  ExperimentContext(corpus::Manifest manifest, TrainingConfigs configs, Seeds seeds, std::filesystem::path work_dir);
  ~ExperimentContext();
  ExperimentContext(const ExperimentContext&) = delete;
  ExperimentContext& operator=(const ExperimentContext&) = delete;

  const corpus::Manifest& manifest() const;
  const TrainingConfigs& configs() const;
  const Seeds& seeds() const;
  const std::vector<int>& labels() const;

  /// Called with one line per finished stage; must be thread-safe.
  std::function<void(const std::string&)> log;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
  friend std::vector<MetricsReport> run_cell_pair(ExperimentContext&, ModelChoice, Augmentation, double);
  friend std::map<LabelClass, generative::FidReport> class_fid(ExperimentContext&);
};

/// Runs every fold of one (model, augmentation, retention) and returns the binary report and,
/// except for the anomaly model, the multiclass report from the same trained models.
std::vector<MetricsReport> run_cell_pair(ExperimentContext& ctx, ModelChoice model, Augmentation augmentation,
                                         double retention);

MetricsReport run_experiment(ExperimentContext& ctx, const ExperimentSpec& spec);

/// Per-class FID between the real images of fold 0's training split and samples of generators
/// trained on them at full retention (Good included).
std::map<LabelClass, generative::FidReport> class_fid(ExperimentContext& ctx);

struct GridRow {
  ModelChoice model;
  Augmentation augmentation;
};

/// Baseline, GBT, DRAEM-style, OS-RANDOM/ADASYN/SMOTE for both feature models, OS-GAN, CNN, CNN + loss weighting.
std::vector<GridRow> paper_grid_rows();

struct GridSpec {
  std::vector<GridRow> rows = paper_grid_rows();
  std::vector<double> retentions{1.0, 0.75, 0.5, 0.25};
  std::vector<Task> tasks{Task::binary, Task::multiclass};
};

/// Number of (row, task, retention) cells, anomaly rows counting binary only.
std::size_t cell_count(const GridSpec& grid);

struct CellFailure {
  std::string cell;
  std::string message;
};

struct GridResult {
  std::vector<MetricsReport> reports;
  std::vector<CellFailure> failures;
};

/// Cell pairs run on up to `workers` threads; report order follows the grid, not the schedule.
GridResult run_grid(ExperimentContext& ctx, const GridSpec& grid, int workers);

// ---- reporting

struct ResultsTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;  // "binary 100%" … "multiclass 25%"
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::optional<std::size_t>> best;    // row index per column
  std::vector<std::optional<std::size_t>> second;

  /// Fixed-width layout; best cells as **x**, second best as _x_.
  std::string to_text() const;
};

/// Errors on a repeated (row, task, retention) cell.
ResultsTable render_table(std::span<const MetricsReport> reports);

/// Long format: model,augmentation,task,retention,fold,auc with AUCs to 4 decimals.
std::string results_csv(std::span<const MetricsReport> reports);
/// Rebuilds reports (spec, per-fold and mean AUC) from results_csv output.
std::vector<MetricsReport> parse_results_csv(std::string_view text);

std::string predictions_csv(std::span<const MetricsReport> reports);
/// Fills `predictions` of the matching binary reports.
void attach_predictions(std::vector<MetricsReport>& reports, std::string_view text);

RgbImage plot_roc(const MetricsReport& binary_report);
RgbImage plot_fid(const std::map<LabelClass, generative::FidReport>& fid);

/// results.csv, predictions.csv, table.txt, roc_<cell>.png for binary cells and fid.png when given.
void write_report(const std::filesystem::path& dir, std::span<const MetricsReport> reports,
                  const std::map<LabelClass, generative::FidReport>* fid);

}  // namespace inspectlab::evaluate
