#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/image.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/corpus.hpp"

namespace inspectlab::anomaly {

enum class Aggregation { top_percent, max };

struct AnomalyConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  std::vector<std::size_t> channels{8, 16, 32, 64};  // reconstructor levels
  std::size_t head_channels = 8;
  double corruption_probability = 0.5;
  /// Ranges for the simulated anomalies, in pixels at 64×64 (scaled with image size).
  corpus::DefectParams defects;
  Aggregation aggregation = Aggregation::top_percent;
  double top_fraction = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const AnomalyConfig& c);
AnomalyConfig anomaly_config_from_json(const nlohmann::json& j);

struct AnomalyResult {
  double score = 0.0;
  int width = 0, height = 0;
  std::vector<float> map;  // per-pixel anomaly probability, row-major
};

/// Encoder–decoder reconstructor plus a convolutional head over (input, reconstruction).
class AnomalyModel {
 public:
  AnomalyModel(const AnomalyConfig& config, int image_size);
  ~AnomalyModel();
  AnomalyModel(AnomalyModel&&) noexcept;
  AnomalyModel& operator=(AnomalyModel&&) noexcept;

  const AnomalyConfig& config() const { return config_; }
  int image_size() const { return image_size_; }
  const std::vector<double>& reconstruction_history() const { return recon_history_; }
  const std::vector<double>& head_history() const { return head_history_; }

  Bytes weights_blob() const;

  struct Impl;

 private:
  friend AnomalyModel train_unsupervised(std::span<const GrayImage>, std::span<const corpus::LabelClass>,
                                         const AnomalyConfig&);
  friend AnomalyResult score(const AnomalyModel&, const GrayImage&);
  friend AnomalyModel load_anomaly_model(const std::filesystem::path&);
  AnomalyConfig config_;
  int image_size_;
  std::vector<double> recon_history_, head_history_;
  std::unique_ptr<Impl> impl_;
};

/// Trains on Good images plus procedurally corrupted copies. Any label other than Good is
/// rejected with a label_guard error.
AnomalyModel train_unsupervised(std::span<const GrayImage> good_images, std::span<const corpus::LabelClass> labels,
                                const AnomalyConfig& config);

/// Anomaly map from the head and its aggregate score (higher = more anomalous).
AnomalyResult score(const AnomalyModel& model, const GrayImage& image);
std::vector<double> score_all(const AnomalyModel& model, std::span<const GrayImage> images);

/// Binary AUC with defective samples as positives.
double evaluate_anomaly_auc(const AnomalyModel& model, std::span<const GrayImage> images,
                            std::span<const corpus::LabelClass> labels);

/// Container "ANOM1": CONF, SIZE, WGTS, HIST.
void save_anomaly_model(const AnomalyModel& model, const std::filesystem::path& path);
AnomalyModel load_anomaly_model(const std::filesystem::path& path);

/// Blue→red heat map of an anomaly map.
RgbImage heatmap(const AnomalyResult& result);

/// Random defect of either kind, with parameters drawn from `defects` scaled to the image size.
corpus::Corruption random_corruption(const GrayImage& image, const corpus::DefectParams& defects, Rng& rng);

}  // namespace inspectlab::anomaly
