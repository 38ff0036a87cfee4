#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/image.hpp"
#include "inspectlab/corpus.hpp"
#include "inspectlab/features.hpp"

namespace inspectlab::generative {

using corpus::LabelClass;

struct GanConfig {
  int image_size = 64;
  int latent_dim = 128;
  int iterations = 2000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int generator_width = 128;      // channels at 4×4, halved per upsampling level (minimum 8)
  int discriminator_width = 128;  // channels at the deepest level
  double reconstruction_weight = 1.0;
  int fid_interval = 500;         // 0 records only the first and last iterations
  int fid_samples = 128;
  std::uint64_t fid_seed = 0x5eed;
  features::Backend fid_backend = features::Backend::hermetic;
  std::filesystem::path fid_weights;  // pretrained backbone only
  std::uint64_t seed = 0;
  LabelClass label = LabelClass::good;

  /// Throws Error(config) naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const GanConfig& c);
GanConfig gan_config_from_json(const nlohmann::json& j);

struct StepLog {
  int iteration = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double recon_loss = 0.0;
};

struct GeneratorCheckpoint {
  GanConfig config;
  int iteration = 0;  // completed iterations
  std::vector<std::pair<int, double>> fid_history;
  std::vector<StepLog> log;
  Bytes generator;
  Bytes discriminator;
  Bytes generator_opt;
  Bytes discriminator_opt;
};

struct TrainHooks {
  /// Called after every iteration.
  std::function<void(const StepLog&)> on_step;
  /// When set, the checkpoint is written here at every FID record, so the last good state survives a failure.
  std::filesystem::path checkpoint_path;
};

/// Trains (or resumes) an unconditional generator on images of one class. Resuming from a
/// checkpoint of the same config reproduces the uninterrupted run exactly.
GeneratorCheckpoint train_gan(std::span<const GrayImage> images, const GanConfig& config,
                              const GeneratorCheckpoint* resume = nullptr, const TrainHooks& hooks = {});

/// n images of config.image_size; image i depends only on (checkpoint, seed, i).
std::vector<GrayImage> sample(const GeneratorCheckpoint& checkpoint, std::size_t n, std::uint64_t seed);

/// Container "LGAN1": CONF, ITER, FIDH, LOGS, GENW, DISW, OPTG, OPTD.
void save_checkpoint(const GeneratorCheckpoint& c, const std::filesystem::path& path);
GeneratorCheckpoint load_checkpoint(const std::filesystem::path& path);

struct FidReport {
  double value = 0.0;
  std::size_t n_real = 0;
  std::size_t n_synth = 0;
  features::Backend embedding_backend = features::Backend::hermetic;
  std::map<LabelClass, double> per_class;
};

/// ‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2·(Σ₁^{½} Σ₂ Σ₁^{½})^{½}); negative eigenvalues clipped to 0,
/// `ridge`·I added to both covariances.
double fid_from_moments(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& sigma2, double ridge = 0.0);

inline constexpr double kFidRidge = 1e-6;

/// Gaussian fit of each matrix (unbiased covariance), ridge 1e-6.
FidReport compute_fid(const features::FeatureMatrix& real, const features::FeatureMatrix& synth,
                      features::Backend backend = features::Backend::hermetic);

/// Appends generated images (provenance gan_synthetic) until every class reaches the majority
/// count. Images go to <run_dir>/synthetic/<class>/<seed>_<index>.png; synthetic samples carry
/// absolute paths, real samples keep theirs.
corpus::Manifest gan_oversample(const corpus::Manifest& train, const std::map<LabelClass, GeneratorCheckpoint>& generators,
                                std::uint64_t seed, const std::filesystem::path& run_dir);

}  // namespace inspectlab::generative
