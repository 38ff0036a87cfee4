#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inspectlab/core/image.hpp"
#include "inspectlab/corpus.hpp"

namespace inspectlab::features {

inline constexpr std::size_t kEmbeddingDim = 512;
inline constexpr int kDefaultMiBins = 16;

/// Dense row-major float matrix with one sample id per row.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::vector<std::string> row_ids;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f), row_ids(r) {}

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::vector<float> column(std::size_t c) const;

  /// Throws when an entry is not finite or row ids repeat.
  void validate() const;
  void append_row(std::span<const float> values, std::string id);
  bool operator==(const FeatureMatrix&) const = default;
};

FeatureMatrix take_rows(const FeatureMatrix& m, std::span<const std::size_t> rows);

struct SelectionMask {
  std::vector<std::size_t> selected_columns;
  std::size_t k = 0;
  std::vector<double> mi_scores;  // one per input column
};

enum class Backend { pretrained_backbone, hermetic };
std::string_view to_string(Backend b);
Backend backend_from_string(std::string_view text);

/// Hand-crafted 512-dim descriptor: 8×8 intensity grid (64), 4×4×8 oriented
/// gradient histogram (128), 8×8×4 oriented gradient histogram (256) and
/// strip standard deviations at four scales (64). No learned weights; computed
/// with IEEE-exact operations only so it is bit-reproducible across machines.
std::vector<float> hermetic_descriptor(const GrayImage& image);

/// 18-layer residual ImageNet classifier truncated at the global average pool.
/// Inference only; batch-norm statistics are folded at load time.
class ResNet18 {
 public:
  /// Weights file written by tools/export_resnet18.py (container magic "RN18W").
  static ResNet18 load(const std::filesystem::path& path);
  ~ResNet18();
  ResNet18(ResNet18&&) noexcept;
  ResNet18& operator=(ResNet18&&) noexcept;

  /// Grayscale is replicated to three channels, resized to input_size and
  /// normalized with the ImageNet channel statistics.
  std::vector<float> embed(const GrayImage& image) const;
  /// Raw forward pass on an already-normalized 3×H×W input.
  std::vector<float> embed_normalized(std::span<const float> chw, std::size_t height, std::size_t width) const;

  int input_size = 224;

 private:
  struct Impl;
  explicit ResNet18(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

struct ExtractOptions {
  Backend backend = Backend::hermetic;
  std::filesystem::path weights_path;  // pretrained backbone only
  int backbone_input_size = 224;
  /// Per-image cache keyed by (backend, image content hash); empty disables it.
  std::filesystem::path cache_dir;
};

/// Cache directory from INSPECTLAB_CACHE, or empty.
std::filesystem::path cache_dir_from_env();

/// One 512-dim row per sample, in order. Undecodable images are reported with their sample id.
FeatureMatrix extract_embeddings(const corpus::Manifest& manifest, std::span<const corpus::ImageSample> samples,
                                 const ExtractOptions& options);
FeatureMatrix extract_embeddings(std::span<const GrayImage> images, std::span<const std::string> ids,
                                 const ExtractOptions& options);

/// Plug-in mutual information (nats) between the equal-frequency binned column and the labels.
double mutual_information(std::span<const float> column, std::span<const int> labels, int bins = kDefaultMiBins);

/// Equal-frequency bin index per value; tied values share the bin of their first rank.
std::vector<int> equal_frequency_bins(std::span<const float> column, int bins);

/// ⌊√n⌋ computed exactly.
std::size_t floor_sqrt(std::size_t n);

/// k = min(⌊√N⌋, d) columns with the highest MI; ties go to the lower index.
SelectionMask select_top_k(const FeatureMatrix& matrix, std::span<const int> labels, int bins = kDefaultMiBins);
FeatureMatrix apply_mask(const FeatureMatrix& matrix, const SelectionMask& mask);

/// Binary container: "FMAT1", u64 n, u64 d, row-major f32, then newline-delimited ids.
void write_fmat(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_fmat(const std::filesystem::path& path);
std::string to_csv(const FeatureMatrix& m);

}  // namespace inspectlab::features
