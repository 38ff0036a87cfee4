#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "inspectlab/core/image.hpp"

namespace inspectlab::corpus {

enum class LabelClass { good = 0, double_print = 1, interrupted_print = 2 };

inline constexpr std::array<LabelClass, 3> kAllClasses = {LabelClass::good, LabelClass::double_print,
                                                          LabelClass::interrupted_print};
inline constexpr std::size_t kNumClasses = kAllClasses.size();

std::string_view to_string(LabelClass label);
/// Table caption spelling: "Good", "Double print", "Interrupted print".
std::string_view display_name(LabelClass label);
LabelClass label_from_string(std::string_view text);
/// Binary view: Good is negative, both print defects are positive.
inline bool is_defective(LabelClass label) { return label != LabelClass::good; }
inline int class_index(LabelClass label) { return static_cast<int>(label); }

template <typename T>
struct Range {
  T lo{};
  T hi{};
  bool operator==(const Range&) const = default;
};

struct DefectParams {
  Range<double> double_print_offset{2.0, 5.0};   // pixels at 64×64, scaled with image size
  Range<double> double_print_opacity{0.45, 0.85};
  Range<int> interrupt_band_count{1, 3};
  Range<double> interrupt_band_width{2.0, 4.5};  // pixels at 64×64
  bool operator==(const DefectParams&) const = default;
};

struct NoiseParams {
  double rotation_jitter = 4.0;      // degrees, symmetric
  double translation_jitter = 3.0;   // pixels at 64×64, symmetric
  double background_texture_amplitude = 0.05;
  double lighting_gradient_amplitude = 0.10;
  bool operator==(const NoiseParams&) const = default;
};

struct CorpusSpec {
  int image_size = 64;
  std::map<LabelClass, int> counts{{LabelClass::good, 1000}, {LabelClass::double_print, 150},
                                   {LabelClass::interrupted_print, 150}};
  DefectParams defect_params;
  NoiseParams noise;
  std::uint64_t seed = 0;

  /// Throws Error(config) naming the offending field.
  void validate() const;
  int total() const;
  bool operator==(const CorpusSpec&) const = default;
};

nlohmann::json to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);

struct Band {
  double position = 0.0;  // x pixel coordinate where the centre line crosses the vertical midpoint
  double angle = 0.0;     // degrees from vertical
  double width = 0.0;     // pixels
  bool operator==(const Band&) const = default;
};

/// Every value drawn for one sample; rendering is a pure function of this.
struct RenderParams {
  int image_size = 64;
  double rotation = 0.0;  // degrees
  double shift_x = 0.0;   // pixels
  double shift_y = 0.0;
  double background = 0.82;
  double ink = 0.16;
  std::uint64_t texture_seed = 0;
  double texture_amplitude = 0.0;
  double gradient_angle = 0.0;  // radians
  double gradient_amplitude = 0.0;
  LabelClass defect = LabelClass::good;
  double offset_x = 0.0;  // double print displacement, pixels
  double offset_y = 0.0;
  double opacity = 0.0;
  std::vector<Band> bands;
  bool operator==(const RenderParams&) const = default;
};

nlohmann::json to_json(const RenderParams& p);
RenderParams render_params_from_json(const nlohmann::json& j);

/// Draw the parameters of sample `index` (global, class-major order) of class `label`.
RenderParams draw_render_params(const CorpusSpec& spec, std::size_t index, LabelClass label);

/// Rasterize a sample. Double prints combine coverages as max(c, opacity·c_shifted).
GrayImage render(const RenderParams& params);

/// The same sample without its defect.
inline RenderParams base_of(RenderParams p) {
  p.defect = LabelClass::good;
  p.bands.clear();
  p.offset_x = p.offset_y = p.opacity = 0.0;
  return p;
}

enum class Provenance { real, gan_synthetic };
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view text);

struct ImageSample {
  std::string id;
  std::string path;  // relative to the manifest directory, or absolute
  LabelClass label = LabelClass::good;
  Provenance provenance = Provenance::real;
  nlohmann::json gen_params;
  bool operator==(const ImageSample&) const = default;
};

inline constexpr int kManifestFormatVersion = 1;

struct Manifest {
  int format_version = kManifestFormatVersion;
  CorpusSpec corpus_spec;
  std::vector<ImageSample> samples;
  std::filesystem::path root;  // directory that relative paths resolve against; not serialized

  std::map<LabelClass, int> class_counts() const;
  std::filesystem::path image_path(const ImageSample& s) const { return root / s.path; }
  GrayImage load_image(const ImageSample& s) const;
  /// Structural equality (root excluded).
  bool same_content(const Manifest& other) const {
    return format_version == other.format_version && corpus_spec == other.corpus_spec && samples == other.samples;
  }
};

nlohmann::json to_json(const Manifest& m);
std::string serialize_manifest(const Manifest& m);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Errors: missing file (io), unsupported version (version_mismatch), missing image (missing_sample, names the id).
Manifest load_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestFileName = "manifest.json";

/// Writes counts[c] PNGs per class under out_dir/images/<class>/ and out_dir/manifest.json.
Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

/// Keeps ⌈retention·n_c⌉ samples of each defective class, order preserved; Good untouched.
Manifest subsample_defective(const Manifest& manifest, double retention, std::uint64_t seed);

// Image-space defect renderers, used to simulate anomalies on images whose
// generation parameters are unknown. Each returns the corrupted image and a
// per-pixel [0,1] mask of where it differs.
struct Corruption {
  GrayImage image;
  std::vector<float> mask;
};

Corruption overlay_double_print(const GrayImage& image, double dx, double dy, double opacity);
/// Bands are in pixel space: centre x at the image's vertical midline, angle from vertical.
Corruption erase_bands(const GrayImage& image, const std::vector<Band>& bands);

}  // namespace inspectlab::corpus
