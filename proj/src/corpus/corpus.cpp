#include "inspectlab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <system_error>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"

namespace inspectlab::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(LabelClass label) {
  switch (label) {
    case LabelClass::good: return "good";
    case LabelClass::double_print: return "double_print";
    case LabelClass::interrupted_print: return "interrupted_print";
  }
  return "?";
}

std::string_view display_name(LabelClass label) {
  switch (label) {
    case LabelClass::good: return "Good";
    case LabelClass::double_print: return "Double print";
    case LabelClass::interrupted_print: return "Interrupted print";
  }
  return "?";
}

LabelClass label_from_string(std::string_view text) {
  for (auto c : kAllClasses)
    if (to_string(c) == text) return c;
  fail(ErrorKind::format, "unknown label '" + std::string(text) + "'");
}

std::string_view to_string(Provenance p) { return p == Provenance::real ? "real" : "gan_synthetic"; }

Provenance provenance_from_string(std::string_view text) {
  if (text == "real") return Provenance::real;
  if (text == "gan_synthetic") return Provenance::gan_synthetic;
  fail(ErrorKind::format, "unknown provenance '" + std::string(text) + "'");
}

// ---- spec ---------------------------------------------------------------

void CorpusSpec::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::config, field + ": " + why); };
  if (image_size < 16 || image_size > 512) bad("image_size", "must be within [16, 512]");
  for (auto c : kAllClasses) {
    auto it = counts.find(c);
    if (it != counts.end() && it->second < 0) bad("counts." + std::string(to_string(c)), "must be non-negative");
  }
  if (total() < 1) bad("counts", "must sum to at least 1");
  const auto& d = defect_params;
  if (d.double_print_offset.lo < 0 || d.double_print_offset.lo > d.double_print_offset.hi)
    bad("defect_params.double_print_offset", "needs 0 <= lo <= hi");
  if (d.double_print_opacity.lo < 0 || d.double_print_opacity.hi > 1 ||
      d.double_print_opacity.lo > d.double_print_opacity.hi)
    bad("defect_params.double_print_opacity", "needs 0 <= lo <= hi <= 1");
  if (d.interrupt_band_count.lo < 1 || d.interrupt_band_count.lo > d.interrupt_band_count.hi)
    bad("defect_params.interrupt_band_count", "needs 1 <= lo <= hi");
  if (d.interrupt_band_width.lo <= 0 || d.interrupt_band_width.lo > d.interrupt_band_width.hi)
    bad("defect_params.interrupt_band_width", "needs 0 < lo <= hi");
  if (noise.rotation_jitter < 0 || noise.rotation_jitter > 180) bad("noise.rotation_jitter", "must be within [0, 180]");
  if (noise.translation_jitter < 0) bad("noise.translation_jitter", "must be non-negative");
  if (noise.background_texture_amplitude < 0 || noise.background_texture_amplitude > 1)
    bad("noise.background_texture_amplitude", "must be within [0, 1]");
  if (noise.lighting_gradient_amplitude < 0 || noise.lighting_gradient_amplitude > 1)
    bad("noise.lighting_gradient_amplitude", "must be within [0, 1]");
}

int CorpusSpec::total() const {
  int t = 0;
  for (const auto& [c, n] : counts) t += n;
  return t;
}

namespace {

template <typename T>
json range_json(const Range<T>& r) {
  return json::array({r.lo, r.hi});
}

template <typename T>
Range<T> range_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) fail(ErrorKind::config, key + ": expected [lo, hi]");
  try {
    return {j[0].get<T>(), j[1].get<T>()};
  } catch (const json::exception&) {
    fail(ErrorKind::config, key + ": expected numeric [lo, hi]");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::config, where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(ErrorKind::config, (where.empty() ? "" : where + ".") + k + ": unknown key");
  }
}

template <typename T>
T number_at(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) fail(ErrorKind::config, where + "." + key + ": expected a number");
  return v.get<T>();
}

}  // namespace

json to_json(const CorpusSpec& spec) {
  json counts = json::object();
  for (auto c : kAllClasses) {
    auto it = spec.counts.find(c);
    counts[std::string(to_string(c))] = it == spec.counts.end() ? 0 : it->second;
  }
  const auto& d = spec.defect_params;
  const auto& n = spec.noise;
  return json{{"image_size", spec.image_size},
              {"counts", counts},
              {"defect_params",
               {{"double_print_offset", range_json(d.double_print_offset)},
                {"double_print_opacity", range_json(d.double_print_opacity)},
                {"interrupt_band_count", range_json(d.interrupt_band_count)},
                {"interrupt_band_width", range_json(d.interrupt_band_width)}}},
              {"noise",
               {{"rotation_jitter", n.rotation_jitter},
                {"translation_jitter", n.translation_jitter},
                {"background_texture_amplitude", n.background_texture_amplitude},
                {"lighting_gradient_amplitude", n.lighting_gradient_amplitude}}},
              {"seed", spec.seed}};
}

CorpusSpec corpus_spec_from_json(const json& j) {
  check_keys(j, {"image_size", "counts", "defect_params", "noise", "seed"}, "corpus_spec");
  CorpusSpec s;
  s.image_size = number_at<int>(j, "image_size", "corpus_spec", s.image_size);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      fail(ErrorKind::config, "corpus_spec.seed: expected an integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("counts")) {
    const auto& c = j["counts"];
    check_keys(c, {"good", "double_print", "interrupted_print"}, "corpus_spec.counts");
    for (const auto& [k, v] : c.items()) {
      if (!v.is_number_integer()) fail(ErrorKind::config, "corpus_spec.counts." + k + ": expected an integer");
      s.counts[label_from_string(k)] = v.get<int>();
    }
  }
  if (j.contains("defect_params")) {
    const auto& d = j["defect_params"];
    check_keys(d, {"double_print_offset", "double_print_opacity", "interrupt_band_count", "interrupt_band_width"},
               "corpus_spec.defect_params");
    const std::string w = "corpus_spec.defect_params.";
    if (d.contains("double_print_offset"))
      s.defect_params.double_print_offset = range_from<double>(d["double_print_offset"], w + "double_print_offset");
    if (d.contains("double_print_opacity"))
      s.defect_params.double_print_opacity = range_from<double>(d["double_print_opacity"], w + "double_print_opacity");
    if (d.contains("interrupt_band_count"))
      s.defect_params.interrupt_band_count = range_from<int>(d["interrupt_band_count"], w + "interrupt_band_count");
    if (d.contains("interrupt_band_width"))
      s.defect_params.interrupt_band_width = range_from<double>(d["interrupt_band_width"], w + "interrupt_band_width");
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    check_keys(n, {"rotation_jitter", "translation_jitter", "background_texture_amplitude",
                   "lighting_gradient_amplitude"},
               "corpus_spec.noise");
    const std::string w = "corpus_spec.noise";
    s.noise.rotation_jitter = number_at<double>(n, "rotation_jitter", w, s.noise.rotation_jitter);
    s.noise.translation_jitter = number_at<double>(n, "translation_jitter", w, s.noise.translation_jitter);
    s.noise.background_texture_amplitude =
        number_at<double>(n, "background_texture_amplitude", w, s.noise.background_texture_amplitude);
    s.noise.lighting_gradient_amplitude =
        number_at<double>(n, "lighting_gradient_amplitude", w, s.noise.lighting_gradient_amplitude);
  }
  return s;
}

json to_json(const RenderParams& p) {
  json bands = json::array();
  for (const auto& b : p.bands) bands.push_back({{"position", b.position}, {"angle", b.angle}, {"width", b.width}});
  return json{{"image_size", p.image_size},
              {"rotation", p.rotation},
              {"shift_x", p.shift_x},
              {"shift_y", p.shift_y},
              {"background", p.background},
              {"ink", p.ink},
              {"texture_seed", p.texture_seed},
              {"texture_amplitude", p.texture_amplitude},
              {"gradient_angle", p.gradient_angle},
              {"gradient_amplitude", p.gradient_amplitude},
              {"defect", std::string(to_string(p.defect))},
              {"offset_x", p.offset_x},
              {"offset_y", p.offset_y},
              {"opacity", p.opacity},
              {"bands", bands}};
}

RenderParams render_params_from_json(const json& j) {
  try {
    RenderParams p;
    p.image_size = j.at("image_size").get<int>();
    p.rotation = j.at("rotation").get<double>();
    p.shift_x = j.at("shift_x").get<double>();
    p.shift_y = j.at("shift_y").get<double>();
    p.background = j.at("background").get<double>();
    p.ink = j.at("ink").get<double>();
    p.texture_seed = j.at("texture_seed").get<std::uint64_t>();
    p.texture_amplitude = j.at("texture_amplitude").get<double>();
    p.gradient_angle = j.at("gradient_angle").get<double>();
    p.gradient_amplitude = j.at("gradient_amplitude").get<double>();
    p.defect = label_from_string(j.at("defect").get<std::string>());
    p.offset_x = j.at("offset_x").get<double>();
    p.offset_y = j.at("offset_y").get<double>();
    p.opacity = j.at("opacity").get<double>();
    for (const auto& b : j.at("bands"))
      p.bands.push_back({b.at("position").get<double>(), b.at("angle").get<double>(), b.at("width").get<double>()});
    return p;
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("gen_params: ") + e.what());
  }
}

// ---- rendering ------------------------------------------------------------

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

// Placeholder wordmark in glyph units: x in [-1, 1], y in [-0.35, 0.35], y down.
constexpr Segment kWordmark[] = {
    {-0.95, 0.35, -0.72, -0.35}, {-0.72, -0.35, -0.49, 0.35}, {-0.84, 0.09, -0.60, 0.09},  // A
    {-0.33, -0.35, -0.12, 0.35}, {-0.12, 0.35, 0.09, -0.35},                                // V
    {0.27, -0.35, 0.27, 0.35},                                                              // I
    {0.50, -0.35, 0.50, 0.35},   {0.50, 0.35, 0.95, 0.35},                                  // L
    {-0.95, -0.50, 0.95, -0.50},                                                            // rule
};

constexpr double kGlyphUnit = 0.40;       // glyph unit as a fraction of image size
constexpr double kStrokeHalfWidth = 0.028;  // fraction of image size

double segment_distance(double px, double py, const Segment& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double wx = px - s.x0, wy = py - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

struct GlyphFrame {
  double cx, cy, cos_t, sin_t, unit, half_width;

  GlyphFrame(const RenderParams& p) {
    const double size = p.image_size;
    cx = size / 2.0 + p.shift_x;
    cy = size / 2.0 + p.shift_y;
    const double theta = p.rotation * std::numbers::pi / 180.0;
    cos_t = std::cos(theta);
    sin_t = std::sin(theta);
    unit = kGlyphUnit * size;
    half_width = kStrokeHalfWidth * size;
  }

  // Antialiased ink coverage at a pixel-space point.
  double coverage(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double gx = (cos_t * dx + sin_t * dy) / unit;
    const double gy = (-sin_t * dx + cos_t * dy) / unit;
    double d = 1e30;
    for (const auto& s : kWordmark) d = std::min(d, segment_distance(gx, gy, s));
    return std::clamp(half_width + 0.5 - d * unit, 0.0, 1.0);
  }
};

double band_mask(const std::vector<Band>& bands, double x, double y, double size) {
  double m = 0.0;
  for (const auto& b : bands) {
    const double a = b.angle * std::numbers::pi / 180.0;
    // Distance from (x, y) to the line through (position, size/2) with direction (sin a, cos a).
    const double d = std::abs((x - b.position) * std::cos(a) - (y - size / 2.0) * std::sin(a));
    m = std::max(m, std::clamp(b.width / 2.0 + 0.5 - d, 0.0, 1.0));
  }
  return m;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

class ValueNoise {
 public:
  ValueNoise(std::uint64_t seed, int cells) : cells_(cells), grid_((cells + 1) * (cells + 1)) {
    Rng rng(seed);
    for (auto& v : grid_) v = rng.uniform(-1.0, 1.0);
  }

  double at(double u, double v) const {  // u, v in [0, 1)
    const double fu = u * cells_, fv = v * cells_;
    const int iu = std::min(static_cast<int>(fu), cells_ - 1);
    const int iv = std::min(static_cast<int>(fv), cells_ - 1);
    const double tu = smooth(fu - iu), tv = smooth(fv - iv);
    auto g = [&](int a, int b) { return grid_[static_cast<std::size_t>(b) * (cells_ + 1) + a]; };
    const double top = g(iu, iv) * (1 - tu) + g(iu + 1, iv) * tu;
    const double bottom = g(iu, iv + 1) * (1 - tu) + g(iu + 1, iv + 1) * tu;
    return top * (1 - tv) + bottom * tv;
  }

 private:
  int cells_;
  std::vector<double> grid_;
};

}  // namespace

RenderParams draw_render_params(const CorpusSpec& spec, std::size_t index, LabelClass label) {
  Rng rng(derive_seed(spec.seed, "sample", index));
  const double f = spec.image_size / 64.0;
  RenderParams p;
  p.image_size = spec.image_size;
  p.rotation = rng.uniform(-spec.noise.rotation_jitter, spec.noise.rotation_jitter);
  p.shift_x = rng.uniform(-spec.noise.translation_jitter, spec.noise.translation_jitter) * f;
  p.shift_y = rng.uniform(-spec.noise.translation_jitter, spec.noise.translation_jitter) * f;
  p.background = rng.uniform(0.76, 0.88);
  p.ink = rng.uniform(0.10, 0.24);
  p.texture_seed = rng.next();
  p.texture_amplitude = spec.noise.background_texture_amplitude * rng.uniform(0.5, 1.0);
  p.gradient_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.gradient_amplitude = spec.noise.lighting_gradient_amplitude * rng.uniform();
  p.defect = label;

  Rng defect_rng(derive_seed(spec.seed, "defect", index));
  const auto& d = spec.defect_params;
  if (label == LabelClass::double_print) {
    const double r = defect_rng.uniform(d.double_print_offset.lo, d.double_print_offset.hi) * f;
    const double phi = defect_rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.offset_x = r * std::cos(phi);
    p.offset_y = r * std::sin(phi);
    p.opacity = defect_rng.uniform(d.double_print_opacity.lo, d.double_print_opacity.hi);
  } else if (label == LabelClass::interrupted_print) {
    const int n = defect_rng.integer(d.interrupt_band_count.lo, d.interrupt_band_count.hi);
    const double centre = spec.image_size / 2.0 + p.shift_x;
    const double half = kGlyphUnit * spec.image_size;
    for (int i = 0; i < n; ++i) {
      Band b;
      b.position = centre + defect_rng.uniform(-0.85, 0.85) * half;
      b.angle = defect_rng.uniform(-25.0, 25.0);
      b.width = defect_rng.uniform(d.interrupt_band_width.lo, d.interrupt_band_width.hi) * f;
      p.bands.push_back(b);
    }
  }
  return p;
}

GrayImage render(const RenderParams& p) {
  const int size = p.image_size;
  require(size > 0, "render: image_size must be positive");
  const GlyphFrame frame(p);
  const ValueNoise coarse(p.texture_seed, 6);
  const ValueNoise fine(splitmix64(p.texture_seed), 21);
  const double ca = std::cos(p.gradient_angle), sa = std::sin(p.gradient_angle);
  GrayImage out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double u = px / size, v = py / size;
      const double texture = 0.65 * coarse.at(u, v) + 0.35 * fine.at(u, v);
      const double bg = p.background + p.gradient_amplitude * ((u - 0.5) * ca + (v - 0.5) * sa) +
                        p.texture_amplitude * texture;
      double c = frame.coverage(px, py);
      if (p.defect == LabelClass::double_print) {
        c = std::max(c, p.opacity * frame.coverage(px - p.offset_x, py - p.offset_y));
      } else if (p.defect == LabelClass::interrupted_print) {
        c *= 1.0 - band_mask(p.bands, px, py, size);
      }
      const double value = std::clamp(bg * (1.0 - c) + p.ink * c, 0.0, 1.0);
      out.at(x, y) = static_cast<std::uint8_t>(std::floor(value * 255.0 + 0.5));
    }
  }
  return out;
}

// ---- image-space defects --------------------------------------------------

namespace {

double sample_bilinear(const GrayImage& img, double x, double y) {
  x = std::clamp(x - 0.5, 0.0, img.width - 1.0);
  y = std::clamp(y - 0.5, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double wx = x - x0, wy = y - y0;
  return (img.at(x0, y0) * (1 - wx) + img.at(x1, y0) * wx) * (1 - wy) +
         (img.at(x0, y1) * (1 - wx) + img.at(x1, y1) * wx) * wy;
}

double percentile(std::vector<std::uint8_t> values, double q) {
  const auto k = static_cast<std::size_t>(q * (values.size() - 1));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

Corruption finish(const GrayImage& original, GrayImage corrupted) {
  Corruption c{std::move(corrupted), std::vector<float>(original.size(), 0.0f)};
  for (std::size_t i = 0; i < original.size(); ++i) {
    const int diff = std::abs(static_cast<int>(original.pixels[i]) - static_cast<int>(c.image.pixels[i]));
    c.mask[i] = diff >= 8 ? 1.0f : 0.0f;
  }
  return c;
}

}  // namespace

Corruption overlay_double_print(const GrayImage& image, double dx, double dy, double opacity) {
  GrayImage out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double here = image.at(x, y);
      const double shifted = sample_bilinear(image, x + 0.5 - dx, y + 0.5 - dy);
      const double v = std::min(here, here + opacity * (shifted - here));
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  return finish(image, std::move(out));
}

Corruption erase_bands(const GrayImage& image, const std::vector<Band>& bands) {
  const double paper = percentile(image.pixels, 0.85);
  GrayImage out = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double m = band_mask(bands, x + 0.5, y + 0.5, image.height);
      if (m <= 0.0) continue;
      const double here = image.at(x, y);
      const double v = std::max(here, here + m * (paper - here));
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  return finish(image, std::move(out));
}

// ---- manifests ------------------------------------------------------------

std::map<LabelClass, int> Manifest::class_counts() const {
  std::map<LabelClass, int> counts;
  for (auto c : kAllClasses) counts[c] = 0;
  for (const auto& s : samples) ++counts[s.label];
  return counts;
}

GrayImage Manifest::load_image(const ImageSample& s) const {
  try {
    return read_png(image_path(s));
  } catch (const Error& e) {
    fail(ErrorKind::missing_sample, "sample " + s.id + ": " + e.what());
  }
}

json to_json(const Manifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"path", s.path},
                       {"label", std::string(to_string(s.label))},
                       {"provenance", std::string(to_string(s.provenance))},
                       {"gen_params", s.gen_params}});
  }
  return json{{"format_version", m.format_version}, {"corpus_spec", to_json(m.corpus_spec)}, {"samples", samples}};
}

std::string serialize_manifest(const Manifest& m) { return to_json(m).dump(2) + "\n"; }

void write_manifest(const Manifest& m, const fs::path& path) { write_text(path, serialize_manifest(m)); }

Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::io, "manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "manifest " + path.string() + ": " + e.what());
  }
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    fail(ErrorKind::format, "manifest has no integer format_version");
  const int version = j["format_version"].get<int>();
  if (version != kManifestFormatVersion) {
    fail(ErrorKind::version_mismatch, "manifest format_version " + std::to_string(version) + " is not supported (expected " +
                                          std::to_string(kManifestFormatVersion) + ")");
  }
  Manifest m;
  m.format_version = version;
  m.root = path.parent_path();
  try {
    m.corpus_spec = corpus_spec_from_json(j.at("corpus_spec"));
    for (const auto& s : j.at("samples")) {
      ImageSample sample;
      sample.id = s.at("id").get<std::string>();
      sample.path = s.at("path").get<std::string>();
      sample.label = label_from_string(s.at("label").get<std::string>());
      sample.provenance = provenance_from_string(s.at("provenance").get<std::string>());
      sample.gen_params = s.at("gen_params");
      m.samples.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "manifest " + path.string() + ": " + e.what());
  }
  for (const auto& s : m.samples) {
    if (!fs::exists(m.image_path(s)))
      fail(ErrorKind::missing_sample, "sample " + s.id + ": image missing at " + m.image_path(s).string());
  }
  return m;
}

Manifest generate_corpus(const CorpusSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  for (auto c : kAllClasses) {
    fs::create_directories(out_dir / "images" / std::string(to_string(c)), ec);
    if (ec) fail(ErrorKind::io, "cannot create " + (out_dir / "images").string() + ": " + ec.message());
  }

  Manifest m;
  m.corpus_spec = spec;
  m.root = out_dir;
  std::vector<RenderParams> params;
  for (auto c : kAllClasses) {
    auto it = spec.counts.find(c);
    const int n = it == spec.counts.end() ? 0 : it->second;
    for (int i = 0; i < n; ++i) {
      const std::size_t index = m.samples.size();
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%05d", std::string(to_string(c)).c_str(), i);
      ImageSample s;
      s.id = name;
      s.path = "images/" + std::string(to_string(c)) + "/" + s.id + ".png";
      s.label = c;
      s.provenance = Provenance::real;
      params.push_back(draw_render_params(spec, index, c));
      s.gen_params = to_json(params.back());
      m.samples.push_back(std::move(s));
    }
  }

  std::vector<std::string> errors(m.samples.size());
  const auto n = static_cast<std::ptrdiff_t>(m.samples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      write_png(m.image_path(m.samples[i]), render(params[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::io, e);
  write_manifest(m, out_dir / kManifestFileName);
  return m;
}

Manifest subsample_defective(const Manifest& manifest, double retention, std::uint64_t seed) {
  if (!(retention > 0.0 && retention <= 1.0))
    fail(ErrorKind::invalid_argument, "retention must be in (0, 1], got " + std::to_string(retention));
  std::vector<char> keep(manifest.samples.size(), 1);
  for (auto c : kAllClasses) {
    if (!is_defective(c)) continue;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i)
      if (manifest.samples[i].label == c) idx.push_back(i);
    if (idx.empty()) continue;
    // The small slack keeps products like 0.1·30 from rounding up past the exact value.
    const auto kept = static_cast<std::size_t>(std::ceil(retention * static_cast<double>(idx.size()) - 1e-9));
    Rng rng(derive_seed(seed, "retention", static_cast<std::uint64_t>(class_index(c))));
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t j = kept; j < idx.size(); ++j) keep[idx[j]] = 0;
  }
  Manifest out = manifest;
  out.samples.clear();
  for (std::size_t i = 0; i < manifest.samples.size(); ++i)
    if (keep[i]) out.samples.push_back(manifest.samples[i]);
  return out;
}

}  // namespace inspectlab::corpus
