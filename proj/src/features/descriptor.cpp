#include <algorithm>
#include <cmath>

#include "inspectlab/core/error.hpp"
#include "inspectlab/features.hpp"

namespace inspectlab::features {

namespace {

// Direction vectors of the orientation bin boundaries k·22.5°, k = 1..7.
constexpr double kBoundaryCos[7] = {0.92387953251128674,  0.70710678118654757,  0.38268343236508978, 0.0,
                                    -0.38268343236508978, -0.70710678118654757, -0.92387953251128674};
constexpr double kBoundarySin[7] = {0.38268343236508978, 0.70710678118654757, 0.92387953251128674, 1.0,
                                    0.92387953251128674, 0.70710678118654757, 0.38268343236508978};

// Unsigned orientation bin in [0, 8) without calling atan2.
int orientation_bin(double gx, double gy) {
  if (gy < 0.0 || (gy == 0.0 && gx < 0.0)) {
    gx = -gx;
    gy = -gy;
  }
  int bin = 0;
  for (int k = 0; k < 7; ++k)
    if (kBoundaryCos[k] * gy - kBoundarySin[k] * gx > 0.0) bin = k + 1;
  return bin;
}

struct Plane {
  int w, h;
  std::vector<double> v;
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane box_downsample(const Plane& p, int s) {
  Plane out{std::max(1, p.w / s), std::max(1, p.h / s), {}};
  out.v.assign(static_cast<std::size_t>(out.w) * out.h, 0.0);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double sum = 0.0;
      int n = 0;
      for (int dy = 0; dy < s && y * s + dy < p.h; ++dy)
        for (int dx = 0; dx < s && x * s + dx < p.w; ++dx, ++n) sum += p.at(x * s + dx, y * s + dy);
      out.v[static_cast<std::size_t>(y) * out.w + x] = sum / n;
    }
  return out;
}

double strip_std(const Plane& p, int x0, int x1, int y0, int y1) {
  const int n = (x1 - x0) * (y1 - y0);
  if (n <= 0) return 0.0;
  double sum = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) sum += p.at(x, y);
  const double mean = sum / n;
  double ss = 0.0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double d = p.at(x, y) - mean;
      ss += d * d;
    }
  return std::sqrt(ss / n);
}

}  // namespace

std::vector<float> hermetic_descriptor(const GrayImage& image) {
  require(image.width >= 8 && image.height >= 8, "hermetic_descriptor: image must be at least 8×8");
  const int w = image.width, h = image.height;
  Plane p{w, h, std::vector<double>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) p.v[i] = image.pixels[i] / 255.0;

  std::vector<double> out;
  out.reserve(kEmbeddingDim);

  // 8×8 intensity grid.
  for (int cy = 0; cy < 8; ++cy)
    for (int cx = 0; cx < 8; ++cx) {
      const int x0 = cx * w / 8, x1 = (cx + 1) * w / 8, y0 = cy * h / 8, y1 = (cy + 1) * h / 8;
      double sum = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) sum += p.at(x, y);
      out.push_back(sum / ((x1 - x0) * (y1 - y0)));
    }

  // Oriented gradient histograms at two cell sizes.
  std::vector<double> coarse(4 * 4 * 8, 0.0), fine(8 * 8 * 4, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = p.at(std::min(x + 1, w - 1), y) - p.at(std::max(x - 1, 0), y);
      const double gy = p.at(x, std::min(y + 1, h - 1)) - p.at(x, std::max(y - 1, 0));
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      const int bin = orientation_bin(gx, gy);
      coarse[((y * 4 / h) * 4 + (x * 4 / w)) * 8 + bin] += mag;
      fine[((y * 8 / h) * 8 + (x * 8 / w)) * 4 + bin / 2] += mag;
    }
  const double coarse_area = (w / 4.0) * (h / 4.0), fine_area = (w / 8.0) * (h / 8.0);
  for (double v : coarse) out.push_back(v / coarse_area);
  for (double v : fine) out.push_back(v / fine_area);

  // Horizontal and vertical strip standard deviations at four scales.
  for (int s : {1, 2, 4, 8}) {
    const Plane d = s == 1 ? p : box_downsample(p, s);
    for (int i = 0; i < 8; ++i) out.push_back(strip_std(d, 0, d.w, i * d.h / 8, (i + 1) * d.h / 8));
    for (int i = 0; i < 8; ++i) out.push_back(strip_std(d, i * d.w / 8, (i + 1) * d.w / 8, 0, d.h));
  }

  std::vector<float> result(out.size());
  std::transform(out.begin(), out.end(), result.begin(), [](double v) { return static_cast<float>(v); });
  return result;
}

}  // namespace inspectlab::features
