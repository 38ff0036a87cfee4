#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "inspectlab/core/container.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/features.hpp"
#include "inspectlab/kernels.hpp"

namespace inspectlab::features {

namespace {

struct Activation {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<float> v;
};

struct FoldedConv {
  std::size_t in_c = 0, out_c = 0, kernel = 0, stride = 1, pad = 0;
  std::vector<float> weight;  // out_c × patch
  std::vector<float> bias;

  Activation operator()(const Activation& x, bool relu) const {
    kernels::ConvShape s;
    s.batch = 1;
    s.in_channels = in_c;
    s.in_h = x.h;
    s.in_w = x.w;
    s.out_channels = out_c;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    Activation y{out_c, s.out_h(), s.out_w(), std::vector<float>(out_c * s.out_h() * s.out_w())};
    std::vector<float> col(s.col_size());
    kernels::conv2d_forward(s, x.v.data(), weight.data(), bias.data(), y.v.data(), col.data());
    if (relu)
      for (auto& v : y.v) v = std::max(v, 0.0f);
    return y;
  }
};

struct BasicBlock {
  FoldedConv conv1, conv2;
  bool has_downsample = false;
  FoldedConv downsample;

  Activation operator()(const Activation& x) const {
    Activation y = conv2(conv1(x, true), false);
    const Activation skip = has_downsample ? downsample(x, false) : x;
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = std::max(y.v[i] + skip.v[i], 0.0f);
    return y;
  }
};

Activation max_pool_3x3_s2(const Activation& x) {
  const std::size_t oh = (x.h + 2 - 3) / 2 + 1, ow = (x.w + 2 - 3) / 2 + 1;
  Activation y{x.c, oh, ow, std::vector<float>(x.c * oh * ow)};
  for (std::size_t c = 0; c < x.c; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::size_t py = oy * 2 + ky, px = ox * 2 + kx;
            if (py < 1 || px < 1 || py - 1 >= x.h || px - 1 >= x.w) continue;
            m = std::max(m, x.v[(c * x.h + py - 1) * x.w + px - 1]);
          }
        y.v[(c * oh + oy) * ow + ox] = m;
      }
  return y;
}

using TensorMap = std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<float>>>;

TensorMap read_tensors(std::span<const std::uint8_t> bytes) {
  TensorMap out;
  ByteReader r(bytes);
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u64();
    out[name] = {shape, r.floats()};
  }
  return out;
}

const std::pair<std::vector<std::size_t>, std::vector<float>>& tensor(const TensorMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) fail(ErrorKind::format, "ResNet-18 weights: missing tensor '" + name + "'");
  return it->second;
}

FoldedConv fold(const TensorMap& m, const std::string& conv, const std::string& bn, std::size_t stride,
                std::size_t pad) {
  const auto& [wshape, w] = tensor(m, conv + ".weight");
  if (wshape.size() != 4 || wshape[2] != wshape[3]) fail(ErrorKind::format, conv + ": expected a square 4-D kernel");
  FoldedConv f;
  f.out_c = wshape[0];
  f.in_c = wshape[1];
  f.kernel = wshape[2];
  f.stride = stride;
  f.pad = pad;
  const auto& gamma = tensor(m, bn + ".weight").second;
  const auto& beta = tensor(m, bn + ".bias").second;
  const auto& mean = tensor(m, bn + ".running_mean").second;
  const auto& var = tensor(m, bn + ".running_var").second;
  const std::size_t patch = f.in_c * f.kernel * f.kernel;
  f.weight.resize(w.size());
  f.bias.resize(f.out_c);
  for (std::size_t oc = 0; oc < f.out_c; ++oc) {
    const double scale = gamma[oc] / std::sqrt(static_cast<double>(var[oc]) + 1e-5);
    for (std::size_t p = 0; p < patch; ++p) f.weight[oc * patch + p] = static_cast<float>(w[oc * patch + p] * scale);
    f.bias[oc] = static_cast<float>(beta[oc] - mean[oc] * scale);
  }
  return f;
}

}  // namespace

struct ResNet18::Impl {
  FoldedConv stem;
  std::vector<BasicBlock> blocks;
};

ResNet18::ResNet18(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ResNet18::~ResNet18() = default;
ResNet18::ResNet18(ResNet18&&) noexcept = default;
ResNet18& ResNet18::operator=(ResNet18&&) noexcept = default;

ResNet18 ResNet18::load(const std::filesystem::path& path) {
  const auto c = Container::load(path, "RN18W");
  const auto m = read_tensors(c.get("WGTS"));
  auto impl = std::make_unique<Impl>();
  impl->stem = fold(m, "conv1", "bn1", 2, 3);
  for (int layer = 1; layer <= 4; ++layer) {
    for (int b = 0; b < 2; ++b) {
      const std::string p = "layer" + std::to_string(layer) + "." + std::to_string(b) + ".";
      const std::size_t stride = (layer > 1 && b == 0) ? 2 : 1;
      BasicBlock block;
      block.conv1 = fold(m, p + "conv1", p + "bn1", stride, 1);
      block.conv2 = fold(m, p + "conv2", p + "bn2", 1, 1);
      block.has_downsample = m.count(p + "downsample.0.weight") > 0;
      if (block.has_downsample) block.downsample = fold(m, p + "downsample.0", p + "downsample.1", stride, 0);
      impl->blocks.push_back(std::move(block));
    }
  }
  return ResNet18(std::move(impl));
}

std::vector<float> ResNet18::embed_normalized(std::span<const float> chw, std::size_t height, std::size_t width) const {
  require(chw.size() == 3 * height * width, "ResNet18: expected a 3×H×W input");
  Activation x{3, height, width, std::vector<float>(chw.begin(), chw.end())};
  x = max_pool_3x3_s2(impl_->stem(x, true));
  for (const auto& b : impl_->blocks) x = b(x);
  std::vector<float> pooled(x.c, 0.0f);
  const std::size_t hw = x.h * x.w;
  for (std::size_t c = 0; c < x.c; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += x.v[c * hw + i];
    pooled[c] = static_cast<float>(s / static_cast<double>(hw));
  }
  return pooled;
}

std::vector<float> ResNet18::embed(const GrayImage& image) const {
  const GrayImage resized = resize_bilinear(image, input_size, input_size);
  constexpr float kMean[3] = {0.485f, 0.456f, 0.406f};
  constexpr float kStd[3] = {0.229f, 0.224f, 0.225f};
  const std::size_t hw = resized.size();
  std::vector<float> chw(3 * hw);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i) chw[c * hw + i] = (resized.pixels[i] / 255.0f - kMean[c]) / kStd[c];
  return embed_normalized(chw, static_cast<std::size_t>(input_size), static_cast<std::size_t>(input_size));
}

}  // namespace inspectlab::features
