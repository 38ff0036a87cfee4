#include <cstdio>

#include "inspectlab/core/error.hpp"
#include "inspectlab/core/rng.hpp"
#include "inspectlab/generative.hpp"

namespace inspectlab::generative {

corpus::Manifest gan_oversample(const corpus::Manifest& train, const std::map<LabelClass, GeneratorCheckpoint>& generators,
                                std::uint64_t seed, const std::filesystem::path& run_dir) {
  const auto counts = train.class_counts();
  int majority = 0;
  for (const auto& [label, n] : counts) majority = std::max(majority, n);
  corpus::Manifest out = train;
  for (const auto& [label, n] : counts) {
    const int need = majority - n;
    if (need <= 0) continue;
    auto it = generators.find(label);
    if (it == generators.end())
      fail(ErrorKind::invalid_argument,
           "gan_oversample: no generator checkpoint for class " + std::string(corpus::to_string(label)));
    const std::uint64_t class_seed = derive_seed(seed, corpus::to_string(label));
    const auto images = sample(it->second, static_cast<std::size_t>(need), class_seed);
    const auto dir = std::filesystem::absolute(run_dir / "synthetic" / std::string(corpus::to_string(label)));
    std::filesystem::create_directories(dir);
    for (int i = 0; i < need; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%llu_%05d.png", static_cast<unsigned long long>(seed), i);
      const auto path = dir / name;
      write_png(path, images[static_cast<std::size_t>(i)]);
      corpus::ImageSample s;
      s.id = "gan:" + std::string(corpus::to_string(label)) + ":" + std::to_string(seed) + ":" + std::to_string(i);
      s.path = path.string();
      s.label = label;
      s.provenance = corpus::Provenance::gan_synthetic;
      s.gen_params = {{"generator_iteration", it->second.iteration}, {"sample_seed", class_seed}, {"index", i}};
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace inspectlab::generative
