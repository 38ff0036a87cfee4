#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "helpers.hpp"
#include "inspectlab/core/error.hpp"
#include "inspectlab/generative.hpp"

using namespace inspectlab;
using namespace inspectlab::generative;
using corpus::LabelClass;

namespace {

Eigen::MatrixXd random_spd(int d, std::mt19937& g) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(d, d + 2);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = n(g);
  return a * a.transpose() / (d + 2) + 0.05 * Eigen::MatrixXd::Identity(d, d);
}

// Tr((Σ₁Σ₂)^½) from the eigenvalues of the non-symmetric product, which are real and non-negative.
double fid_via_product_eigenvalues(const Eigen::VectorXd& m1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& m2,
                                   const Eigen::MatrixXd& s2) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(s1 * s2);
  double tr = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()[i].real()));
  return (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2 * tr;
}

std::vector<GrayImage> class_images(LabelClass label, int n, int size = 32) {
  auto spec = testutil::small_spec(0, 0, 0, size);
  spec.counts[label] = n;
  std::vector<GrayImage> out;
  std::size_t base = 0;
  for (auto c : corpus::kAllClasses) {
    if (c == label) break;
    base += spec.counts[c];
  }
  for (int i = 0; i < n; ++i) out.push_back(corpus::render(corpus::draw_render_params(spec, base + i, label)));
  return out;
}

GanConfig tiny_gan(int iterations) {
  GanConfig c;
  c.image_size = 32;
  c.latent_dim = 16;
  c.iterations = iterations;
  c.batch_size = 4;
  c.generator_width = 16;
  c.discriminator_width = 8;
  c.fid_interval = 0;
  c.fid_samples = 16;
  c.seed = 9;
  c.label = LabelClass::double_print;
  return c;
}

}  // namespace

TEST(Fid, IdenticalSetsAreZero) {
  std::mt19937 g(1);
  std::normal_distribution<float> n;
  features::FeatureMatrix m(40, 6);
  for (auto& v : m.values) v = n(g);
  EXPECT_LE(compute_fid(m, m).value, 1e-6);
}

TEST(Fid, DiagonalMomentsMatchClosedForm) {
  std::mt19937 g(2);
  std::uniform_real_distribution<double> u(0.1, 3.0), loc(-2, 2);
  for (int t = 0; t < 50; ++t) {
    const int d = 1 + t % 8;
    Eigen::VectorXd m1(d), m2(d), v1(d), v2(d);
    double expected = 0;
    for (int i = 0; i < d; ++i) {
      m1[i] = loc(g);
      m2[i] = loc(g);
      v1[i] = u(g);
      v2[i] = u(g);
      expected += (m1[i] - m2[i]) * (m1[i] - m2[i]) + v1[i] + v2[i] - 2 * std::sqrt(v1[i] * v2[i]);
    }
    EXPECT_NEAR(fid_from_moments(m1, v1.asDiagonal(), m2, v2.asDiagonal()), expected, 1e-8);
  }
}

TEST(Fid, FullCovarianceMatchesProductEigenvalueRoute) {
  std::mt19937 g(3);
  for (int t = 0; t < 20; ++t) {
    const int d = 2 + t % 7;
    const auto s1 = random_spd(d, g), s2 = random_spd(d, g);
    const Eigen::VectorXd m1 = Eigen::VectorXd::Random(d), m2 = Eigen::VectorXd::Random(d);
    EXPECT_NEAR(fid_from_moments(m1, s1, m2, s2), fid_via_product_eigenvalues(m1, s1, m2, s2), 1e-8);
  }
}

TEST(Fid, SingularCovarianceStaysFinite) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
  s(0, 0) = 1;
  const Eigen::VectorXd m = Eigen::VectorXd::Zero(3);
  const double f = fid_from_moments(m, s, m, s);
  EXPECT_TRUE(std::isfinite(f));
  EXPECT_NEAR(f, 0.0, 1e-9);
}

TEST(Gan, TrainsWithFiniteLossesAndRecordsFid) {
  const auto images = class_images(LabelClass::double_print, 20);
  const auto ck = train_gan(images, tiny_gan(6));
  EXPECT_EQ(ck.iteration, 6);
  ASSERT_EQ(ck.log.size(), 6u);
  for (const auto& s : ck.log) {
    EXPECT_TRUE(std::isfinite(s.d_loss));
    EXPECT_TRUE(std::isfinite(s.g_loss));
  }
  ASSERT_GE(ck.fid_history.size(), 2u);
  EXPECT_EQ(ck.fid_history.back().first, 6);
}

TEST(Gan, ResumeReproducesUninterruptedRun) {
  const auto images = class_images(LabelClass::double_print, 20);
  const auto full = train_gan(images, tiny_gan(8));
  auto half_cfg = tiny_gan(8);
  half_cfg.iterations = 4;
  auto half = train_gan(images, half_cfg);
  half.config.iterations = 8;
  const auto resumed = train_gan(images, tiny_gan(8), &half);
  EXPECT_EQ(resumed.generator, full.generator);
  EXPECT_EQ(resumed.discriminator, full.discriminator);
}

TEST(Gan, CheckpointRoundTripAndSampleDeterminism) {
  testutil::TempDir dir("gan");
  const auto ck = train_gan(class_images(LabelClass::interrupted_print, 20), tiny_gan(3));
  save_checkpoint(ck, dir / "g.lgan");
  const auto back = load_checkpoint(dir / "g.lgan");
  EXPECT_EQ(back.iteration, ck.iteration);
  EXPECT_EQ(back.fid_history, ck.fid_history);
  const auto a = sample(ck, 5, 42), b = sample(back, 5, 42), prefix = sample(ck, 2, 42), other = sample(ck, 5, 43);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], prefix[0]);
  EXPECT_EQ(a[1], prefix[1]);
  EXPECT_NE(a[0], other[0]);
  for (const auto& im : a) EXPECT_EQ(im.width, 32);
  write_text(dir / "bad.lgan", "XXXXX");
  EXPECT_THROW(load_checkpoint(dir / "bad.lgan"), Error);
}

TEST(Gan, ConfigValidation) {
  auto c = tiny_gan(1);
  c.image_size = 48;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_gan(1);
  EXPECT_EQ(to_json(gan_config_from_json(to_json(c))), to_json(c));
  EXPECT_THROW(train_gan(class_images(LabelClass::good, 1), tiny_gan(1)), Error);
}

TEST(GanOversample, FillsMinorityClassesToMajority) {
  testutil::TempDir dir("gan_os");
  const auto m = corpus::generate_corpus(testutil::small_spec(9, 4, 3), dir / "corpus");
  std::map<LabelClass, GeneratorCheckpoint> gens;
  gens[LabelClass::double_print] = train_gan(class_images(LabelClass::double_print, 20), tiny_gan(2));
  auto ip_cfg = tiny_gan(2);
  ip_cfg.label = LabelClass::interrupted_print;
  gens[LabelClass::interrupted_print] = train_gan(class_images(LabelClass::interrupted_print, 20), ip_cfg);
  const auto out = gan_oversample(m, gens, 5, dir / "run");
  const auto c = out.class_counts();
  EXPECT_EQ(c.at(LabelClass::good), 9);
  EXPECT_EQ(c.at(LabelClass::double_print), 9);
  EXPECT_EQ(c.at(LabelClass::interrupted_print), 9);
  std::size_t synthetic = 0;
  for (const auto& s : out.samples) {
    if (s.provenance != corpus::Provenance::gan_synthetic) continue;
    ++synthetic;
    EXPECT_TRUE(std::filesystem::exists(out.image_path(s))) << s.id;
  }
  EXPECT_EQ(synthetic, 11u);
  gens.erase(LabelClass::interrupted_print);
  EXPECT_THROW(gan_oversample(m, gens, 5, dir / "run2"), Error);
}
