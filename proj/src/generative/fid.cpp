#include <Eigen/Eigenvalues>

#include "inspectlab/core/error.hpp"
#include "inspectlab/generative.hpp"

namespace inspectlab::generative {

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "fid: eigendecomposition failed");
  const Eigen::VectorXd r = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const features::FeatureMatrix& x, Eigen::VectorXd& mu, Eigen::MatrixXd& sigma) {
  const Eigen::MatrixXd m =
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          x.values.data(), static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols))
          .cast<double>();
  mu = m.colwise().mean().transpose();
  const Eigen::MatrixXd c = m.rowwise() - mu.transpose();
  sigma = (c.transpose() * c) / static_cast<double>(x.rows - 1);
}

}  // namespace

double fid_from_moments(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& sigma2, double ridge) {
  const auto d = mu1.size();
  if (mu2.size() != d || sigma1.rows() != d || sigma1.cols() != d || sigma2.rows() != d || sigma2.cols() != d)
    fail(ErrorKind::invalid_argument, "fid: dimension mismatch");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s1 = sigma1 + ridge * I, s2 = sigma2 + ridge * I;
  const Eigen::MatrixXd r1 = psd_sqrt(s1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r1 * s2 * r1, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) fail(ErrorKind::numerical, "fid: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

FidReport compute_fid(const features::FeatureMatrix& real, const features::FeatureMatrix& synth,
                      features::Backend backend) {
  if (real.cols != synth.cols) fail(ErrorKind::invalid_argument, "compute_fid: feature dimensionality differs");
  if (real.rows < 2 || synth.rows < 2) fail(ErrorKind::invalid_argument, "compute_fid: need at least 2 rows per set");
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd s1, s2;
  moments(real, mu1, s1);
  moments(synth, mu2, s2);
  FidReport r;
  r.value = fid_from_moments(mu1, s1, mu2, s2, kFidRidge);
  r.n_real = real.rows;
  r.n_synth = synth.rows;
  r.embedding_backend = backend;
  return r;
}

}  // namespace inspectlab::generative
