#ifndef LOOKAHES_SURROGATE_HPP
#define LOOKAHES_SURROGATE_HPP

// Exact Gaussian-process surrogate: marginal-likelihood hyperparameter
// fitting (Adam on log-parameters) and closed-form posterior.  This module is
// the oracle that pathwise samples are validated against.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/kernels.hpp"
#include "lookahes/rng.hpp"

namespace lookahes {

struct FitConfig {
  int adam_steps = 200;
  double lr = 0.05;
  double init_lengthscale = 0.3;
  double init_signal_variance = 1.0;
  double init_noise_variance = 1e-2;
  bool fit_noise = true;
  // Stability rails for the unconstrained log-parameters.
  double min_noise_variance = 1e-6;
  double min_lengthscale = 1e-3, max_lengthscale = 1e3;
  double min_signal_variance = 1e-6, max_signal_variance = 1e4;
};

struct GpModel {
  KernelSpec kernel;
  MatrixXd train_x;    // dim x n
  VectorXd train_y;    // centered observations (y - mean_const)
  double mean_const = 0.0;
  MatrixXd chol;       // lower factor of K + (noise + jitter) I
  VectorXd alpha;      // (K + noise I)^{-1} train_y
  double jitter = 0.0; // jitter actually used by the factorization

  int dim() const { return static_cast<int>(train_x.rows()); }
  int n() const { return static_cast<int>(train_x.cols()); }
};

namespace gp_detail {

// Pairwise distance matrix of columns.
inline MatrixXd distance_matrix(const MatrixXd& X) {
  const Eigen::Index n = X.cols();
  MatrixXd D(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    D(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (X.col(i) - X.col(j)).norm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

inline MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& D) {
  return D.unaryExpr([&](double d) { return kernel_eval_dist(spec, d); });
}

// Cholesky with jitter escalation 1e-8 -> 1e-6 -> 1e-4.  Throws with
// diagnostics if the ladder is exhausted.
inline std::pair<MatrixXd, double> robust_cholesky(const MatrixXd& A) {
  for (double jitter : {1e-8, 1e-6, 1e-4}) {
    MatrixXd Aj = A;
    Aj.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(Aj);
    if (llt.info() == Eigen::Success) return {MatrixXd(llt.matrixL()), jitter};
  }
  throw std::runtime_error(
      "robust_cholesky: matrix not positive definite after jitter escalation "
      "to 1e-4 (n = " + std::to_string(A.rows()) + ")");
}

}  // namespace gp_detail

// Log marginal likelihood of centered observations under spec, and its
// gradient with respect to (log l, log sf2, log sn2):
//   L = -1/2 y^T a - 1/2 log|K~| - n/2 log 2pi,   a = K~^{-1} y
//   dL/dtheta = 1/2 tr((a a^T - K~^{-1}) dK~/dtheta).
inline double log_marginal(const MatrixXd& X, const VectorXd& y_centered,
                           const KernelSpec& spec) {
  const MatrixXd D = gp_detail::distance_matrix(X);
  MatrixXd K = gp_detail::kernel_matrix(spec, D);
  K.diagonal().array() += spec.noise_variance;
  auto [L, jitter] = gp_detail::robust_cholesky(K);
  const VectorXd a = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(y_centered));
  const double n = static_cast<double>(X.cols());
  return -0.5 * y_centered.dot(a) - L.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * M_PI);
}

namespace gp_detail {

inline Eigen::Vector3d log_marginal_grad_from_dist(const MatrixXd& D,
                                                   const VectorXd& y_centered,
                                                   const KernelSpec& spec) {
  const Eigen::Index n = D.cols();
  const MatrixXd Knoiseless = gp_detail::kernel_matrix(spec, D);
  MatrixXd K = Knoiseless;
  K.diagonal().array() += spec.noise_variance;
  auto [L, jitter] = gp_detail::robust_cholesky(K);
  const VectorXd a = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(y_centered));
  // K~^{-1} via triangular solves against the identity.
  MatrixXd Kinv = MatrixXd::Identity(n, n);
  L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(Kinv);
  const MatrixXd G = a * a.transpose() - Kinv;
  const MatrixXd dK_dlogl =
      D.unaryExpr([&](double d) { return kernel_dlogl_dist(spec, d); });
  Eigen::Vector3d grad;
  grad[0] = 0.5 * (G.array() * dK_dlogl.array()).sum();
  grad[1] = 0.5 * (G.array() * Knoiseless.array()).sum();
  grad[2] = 0.5 * spec.noise_variance * G.trace();
  return grad;
}

}  // namespace gp_detail

inline Eigen::Vector3d log_marginal_grad(const MatrixXd& X, const VectorXd& y_centered,
                                         const KernelSpec& spec) {
  return gp_detail::log_marginal_grad_from_dist(gp_detail::distance_matrix(X),
                                                y_centered, spec);
}

// Build the factorized model for fixed hyperparameters.
inline GpModel condition_gp(const KernelSpec& spec, double mean_const,
                            const MatrixXd& X, const VectorXd& y_raw) {
  if (X.cols() != y_raw.size())
    throw std::invalid_argument("condition_gp: X/y size mismatch");
  GpModel gp;
  gp.kernel = spec;
  gp.train_x = X;
  gp.mean_const = mean_const;
  gp.train_y = y_raw.array() - mean_const;
  const MatrixXd D = gp_detail::distance_matrix(X);
  MatrixXd K = gp_detail::kernel_matrix(spec, D);
  K.diagonal().array() += spec.noise_variance;
  auto [L, jitter] = gp_detail::robust_cholesky(K);
  gp.chol = L;
  gp.jitter = jitter;
  gp.alpha = L.transpose().triangularView<Eigen::Upper>().solve(
      L.triangularView<Eigen::Lower>().solve(gp.train_y));
  return gp;
}

// Maximum-marginal-likelihood fit: Adam ascent on (log l, log sf2, log sn2)
// from fixed inits, constant mean pinned to the sample mean.  Deterministic
// for identical data (the stream parameter is reserved for multi-start
// extensions and currently unused).
inline GpModel fit_gp(const Dataset& data, KernelKind kind,
                      const FitConfig& cfg = FitConfig(),
                      SeedStream stream = SeedStream(0)) {
  (void)stream;
  if (data.size() < 2)
    throw std::invalid_argument("fit_gp: need at least 2 observations");
  const MatrixXd X = data.points_matrix();
  const VectorXd y = data.observations_vector();
  const double mean_const = y.mean();
  const VectorXd yc = y.array() - mean_const;

  const MatrixXd D = gp_detail::distance_matrix(X);
  Eigen::Vector3d theta(std::log(cfg.init_lengthscale),
                        std::log(cfg.init_signal_variance),
                        std::log(cfg.init_noise_variance));
  const Eigen::Vector3d lo(std::log(cfg.min_lengthscale),
                           std::log(cfg.min_signal_variance),
                           std::log(cfg.min_noise_variance));
  const Eigen::Vector3d hi(std::log(cfg.max_lengthscale),
                           std::log(cfg.max_signal_variance),
                           std::log(1e2));

  Eigen::Vector3d m = Eigen::Vector3d::Zero(), v = Eigen::Vector3d::Zero();
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  KernelSpec spec;
  spec.kind = kind;
  for (int step = 1; step <= cfg.adam_steps; ++step) {
    spec.lengthscale = std::exp(theta[0]);
    spec.signal_variance = std::exp(theta[1]);
    spec.noise_variance = std::exp(theta[2]);
    Eigen::Vector3d g = gp_detail::log_marginal_grad_from_dist(D, yc, spec);
    if (!cfg.fit_noise) g[2] = 0.0;
    // Ascent: Adam on the negated objective.
    m = b1 * m + (1.0 - b1) * (-g);
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(b1, step);
    const double bc2 = 1.0 - std::pow(b2, step);
    for (int i = 0; i < 3; ++i) {
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + eps);
      theta[i] = std::min(std::max(theta[i], lo[i]), hi[i]);
    }
  }
  spec.lengthscale = std::exp(theta[0]);
  spec.signal_variance = std::exp(theta[1]);
  spec.noise_variance = std::exp(theta[2]);
  return condition_gp(spec, mean_const, X, y);
}

// Exact posterior mean/variance of the latent function at x.
inline std::pair<double, double> posterior(const GpModel& gp, const VectorXd& x) {
  const Eigen::Index n = gp.train_x.cols();
  VectorXd kvec(n);
  for (Eigen::Index j = 0; j < n; ++j)
    kvec[j] = kernel_eval(gp.kernel, x, gp.train_x.col(j));
  const double mean = gp.mean_const + kvec.dot(gp.alpha);
  const VectorXd w = gp.chol.triangularView<Eigen::Lower>().solve(kvec);
  const double var = kernel_eval(gp.kernel, x, x) - w.squaredNorm();
  return {mean, std::max(var, 0.0)};
}

// Posterior covariance between two points.
inline double posterior_cov(const GpModel& gp, const VectorXd& x, const VectorXd& z) {
  const Eigen::Index n = gp.train_x.cols();
  VectorXd kx(n), kz(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    kx[j] = kernel_eval(gp.kernel, x, gp.train_x.col(j));
    kz[j] = kernel_eval(gp.kernel, z, gp.train_x.col(j));
  }
  const VectorXd wx = gp.chol.triangularView<Eigen::Lower>().solve(kx);
  const VectorXd wz = gp.chol.triangularView<Eigen::Lower>().solve(kz);
  return kernel_eval(gp.kernel, x, z) - wx.dot(wz);
}

// Gradient of the posterior mean with respect to x.
inline VectorXd posterior_mean_grad(const GpModel& gp, const VectorXd& x) {
  const Eigen::Index n = gp.train_x.cols();
  VectorXd g = VectorXd::Zero(x.size());
  for (Eigen::Index j = 0; j < n; ++j)
    g += gp.alpha[j] * kernel_grad_x(gp.kernel, x, gp.train_x.col(j));
  return g;
}

// Gradient of (mean, std) with respect to x; std gradient is 0 where the
// variance collapses.
inline std::pair<VectorXd, VectorXd> posterior_grads(const GpModel& gp,
                                                     const VectorXd& x) {
  const Eigen::Index n = gp.train_x.cols();
  VectorXd kvec(n);
  MatrixXd dk(x.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    kvec[j] = kernel_eval(gp.kernel, x, gp.train_x.col(j));
    dk.col(j) = kernel_grad_x(gp.kernel, x, gp.train_x.col(j));
  }
  const VectorXd dmean = dk * gp.alpha;
  const VectorXd w = gp.chol.triangularView<Eigen::Lower>().solve(kvec);
  const double var = std::max(kernel_eval(gp.kernel, x, x) - w.squaredNorm(), 0.0);
  VectorXd dstd = VectorXd::Zero(x.size());
  if (var > 1e-12) {
    // d var/dx = -2 dk/dx K~^{-1} k  (k(x,x) is constant for stationary kernels)
    const VectorXd kinv_k = gp.chol.transpose().triangularView<Eigen::Upper>().solve(w);
    dstd = -(dk * kinv_k) / std::sqrt(var);
  }
  return {dmean, dstd};
}

}  // namespace lookahes

#endif  // LOOKAHES_SURROGATE_HPP
