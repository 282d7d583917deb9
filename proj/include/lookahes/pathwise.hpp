#ifndef LOOKAHES_PATHWISE_HPP
#define LOOKAHES_PATHWISE_HPP

// Pathwise posterior samples: a random-Fourier-feature prior draw per path
// plus Matheron's update,
//   f^(tau)(x) = mean + f~^(tau)(x) + k(x,X)^T V[tau,:],
//   V[tau,:]   = (K + sn2 I)^{-1} (y - mean - f~^(tau)(X) - e~^(tau)),
// so a horizon-L rollout touches exactly n_paths function samples no matter
// how long the horizon is.  Each path is a fixed differentiable function once
// the batch is constructed.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lookahes/rng.hpp"
#include "lookahes/surrogate.hpp"

namespace lookahes {

// Instrumentation: total prior function samples drawn by sample_paths since
// the last reset.  Used to assert the constant-in-horizon trajectory count.
inline std::atomic<std::uint64_t>& path_draw_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}
inline void reset_path_draw_count() { path_draw_counter().store(0); }
inline std::uint64_t path_draw_count() { return path_draw_counter().load(); }

struct PathBatch {
  int n_paths = 0;
  int n_features = 0;
  MatrixXd freqs;     // M x dim spectral frequencies
  VectorXd phases;    // M, in [0, 2pi)
  MatrixXd prior_w;   // r x M standard-normal weights
  MatrixXd matheron;  // r x n correction coefficients V
  GpModel gp;         // conditioning model (immutable copy)
  double amplitude = 0.0;  // sqrt(2 sf2 / M)

  // Which paths a consumer evaluated; lets tests assert that a rollout uses
  // every restart's path exactly (and nothing else).
  mutable std::vector<char> touched;

  int dim() const { return static_cast<int>(freqs.cols()); }
};

// Draw spectral frequencies for the GP's kernel.  RBF: omega ~ N(0, I/l^2).
// Matern-nu: omega = z * sqrt(2 nu / u) / l with u ~ chi^2(2 nu) shared
// across the coordinates of one feature (multivariate-t spectral density).
namespace pathwise_detail {

inline MatrixXd draw_frequencies(const KernelSpec& spec, int n_features, int dim,
                                 SeedStream& stream) {
  MatrixXd omega(n_features, dim);
  double nu2 = 0.0;  // 2*nu
  switch (spec.kind) {
    case KernelKind::rbf: nu2 = 0.0; break;
    case KernelKind::matern12: nu2 = 1.0; break;
    case KernelKind::matern32: nu2 = 3.0; break;
    case KernelKind::matern52: nu2 = 5.0; break;
  }
  for (int i = 0; i < n_features; ++i) {
    for (int d = 0; d < dim; ++d) omega(i, d) = stream.normal();
    double scale = 1.0 / spec.lengthscale;
    if (nu2 > 0.0) {
      const double u = stream.chi_square(static_cast<int>(nu2));
      scale *= std::sqrt(nu2 / u);
    }
    omega.row(i) *= scale;
  }
  return omega;
}

}  // namespace pathwise_detail

inline PathBatch sample_paths(const GpModel& gp, int n_paths, int n_features,
                              SeedStream stream) {
  if (n_paths < 1 || n_features < 1)
    throw std::invalid_argument("sample_paths: counts must be positive");
  PathBatch batch;
  batch.n_paths = n_paths;
  batch.n_features = n_features;
  batch.gp = gp;
  batch.amplitude = std::sqrt(2.0 * gp.kernel.signal_variance /
                              static_cast<double>(n_features));
  batch.touched.assign(n_paths, 0);

  const int dim = gp.dim();
  const Eigen::Index n = gp.n();

  SeedStream rff = stream.fork(streams::rff);
  batch.freqs = pathwise_detail::draw_frequencies(gp.kernel, n_features, dim, rff);
  batch.phases.resize(n_features);
  for (int i = 0; i < n_features; ++i) batch.phases[i] = 2.0 * M_PI * rff.uniform();

  SeedStream wstream = stream.fork(streams::prior_w);
  batch.prior_w.resize(n_paths, n_features);
  for (int t = 0; t < n_paths; ++t)
    for (int i = 0; i < n_features; ++i) batch.prior_w(t, i) = wstream.normal();

  // Prior values at the training inputs: Phi(i,j) = amp*cos(omega_i.x_j + b_i).
  MatrixXd phi = (batch.freqs * gp.train_x).colwise() + batch.phases;
  phi = batch.amplitude * phi.array().cos().matrix();
  const MatrixXd prior_at_train = batch.prior_w * phi;  // r x n

  SeedStream noise = stream.fork(streams::matheron_noise);
  MatrixXd rhs(n, n_paths);  // column per path: y_c - prior - noise
  const double sn = std::sqrt(gp.kernel.noise_variance);
  for (int t = 0; t < n_paths; ++t) {
    VectorXd eps(n);
    for (Eigen::Index j = 0; j < n; ++j) eps[j] = sn * noise.normal();
    rhs.col(t) = gp.train_y - prior_at_train.row(t).transpose() - eps;
  }
  gp.chol.triangularView<Eigen::Lower>().solveInPlace(rhs);
  gp.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
  batch.matheron = rhs.transpose();  // r x n

  path_draw_counter().fetch_add(static_cast<std::uint64_t>(n_paths));
  return batch;
}

inline void check_path_index(const PathBatch& batch, int tau) {
  if (tau < 0 || tau >= batch.n_paths)
    throw std::out_of_range("path index " + std::to_string(tau) +
                            " out of range [0, " + std::to_string(batch.n_paths) + ")");
}

inline double eval_path(const PathBatch& batch, int tau, const VectorXd& x) {
  check_path_index(batch, tau);
  batch.touched[tau] = 1;
  const VectorXd arg = batch.freqs * x + batch.phases;
  const double prior =
      batch.amplitude * batch.prior_w.row(tau).dot(arg.array().cos().matrix());
  double corr = 0.0;
  for (Eigen::Index j = 0; j < batch.gp.n(); ++j)
    corr += batch.matheron(tau, j) *
            kernel_eval(batch.gp.kernel, x, batch.gp.train_x.col(j));
  return batch.gp.mean_const + prior + corr;
}

// Exact analytic gradient of f^(tau) at x.
inline VectorXd path_gradient(const PathBatch& batch, int tau, const VectorXd& x) {
  check_path_index(batch, tau);
  const VectorXd arg = batch.freqs * x + batch.phases;
  const VectorXd wsin =
      batch.prior_w.row(tau).transpose().cwiseProduct(arg.array().sin().matrix());
  VectorXd g = -batch.amplitude * (batch.freqs.transpose() * wsin);
  for (Eigen::Index j = 0; j < batch.gp.n(); ++j)
    g += batch.matheron(tau, j) *
         kernel_grad_x(batch.gp.kernel, x, batch.gp.train_x.col(j));
  return g;
}

// Batched forward/backward used by the rollout tape: column b of X is
// evaluated on path path_of_col[b].  Returns values and caches enough state
// for the exact backward pass (done by the caller through path_gradient, or
// via the cached trig terms here).
struct PathEvalWorkspace {
  MatrixXd arg;   // M x B feature arguments (for the backward sin pass)
  MatrixXd cosA;  // M x B
  MatrixXd dist;  // n x B distances to training points
  MatrixXd kmat;  // n x B kernel values
};

inline void eval_paths_batched(const PathBatch& batch, const MatrixXd& X,
                               const std::vector<int>& path_of_col,
                               Eigen::RowVectorXd& y, PathEvalWorkspace& ws) {
  const Eigen::Index B = X.cols();
  const Eigen::Index n = batch.gp.n();
  ws.arg.noalias() = batch.freqs * X;
  ws.arg.colwise() += batch.phases;
  ws.cosA = ws.arg.array().cos();
  ws.dist.resize(n, B);
  ws.kmat.resize(n, B);
  y.resize(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const int tau = path_of_col[static_cast<std::size_t>(b)];
    check_path_index(batch, tau);
    batch.touched[tau] = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (X.col(b) - batch.gp.train_x.col(j)).norm();
      ws.dist(j, b) = d;
      ws.kmat(j, b) = kernel_eval_dist(batch.gp.kernel, d);
    }
    y[b] = batch.gp.mean_const +
           batch.amplitude * batch.prior_w.row(tau).dot(ws.cosA.col(b)) +
           batch.matheron.row(tau).dot(ws.kmat.col(b));
  }
}

}  // namespace lookahes

#endif  // LOOKAHES_PATHWISE_HPP
