#ifndef LOOKAHES_KERNELS_HPP
#define LOOKAHES_KERNELS_HPP

// Stationary covariance kernels (isotropic lengthscale), their derivative
// with respect to log-lengthscale (for marginal-likelihood fitting) and with
// respect to the input (for posterior-mean / path gradients).

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "lookahes/core.hpp"

namespace lookahes {

enum class KernelKind { rbf, matern12, matern32, matern52 };

inline const char* kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::matern12: return "matern12";
    case KernelKind::matern32: return "matern32";
    case KernelKind::matern52: return "matern52";
  }
  return "?";
}

struct KernelSpec {
  KernelKind kind = KernelKind::matern52;
  double lengthscale = 0.3;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
};

// k as a function of distance.
inline double kernel_eval_dist(const KernelSpec& s, double dist) {
  const double rho = dist / s.lengthscale;
  switch (s.kind) {
    case KernelKind::rbf:
      return s.signal_variance * std::exp(-0.5 * rho * rho);
    case KernelKind::matern12:
      return s.signal_variance * std::exp(-rho);
    case KernelKind::matern32: {
      const double t = std::sqrt(3.0) * rho;
      return s.signal_variance * (1.0 + t) * std::exp(-t);
    }
    case KernelKind::matern52: {
      const double t = std::sqrt(5.0) * rho;
      return s.signal_variance * (1.0 + t + t * t / 3.0) * std::exp(-t);
    }
  }
  return 0.0;
}

inline double kernel_eval(const KernelSpec& s, const VectorXd& x, const VectorXd& z) {
  if (x.size() != z.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  return kernel_eval_dist(s, (x - z).norm());
}

// dk / d(log lengthscale) at a given distance.
inline double kernel_dlogl_dist(const KernelSpec& s, double dist) {
  const double rho = dist / s.lengthscale;
  switch (s.kind) {
    case KernelKind::rbf:
      return kernel_eval_dist(s, dist) * rho * rho;
    case KernelKind::matern12:
      return s.signal_variance * rho * std::exp(-rho);
    case KernelKind::matern32:
      return 3.0 * s.signal_variance * rho * rho * std::exp(-std::sqrt(3.0) * rho);
    case KernelKind::matern52: {
      const double t = std::sqrt(5.0) * rho;
      return (5.0 / 3.0) * s.signal_variance * rho * rho * (1.0 + t) * std::exp(-t);
    }
  }
  return 0.0;
}

// Scalar factor g(dist) such that grad_x k(x,z) = g(dist) * (x - z).
// matern12 has a kink at x = z where the subgradient 0 is used.
inline double kernel_grad_factor(const KernelSpec& s, double dist) {
  const double l2 = s.lengthscale * s.lengthscale;
  const double rho = dist / s.lengthscale;
  switch (s.kind) {
    case KernelKind::rbf:
      return -kernel_eval_dist(s, dist) / l2;
    case KernelKind::matern12: {
      if (dist == 0.0) return 0.0;
      return -s.signal_variance * std::exp(-rho) / (s.lengthscale * dist);
    }
    case KernelKind::matern32:
      return -3.0 * s.signal_variance * std::exp(-std::sqrt(3.0) * rho) / l2;
    case KernelKind::matern52: {
      const double t = std::sqrt(5.0) * rho;
      return -(5.0 / 3.0) * s.signal_variance * (1.0 + t) * std::exp(-t) / l2;
    }
  }
  return 0.0;
}

// Gradient of k(x, z) with respect to x.
inline VectorXd kernel_grad_x(const KernelSpec& s, const VectorXd& x, const VectorXd& z) {
  if (x.size() != z.size())
    throw std::invalid_argument("kernel_grad_x: dimension mismatch");
  const VectorXd diff = x - z;
  return kernel_grad_factor(s, diff.norm()) * diff;
}

inline KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "matern12") return KernelKind::matern12;
  if (name == "matern32") return KernelKind::matern32;
  if (name == "matern52") return KernelKind::matern52;
  throw std::invalid_argument("unknown kernel kind: " + name);
}

}  // namespace lookahes

#endif  // LOOKAHES_KERNELS_HPP
