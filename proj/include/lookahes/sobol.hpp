#ifndef LOOKAHES_SOBOL_HPP
#define LOOKAHES_SOBOL_HPP

// Sobol low-discrepancy sequences (up to 64 dimensions) with optional
// digital-shift scrambling, plus the inverse normal CDF used to push Sobol
// points through N(0,1) for quasi-Monte-Carlo estimators.
//
// Direction numbers: dimension 1 is the van der Corput sequence in base 2
// (m_i = 1).  Higher dimensions use primitive polynomials over GF(2), found
// at startup by exhaustive search in increasing encoding order (degrees
// <= 9 cover 64 dimensions), with initial m_i drawn odd (< 2^i) from a fixed
// internal Philox stream and extended by the standard recurrence.  The
// construction keeps every m_i odd, which is what the dyadic
// equidistribution property requires.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/rng.hpp"

namespace lookahes {

namespace sobol_detail {

constexpr int kMaxDims = 64;
constexpr int kBits = 63;  // direction integers use bits 63..1 of a u64

inline int poly_degree(std::uint32_t p) {
  int d = -1;
  while (p) {
    ++d;
    p >>= 1;
  }
  return d;
}

// Multiplication and reduction in GF(2)[x], encodings as bit masks.
inline std::uint64_t poly_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  while (b) {
    if (b & 1) r ^= a;
    a <<= 1;
    b >>= 1;
  }
  return r;
}

inline std::uint64_t poly_mod(std::uint64_t a, std::uint32_t p) {
  const int dp = poly_degree(p);
  int da = 63;
  while (da >= dp) {
    if (a >> da & 1) a ^= static_cast<std::uint64_t>(p) << (da - dp);
    --da;
  }
  return a;
}

// x^e mod p by square-and-multiply.
inline std::uint64_t poly_pow_x(std::uint64_t e, std::uint32_t p) {
  std::uint64_t result = 1, base = 2;  // "x"
  while (e) {
    if (e & 1) result = poly_mod(poly_mul(result, base), p);
    base = poly_mod(poly_mul(base, base), p);
    e >>= 1;
  }
  return result;
}

// p (constant term 1, degree d) is primitive iff ord(x) = 2^d - 1 in
// GF(2)[x]/(p): the order can only reach 2^d - 1 when the quotient is a
// field, so a single multiplicative-order test covers both irreducibility
// and primitivity.
inline bool is_primitive(std::uint32_t p) {
  const int d = poly_degree(p);
  const std::uint64_t r = (1ULL << d) - 1;
  if (poly_pow_x(r, p) != 1) return false;
  std::uint64_t n = r;
  for (std::uint64_t q = 2; q * q <= n; ++q) {
    if (n % q == 0) {
      if (poly_pow_x(r / q, p) == 1) return false;
      while (n % q == 0) n /= q;
    }
  }
  if (n > 1 && n < r && poly_pow_x(r / n, p) == 1) return false;
  return true;
}

// Direction integers v[k] (k = 0..kBits-1), each with bit (63-k) as leading
// bit, for one dimension.
struct DirectionNumbers {
  std::uint64_t v[kBits];
};

inline const std::vector<DirectionNumbers>& direction_table() {
  static const std::vector<DirectionNumbers> table = [] {
    std::vector<DirectionNumbers> t(kMaxDims);
    // Dimension 1: van der Corput, m_i = 1.
    for (int k = 0; k < kBits; ++k) t[0].v[k] = 1ULL << (63 - k);
    // Dimensions 2..: primitive polynomials in increasing encoding order.
    std::vector<std::uint32_t> polys;
    for (std::uint32_t p = 3; static_cast<int>(polys.size()) < kMaxDims - 1; ++p) {
      if ((p & 1) && poly_degree(p) >= 1 && is_primitive(p)) polys.push_back(p);
    }
    for (int dim = 1; dim < kMaxDims; ++dim) {
      const std::uint32_t p = polys[dim - 1];
      const int s = poly_degree(p);
      std::uint64_t m[kBits + 1];
      SeedStream init(0x536F626FULL, static_cast<std::uint64_t>(dim));
      for (int i = 1; i <= s && i <= kBits; ++i) {
        const std::uint64_t half = 1ULL << (i - 1);
        m[i] = 2 * (init.next_u64() % half) + 1;  // odd, < 2^i
      }
      for (int k = s + 1; k <= kBits; ++k) {
        std::uint64_t mk = m[k - s] ^ (m[k - s] << s);
        for (int j = 1; j < s; ++j) {
          if (p >> (s - j) & 1) mk ^= m[k - j] << j;
        }
        m[k] = mk;
      }
      for (int k = 1; k <= kBits; ++k) t[dim].v[k - 1] = m[k] << (64 - k);
    }
    return t;
  }();
  return table;
}

}  // namespace sobol_detail

// Gray-code Sobol generator.  Index 0 yields the all-zeros point before any
// digital shift; a shift XORs a fixed random word into every output.
class SobolSequence {
 public:
  explicit SobolSequence(int dim) : dim_(dim) {
    if (dim < 1 || dim > sobol_detail::kMaxDims)
      throw std::invalid_argument("SobolSequence: dim must be in [1, 64]");
    state_.assign(dim, 0);
    shift_.assign(dim, 0);
  }

  SobolSequence(int dim, SeedStream stream) : SobolSequence(dim) {
    for (int j = 0; j < dim_; ++j) shift_[j] = stream.next_u64();
  }

  VectorXd next() {
    VectorXd x(dim_);
    if (index_ > 0) {
      const std::uint64_t i = index_;
      int c = 0;
      while (!(i >> c & 1)) ++c;  // Gray-code step: XOR v[ctz(i)]
      const auto& table = sobol_detail::direction_table();
      for (int j = 0; j < dim_; ++j) state_[j] ^= table[j].v[c];
    }
    for (int j = 0; j < dim_; ++j)
      x[j] = static_cast<double>((state_[j] ^ shift_[j]) >> 11) * 0x1.0p-53;
    ++index_;
    return x;
  }

 private:
  int dim_;
  std::uint64_t index_ = 0;
  std::vector<std::uint64_t> state_;
  std::vector<std::uint64_t> shift_;
};

// First n scrambled Sobol points (digital shift drawn from `stream`).
inline std::vector<VectorXd> sobol_points(int dim, int n, SeedStream stream) {
  SobolSequence seq(dim, stream);
  std::vector<VectorXd> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back(seq.next());
  return pts;
}

inline std::vector<VectorXd> sobol_points_unscrambled(int dim, int n) {
  SobolSequence seq(dim);
  std::vector<VectorXd> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back(seq.next());
  return pts;
}

// Inverse standard normal CDF: Acklam's rational approximation polished by
// two Halley steps against erfc, giving ~1e-14 absolute accuracy on (0,1).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: p must be in (0,1)");
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int iter = 0; iter < 2; ++iter) {
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

// n x dim matrix of N(0,1) draws from a scrambled Sobol base (row per point).
inline MatrixXd sobol_normal(int dim, int n, SeedStream stream) {
  SobolSequence seq(dim, stream);
  MatrixXd z(n, dim);
  for (int i = 0; i < n; ++i) {
    VectorXd u = seq.next();
    for (int j = 0; j < dim; ++j) {
      // Guard the open interval; a digital shift can produce exact zero.
      double p = u[j];
      if (p <= 0.0) p = 0x1.0p-54;
      if (p >= 1.0) p = 1.0 - 0x1.0p-54;
      z(i, j) = inverse_normal_cdf(p);
    }
  }
  return z;
}

}  // namespace lookahes

#endif  // LOOKAHES_SOBOL_HPP
