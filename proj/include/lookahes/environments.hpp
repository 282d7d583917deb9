#ifndef LOOKAHES_ENVIRONMENTS_HPP
#define LOOKAHES_ENVIRONMENTS_HPP

// Benchmark environments: standard synthetic test functions (negated where
// they are minimization problems), a frozen GP-sample field, its discretized
// variant, and a grayscale-image field.  Every environment takes normalized
// [0,1]^d inputs and emits values affinely calibrated so the domain optimum
// maps to +3 and the sampled minimum to -3; regret is measured against the
// calibrated optimum.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/sobol.hpp"

namespace lookahes {

struct Environment {
  std::string name;
  BoxDomain box;                 // raw input domain
  int discrete_categories = 0;   // >0: queries live on the cell-center lattice
  std::function<double(const VectorXd&)> raw_eval;  // raw coords, maximized
  double out_scale = 1.0, out_shift = 0.0;
  double optimum_value = 3.0;    // calibrated max over the domain sample
  std::vector<VectorXd> optimum_location;  // normalized, when known
  double noise_sigma = 0.0;

  int dim() const { return box.dim; }
};

// Noiseless calibrated value (the regret oracle).
inline double env_value(const Environment& env, const VectorXd& unit) {
  if (unit.size() != env.box.dim)
    throw std::invalid_argument("env_value: dimension mismatch");
  for (Eigen::Index i = 0; i < unit.size(); ++i)
    if (!(unit[i] >= 0.0 && unit[i] <= 1.0))
      throw std::invalid_argument("env_value: point outside the unit domain");
  const VectorXd raw = denormalize(env.box, unit);
  return env.out_scale * env.raw_eval(raw) + env.out_shift;
}

// Observation: calibrated value plus Gaussian noise when a stream is given.
inline double env_eval(const Environment& env, const VectorXd& unit,
                       SeedStream* noise_stream = nullptr) {
  double v = env_value(env, unit);
  if (noise_stream != nullptr && env.noise_sigma > 0.0)
    v += env.noise_sigma * noise_stream->normal();
  return v;
}

// One-hot-encoded lattice query (discrete environments): decode to the cell
// centers and evaluate the underlying field there.
inline double env_eval_onehot(const Environment& env, const VectorXd& onehot,
                              SeedStream* noise_stream = nullptr) {
  if (env.discrete_categories <= 0)
    throw std::invalid_argument("env_eval_onehot: environment is continuous");
  const int C = env.discrete_categories;
  const int d = env.dim();
  if (onehot.size() != static_cast<Eigen::Index>(d) * C)
    throw std::invalid_argument("env_eval_onehot: one-hot size mismatch");
  VectorXd unit(d);
  for (int i = 0; i < d; ++i) {
    Eigen::Index arg;
    onehot.segment(i * C, C).maxCoeff(&arg);
    unit[i] = (static_cast<double>(arg) + 0.5) / C;
  }
  return env_eval(env, unit, noise_stream);
}

namespace env_detail {

// Affine output calibration from a normalized-coordinate sample; any known
// optima are appended so the domain max maps to +3 exactly.
inline void calibrate(Environment& env, const std::vector<VectorXd>& sample) {
  double fmin = std::numeric_limits<double>::infinity();
  double fmax = -std::numeric_limits<double>::infinity();
  auto see = [&](const VectorXd& unit) {
    const double f = env.raw_eval(denormalize(env.box, unit));
    fmin = std::min(fmin, f);
    fmax = std::max(fmax, f);
  };
  for (const VectorXd& u : sample) see(u);
  for (const VectorXd& u : env.optimum_location) see(u);
  if (!(fmax > fmin)) {  // constant function: map everything to 0
    env.out_scale = 0.0;
    env.out_shift = 0.0;
    env.optimum_value = 0.0;
    return;
  }
  env.out_scale = 6.0 / (fmax - fmin);
  env.out_shift = -3.0 - env.out_scale * fmin;
  env.optimum_value = 3.0;
}

inline std::vector<VectorXd> unit_grid_2d(int per_axis) {
  std::vector<VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(per_axis) * per_axis);
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < per_axis; ++j) {
      VectorXd u(2);
      u << static_cast<double>(i) / (per_axis - 1),
          static_cast<double>(j) / (per_axis - 1);
      pts.push_back(u);
    }
  }
  return pts;
}

// Calibration sample: dense 512^2 grid in 2D, 2^16 scrambled Sobol otherwise;
// calib_n > 0 overrides the sample budget.
inline std::vector<VectorXd> calibration_sample(int dim, int calib_n,
                                                SeedStream stream) {
  if (dim == 2) {
    int per_axis = 512;
    if (calib_n > 0)
      per_axis = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(calib_n))));
    return unit_grid_2d(per_axis);
  }
  const int n = calib_n > 0 ? calib_n : (1 << 16);
  return sobol_points(dim, n, stream.fork(streams::init_design));
}

}  // namespace env_detail

// ---------------------------------------------------------------------------
// Synthetic closed forms.

inline Environment make_synthetic(const std::string& name, int calib_n,
                                  SeedStream stream) {
  Environment env;
  env.name = name;
  auto box = [&](int d, double lo, double hi) {
    env.box.dim = d;
    env.box.lower = VectorXd::Constant(d, lo);
    env.box.upper = VectorXd::Constant(d, hi);
  };
  auto opt_raw = [&](const VectorXd& raw) {
    env.optimum_location.push_back(normalize(env.box, raw));
  };

  if (name.rfind("ackley", 0) == 0) {
    const int d = std::stoi(name.substr(6));
    if (d != 2 && d != 4 && d != 20 && d != 50)
      throw std::invalid_argument("make_synthetic: unsupported " + name);
    box(d, -32.768, 32.768);
    env.raw_eval = [d](const VectorXd& x) {
      const double a = 20.0, b = 0.2, c = 2.0 * M_PI;
      const double s1 = x.squaredNorm() / d;
      const double s2 = x.array().unaryExpr([c](double v) { return std::cos(c * v); }).sum() / d;
      const double f = -a * std::exp(-b * std::sqrt(s1)) - std::exp(s2) + a + M_E;
      return -f;  // minimization form, negated
    };
    opt_raw(VectorXd::Zero(d));
  } else if (name == "alpine") {
    box(2, -10.0, 10.0);
    env.raw_eval = [](const VectorXd& x) {
      double f = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        f += std::abs(x[i] * std::sin(x[i]) + 0.1 * x[i]);
      return -f;
    };
    opt_raw(VectorXd::Zero(2));
  } else if (name == "holdertable") {
    box(2, -10.0, 10.0);
    env.raw_eval = [](const VectorXd& x) {
      const double f = -std::abs(
          std::sin(x[0]) * std::cos(x[1]) *
          std::exp(std::abs(1.0 - x.norm() / M_PI)));
      return -f;
    };
    for (double sx : {1.0, -1.0})
      for (double sy : {1.0, -1.0}) {
        VectorXd o(2);
        o << sx * 8.05502, sy * 9.66459;
        opt_raw(o);
      }
  } else if (name == "levy") {
    box(2, -10.0, 10.0);
    env.raw_eval = [](const VectorXd& x) {
      const Eigen::Index d = x.size();
      auto w = [&](Eigen::Index i) { return 1.0 + (x[i] - 1.0) / 4.0; };
      double f = std::pow(std::sin(M_PI * w(0)), 2);
      for (Eigen::Index i = 0; i + 1 < d; ++i) {
        const double wi = w(i);
        f += (wi - 1.0) * (wi - 1.0) *
             (1.0 + 10.0 * std::pow(std::sin(M_PI * wi + 1.0), 2));
      }
      const double wd = w(d - 1);
      f += (wd - 1.0) * (wd - 1.0) *
           (1.0 + std::pow(std::sin(2.0 * M_PI * wd), 2));
      return -f;
    };
    opt_raw(VectorXd::Ones(2));
  } else if (name == "styblinskitang") {
    box(2, -5.0, 5.0);
    env.raw_eval = [](const VectorXd& x) {
      double f = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x[i];
        f += v * v * v * v - 16.0 * v * v + 5.0 * v;
      }
      return -0.5 * f;
    };
    opt_raw(VectorXd::Constant(2, -2.903534));
  } else if (name == "cosine8") {
    box(8, -1.0, 1.0);
    env.raw_eval = [](const VectorXd& x) {  // maximization form as-is
      double f = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        f += 0.1 * std::cos(5.0 * M_PI * x[i]) - x[i] * x[i];
      return f;
    };
    opt_raw(VectorXd::Zero(8));
  } else if (name == "hartmann6") {
    box(6, 0.0, 1.0);
    env.raw_eval = [](const VectorXd& x) {
      static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
      static const double A[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                     {0.05, 10, 17, 0.1, 8, 14},
                                     {3, 3.5, 1.7, 10, 17, 8},
                                     {17, 8, 0.05, 10, 0.1, 14}};
      static const double P[4][6] = {
          {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
          {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
          {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
          {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
      double f = 0.0;
      for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (int j = 0; j < 6; ++j)
          inner += A[i][j] * (x[j] - P[i][j]) * (x[j] - P[i][j]);
        f -= alpha[i] * std::exp(-inner);
      }
      return -f;
    };
    VectorXd o(6);
    o << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573;
    opt_raw(o);
  } else {
    throw std::invalid_argument("make_synthetic: unknown environment " + name);
  }

  env_detail::calibrate(env,
                        env_detail::calibration_sample(env.box.dim, calib_n, stream));
  return env;
}

// ---------------------------------------------------------------------------
// Frozen GP-sample field (random Fourier feature prior draw, RBF kernel).

inline Environment make_syngp(double lengthscale, double signal_var,
                              SeedStream stream) {
  struct Field {
    MatrixXd freqs;   // M x 2
    VectorXd phases;  // M
    VectorXd w;       // M
    double amp;
  };
  auto field = std::make_shared<Field>();
  const int M = 2048;
  SeedStream fs = stream.fork(streams::rff);
  field->freqs.resize(M, 2);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < 2; ++j) field->freqs(i, j) = fs.normal() / lengthscale;
  field->phases.resize(M);
  for (int i = 0; i < M; ++i) field->phases[i] = fs.uniform(0.0, 2.0 * M_PI);
  SeedStream wstream = stream.fork(streams::prior_w);
  field->w.resize(M);
  for (int i = 0; i < M; ++i) field->w[i] = wstream.normal();
  field->amp = std::sqrt(2.0 * signal_var / M);

  Environment env;
  env.name = "syngp";
  env.box = BoxDomain::cube(2, 0.0, 1.0);
  env.raw_eval = [field](const VectorXd& x) {
    const VectorXd arg = field->freqs * x + field->phases;
    return field->amp * field->w.dot(arg.array().cos().matrix());
  };

  // No closed-form optimum: calibrate on the dense grid and remember its
  // argmax as the (approximate) optimum location.
  auto grid = env_detail::unit_grid_2d(512);
  double best = -std::numeric_limits<double>::infinity();
  VectorXd arg = grid.front();
  for (const VectorXd& u : grid) {
    const double f = env.raw_eval(u);
    if (f > best) {
      best = f;
      arg = u;
    }
  }
  env.optimum_location = {arg};
  env_detail::calibrate(env, grid);
  return env;
}

// Discretized field: same underlying draw and calibration, queries restricted
// to the C-per-axis cell-center lattice (one-hot points decode to centers).
inline Environment make_syngp_discrete(int categories, double lengthscale,
                                       double signal_var, SeedStream stream) {
  if (categories < 2)
    throw std::invalid_argument("make_syngp_discrete: categories must be >= 2");
  Environment env = make_syngp(lengthscale, signal_var, stream);
  env.name = "syngp_discrete";
  env.discrete_categories = categories;
  return env;
}

// ---------------------------------------------------------------------------
// Grayscale-image field.

struct ImageField {
  int width = 0, height = 0;
  MatrixXd values;  // height x width, blurred, raw [0,255] scale
};

namespace env_detail {

inline int read_pnm_int(std::istream& in, const std::string& path) {
  // Skip whitespace and '#' comments, then parse one nonnegative integer.
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    break;
  }
  if (c == EOF || !std::isdigit(c))
    throw std::runtime_error("image format error (expected integer): " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

// One box-blur pass of half-width r along each axis, clamp-to-edge.
inline void box_blur_pass(MatrixXd& img, int r) {
  if (r <= 0) return;
  const Eigen::Index H = img.rows(), W = img.cols();
  const double win = 2.0 * r + 1.0;
  MatrixXd tmp(H, W);
  for (Eigen::Index i = 0; i < H; ++i) {  // horizontal
    VectorXd prefix(W + 1);
    prefix[0] = 0.0;
    for (Eigen::Index j = 0; j < W; ++j) prefix[j + 1] = prefix[j] + img(i, j);
    for (Eigen::Index j = 0; j < W; ++j) {
      const Eigen::Index a = j - r, b = j + r;
      const Eigen::Index ca = std::max<Eigen::Index>(a, 0);
      const Eigen::Index cb = std::min<Eigen::Index>(b, W - 1);
      double s = prefix[cb + 1] - prefix[ca];
      s += static_cast<double>(ca - a) * img(i, 0);       // clamped left
      s += static_cast<double>(b - cb) * img(i, W - 1);   // clamped right
      tmp(i, j) = s / win;
    }
  }
  for (Eigen::Index j = 0; j < W; ++j) {  // vertical
    VectorXd prefix(H + 1);
    prefix[0] = 0.0;
    for (Eigen::Index i = 0; i < H; ++i) prefix[i + 1] = prefix[i] + tmp(i, j);
    for (Eigen::Index i = 0; i < H; ++i) {
      const Eigen::Index a = i - r, b = i + r;
      const Eigen::Index ca = std::max<Eigen::Index>(a, 0);
      const Eigen::Index cb = std::min<Eigen::Index>(b, H - 1);
      double s = prefix[cb + 1] - prefix[ca];
      s += static_cast<double>(ca - a) * tmp(0, j);
      s += static_cast<double>(b - cb) * tmp(H - 1, j);
      img(i, j) = s / win;
    }
  }
}

}  // namespace env_detail

// Binary 8-bit PGM (P5) loader; three box-blur passes approximate the named
// stack blur.  blur_radius = 0 loads the raw image.
inline ImageField load_pgm(const std::string& path, int blur_radius) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5')
    throw std::runtime_error("image format error (need binary PGM P5): " + path);
  const int w = env_detail::read_pnm_int(in, path);
  const int h = env_detail::read_pnm_int(in, path);
  const int maxval = env_detail::read_pnm_int(in, path);
  if (w <= 0 || h <= 0)
    throw std::runtime_error("image format error (bad dimensions): " + path);
  if (maxval <= 0 || maxval > 255)
    throw std::runtime_error("image format error (need 8-bit grayscale): " + path);
  // Header ends with exactly one whitespace byte (already consumed by the
  // integer parser's lookahead).
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("image truncated: " + path);

  ImageField field;
  field.width = w;
  field.height = h;
  field.values.resize(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      field.values(i, j) =
          255.0 * buf[static_cast<std::size_t>(i) * w + j] / maxval;
  for (int pass = 0; pass < 3; ++pass)
    env_detail::box_blur_pass(field.values, blur_radius);
  return field;
}

// Bilinear sample of the field at normalized (x, y); x spans columns and y
// spans rows, with grid corners at 0 and 1 (align-corners convention).
inline double image_bilinear(const ImageField& field, double x, double y) {
  const double u = x * (field.width - 1);
  const double v = y * (field.height - 1);
  const int j0 = std::min(static_cast<int>(u), field.width - 2 >= 0 ? field.width - 2 : 0);
  const int i0 = std::min(static_cast<int>(v), field.height - 2 >= 0 ? field.height - 2 : 0);
  const double fu = u - j0, fv = v - i0;
  const int j1 = std::min(j0 + 1, field.width - 1);
  const int i1 = std::min(i0 + 1, field.height - 1);
  return field.values(i0, j0) * (1 - fu) * (1 - fv) +
         field.values(i0, j1) * fu * (1 - fv) +
         field.values(i1, j0) * (1 - fu) * fv +
         field.values(i1, j1) * fu * fv;
}

// Image environment on [0,1]^2: pixel value 0 maps to -3 and 255 to +3, so
// the calibrated optimum is the blurred image's maximum (typically below 3).
inline Environment load_image_env(const std::string& path, int blur_radius = 50) {
  auto field = std::make_shared<ImageField>(load_pgm(path, blur_radius));
  Environment env;
  env.name = "image";
  env.box = BoxDomain::cube(2, 0.0, 1.0);
  env.raw_eval = [field](const VectorXd& x) {
    return image_bilinear(*field, x[0], x[1]);
  };
  env.out_scale = 6.0 / 255.0;
  env.out_shift = -3.0;
  Eigen::Index bi = 0, bj = 0;
  field->values.maxCoeff(&bi, &bj);
  VectorXd arg(2);
  arg << (field->width > 1 ? static_cast<double>(bj) / (field->width - 1) : 0.0),
      (field->height > 1 ? static_cast<double>(bi) / (field->height - 1) : 0.0);
  env.optimum_location = {arg};
  env.optimum_value = env.out_scale * field->values(bi, bj) + env.out_shift;
  return env;
}

}  // namespace lookahes

#endif  // LOOKAHES_ENVIRONMENTS_HPP
