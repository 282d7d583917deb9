// Pathwise posterior samples: moment agreement with the exact GP,
// determinism, the prior+correction decomposition, gradients, and the
// constant-per-batch draw counter.

#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <cmath>

#include "lookahes/pathwise.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/selfcheck.hpp"
#include "lookahes/surrogate.hpp"

using namespace lookahes;
using Catch::Approx;

namespace {

GpModel small_gp(double noise_variance) {
  MatrixXd X(1, 6);
  X << 0.05, 0.2, 0.4, 0.55, 0.75, 0.95;
  VectorXd y(6);
  for (int i = 0; i < 6; ++i) y[i] = std::sin(6.0 * X(0, i));
  KernelSpec s;
  s.kind = KernelKind::rbf;
  s.lengthscale = 0.2;
  s.signal_variance = 1.0;
  s.noise_variance = noise_variance;
  return condition_gp(s, 0.0, X, y);
}

}  // namespace

TEST_CASE("path sample moments match the exact posterior", "[pathwise]") {
  // Down-scaled version of the full acceptance check; the heavy run lives in
  // the acceptance binary.
  for (const CheckResult& c : run_matheron_suite(/*n_paths=*/1024,
                                                 /*n_features=*/1024,
                                                 /*n_train=*/8)) {
    INFO(c.name << " measured " << c.measured << " limit " << c.threshold);
    CHECK(c.pass);
  }
}

TEST_CASE("identical streams give bitwise-identical batches", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch a = sample_paths(gp, 16, 128, SeedStream(7));
  PathBatch b = sample_paths(gp, 16, 128, SeedStream(7));
  CHECK((a.freqs == b.freqs));
  CHECK((a.phases == b.phases));
  CHECK((a.prior_w == b.prior_w));
  CHECK((a.matheron == b.matheron));
  PathBatch c = sample_paths(gp, 16, 128, SeedStream(8));
  CHECK((a.prior_w != c.prior_w));
}

TEST_CASE("noiseless paths interpolate the training data", "[pathwise]") {
  GpModel gp = small_gp(0.0);
  const int M = 2048;
  PathBatch batch = sample_paths(gp, 32, M, SeedStream(3));
  const double tol = 3.0 * std::sqrt(gp.kernel.signal_variance) *
                     std::sqrt(2.0 / static_cast<double>(M));
  for (int tau = 0; tau < batch.n_paths; ++tau)
    for (int j = 0; j < gp.n(); ++j) {
      const double v = eval_path(batch, tau, gp.train_x.col(j));
      CHECK(std::abs(v - gp.train_y[j]) < tol);
    }
}

TEST_CASE("path value decomposes into prior plus correction", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 4, 64, SeedStream(11));
  VectorXd x(1);
  x << 0.33;
  for (int tau = 0; tau < 4; ++tau) {
    const VectorXd arg = batch.freqs * x + batch.phases;
    const double prior =
        batch.amplitude * batch.prior_w.row(tau).dot(arg.array().cos().matrix());
    double corr = 0.0;
    for (int j = 0; j < gp.n(); ++j)
      corr += batch.matheron(tau, j) *
              kernel_eval(gp.kernel, x, gp.train_x.col(j));
    CHECK(eval_path(batch, tau, x) ==
          Approx(gp.mean_const + prior + corr).margin(1e-12));
  }
}

TEST_CASE("distinct paths differ somewhere on a grid", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 64, 256, SeedStream(5));
  VectorXd x(1);
  int distinct_pairs = 0;
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) {
      double max_gap = 0.0;
      for (int g = 0; g < 16; ++g) {
        x << g / 15.0;
        max_gap = std::max(max_gap,
                           std::abs(eval_path(batch, a, x) - eval_path(batch, b, x)));
      }
      if (max_gap > 1e-6) ++distinct_pairs;
    }
  CHECK(distinct_pairs == 8 * 7 / 2);
}

TEST_CASE("path gradients match finite differences", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 3, 256, SeedStream(17));
  SeedStream probe(1);
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const int tau = rep % 3;
    VectorXd x(1);
    x << probe.uniform();
    VectorXd g = path_gradient(batch, tau, x);
    VectorXd xp = x, xm = x;
    xp[0] += h;
    xm[0] -= h;
    const double fd = (eval_path(batch, tau, xp) - eval_path(batch, tau, xm)) / (2 * h);
    const double rel = std::abs(g[0] - fd) / std::max(1e-6, std::abs(fd));
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("single known feature has a hand-computable derivative", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 1, 1, SeedStream(2));
  batch.matheron.setZero();  // isolate the prior term
  batch.prior_w.setConstant(1.3);
  const double omega = batch.freqs(0, 0);
  const double phase = batch.phases[0];
  VectorXd x(1);
  x << 0.42;
  const double expect =
      -batch.amplitude * 1.3 * std::sin(omega * x[0] + phase) * omega;
  CHECK(path_gradient(batch, 0, x)[0] == Approx(expect).margin(1e-10));
}

TEST_CASE("zero weights and corrections give a zero gradient", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 2, 64, SeedStream(9));
  batch.prior_w.setZero();
  batch.matheron.setZero();
  VectorXd x(1);
  x << 0.6;
  CHECK(path_gradient(batch, 0, x).norm() == 0.0);
  CHECK(eval_path(batch, 0, x) == gp.mean_const);
}

TEST_CASE("batched evaluation equals per-path evaluation", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 6, 128, SeedStream(13));
  MatrixXd X(1, 12);
  std::vector<int> cols(12);
  SeedStream probe(4);
  for (int b = 0; b < 12; ++b) {
    X(0, b) = probe.uniform();
    cols[static_cast<std::size_t>(b)] = b % 6;
  }
  Eigen::RowVectorXd y;
  PathEvalWorkspace ws;
  eval_paths_batched(batch, X, cols, y, ws);
  for (int b = 0; b < 12; ++b)
    CHECK(y[b] == Approx(eval_path(batch, cols[static_cast<std::size_t>(b)],
                                   X.col(b))).margin(1e-12));
}

TEST_CASE("draw counter counts paths, not evaluations", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  reset_path_draw_count();
  PathBatch batch = sample_paths(gp, 24, 64, SeedStream(1));
  CHECK(path_draw_count() == 24);
  VectorXd x(1);
  x << 0.5;
  for (int rep = 0; rep < 100; ++rep) eval_path(batch, rep % 24, x);
  CHECK(path_draw_count() == 24);  // evaluations are free
  sample_paths(gp, 8, 64, SeedStream(2));
  CHECK(path_draw_count() == 32);
  reset_path_draw_count();
  CHECK(path_draw_count() == 0);
}

TEST_CASE("touched bitmap records which paths were used", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 5, 64, SeedStream(6));
  VectorXd x(1);
  x << 0.5;
  eval_path(batch, 2, x);
  eval_path(batch, 4, x);
  const std::vector<char> expect = {0, 0, 1, 0, 1};
  CHECK(batch.touched == expect);
  CHECK_THROWS_AS(eval_path(batch, 5, x), std::out_of_range);
  CHECK_THROWS_AS(eval_path(batch, -1, x), std::out_of_range);
}

TEST_CASE("amplitude follows the RFF normalization", "[pathwise]") {
  GpModel gp = small_gp(1e-4);
  PathBatch batch = sample_paths(gp, 2, 512, SeedStream(20));
  CHECK(batch.amplitude ==
        Approx(std::sqrt(2.0 * gp.kernel.signal_variance / 512.0)).margin(1e-15));
}
