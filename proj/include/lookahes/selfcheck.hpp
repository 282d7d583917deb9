#ifndef LOOKAHES_SELFCHECK_HPP
#define LOOKAHES_SELFCHECK_HPP

// Built-in validation suites, shared by the CLI `validate` command and the
// test binaries: posterior fidelity of pathwise samples, analytic gradients
// against central finite differences, and the exact cost-model vectors.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/pathwise.hpp"
#include "lookahes/policy.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/surrogate.hpp"

namespace lookahes {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

namespace selfcheck_detail {

inline CheckResult below(const std::string& name, double measured,
                         double threshold) {
  return CheckResult{name, measured, threshold, measured < threshold};
}

inline CheckResult exact(const std::string& name, double got, double want) {
  const bool pass = (got == want) || (std::isinf(got) && std::isinf(want) &&
                                      (got > 0) == (want > 0));
  return CheckResult{name, got, want, pass};
}

// 1D regression fixture with fixed hyperparameters (no fitting): a smooth
// bumpy curve observed at n evenly spaced points.
inline GpModel fixture_gp_1d(int n) {
  MatrixXd X(1, n);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    X(0, i) = x;
    y[i] = std::sin(2.0 * M_PI * x) + 0.3 * std::cos(5.0 * x);
  }
  KernelSpec spec;
  spec.kind = KernelKind::rbf;
  spec.lengthscale = 0.2;
  spec.signal_variance = 1.0;
  spec.noise_variance = 1e-4;
  return condition_gp(spec, y.mean(), X, y);
}

// Small 2D fixture for rollout gradients.
inline Dataset fixture_data_2d(int n) {
  Dataset data;
  SeedStream s(424242);
  for (int i = 0; i < n; ++i) {
    VectorXd x(2);
    x << s.uniform(0.1, 0.9), s.uniform(0.1, 0.9);
    data.append(x, std::sin(3.0 * x[0]) * std::cos(2.0 * x[1]), 0.0);
  }
  return data;
}

}  // namespace selfcheck_detail

// Pathwise (Matheron) samples against the exact posterior on a 1D fixture:
// sample means and covariances over a probe grid must match the closed form.
inline std::vector<CheckResult> run_matheron_suite(int n_paths = 2048,
                                                   int n_features = 1024,
                                                   int n_train = 8) {
  using selfcheck_detail::below;
  GpModel gp = selfcheck_detail::fixture_gp_1d(n_train);
  PathBatch batch = sample_paths(gp, n_paths, n_features, SeedStream(7));

  const int G = 16;
  MatrixXd vals(n_paths, G);
  std::vector<VectorXd> grid(G, VectorXd(1));
  for (int g = 0; g < G; ++g) grid[g][0] = (g + 0.5) / G;
  Eigen::RowVectorXd row(n_paths);
  PathEvalWorkspace ws;
  std::vector<int> all(n_paths);
  for (int t = 0; t < n_paths; ++t) all[t] = t;
  MatrixXd X_rep(1, n_paths);
  for (int g = 0; g < G; ++g) {
    X_rep.setConstant(grid[g][0]);
    eval_paths_batched(batch, X_rep, all, row, ws);
    vals.col(g) = row.transpose();
  }

  double mean_gap = 0.0;
  for (int g = 0; g < G; ++g) {
    const double emp = vals.col(g).mean();
    mean_gap = std::max(mean_gap,
                        std::abs(emp - posterior(gp, grid[g]).first));
  }
  double cov_gap = 0.0;
  VectorXd emp_mean = vals.colwise().mean();
  for (int a = 0; a < G; ++a)
    for (int b = a; b < G; ++b) {
      const double emp = ((vals.col(a).array() - emp_mean[a]) *
                          (vals.col(b).array() - emp_mean[b]))
                             .sum() /
                         (n_paths - 1);
      cov_gap = std::max(
          std::abs(emp - posterior_cov(gp, grid[a], grid[b])), cov_gap);
    }

  return {below("matheron mean gap (sup over grid)", mean_gap, 0.05),
          below("matheron covariance gap (sup over grid pairs)", cov_gap, 0.1)};
}

// Analytic gradients against central finite differences: marginal-likelihood
// gradient (log-hyperparameters), pathwise gradients, and the full rollout
// backward pass over sampled policy coordinates.
inline std::vector<CheckResult> run_gradient_suite(int rollout_coords = 20) {
  using selfcheck_detail::below;
  std::vector<CheckResult> out;

  {  // d log p(y) / d log(theta)
    const int n = 6;
    MatrixXd X(2, n);
    VectorXd y(n);
    SeedStream s(11);
    for (int i = 0; i < n; ++i) {
      X(0, i) = s.uniform(0.0, 1.0);
      X(1, i) = s.uniform(0.0, 1.0);
      y[i] = std::sin(4.0 * X(0, i)) + 0.5 * X(1, i);
    }
    const VectorXd yc = y.array() - y.mean();
    KernelSpec spec;
    spec.kind = KernelKind::matern52;
    spec.lengthscale = 0.35;
    spec.signal_variance = 0.8;
    spec.noise_variance = 5e-3;
    const Eigen::Vector3d g = log_marginal_grad(X, yc, spec);
    const double h = 1e-6;
    double worst = 0.0;
    for (int j = 0; j < 3; ++j) {
      auto with = [&](double delta) {
        KernelSpec sp = spec;
        double* field = j == 0   ? &sp.lengthscale
                        : j == 1 ? &sp.signal_variance
                                 : &sp.noise_variance;
        *field = std::exp(std::log(*field) + delta);
        return log_marginal(X, yc, sp);
      };
      const double fd = (with(h) - with(-h)) / (2.0 * h);
      const double rel =
          std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j]));
      worst = std::max(worst, rel);
    }
    out.push_back(below("marginal-likelihood gradient vs FD", worst, 1e-5));
  }

  {  // pathwise sample gradient
    GpModel gp = selfcheck_detail::fixture_gp_1d(6);
    PathBatch batch = sample_paths(gp, 3, 256, SeedStream(3));
    const double h = 1e-6;
    double worst = 0.0;
    for (int tau = 0; tau < 3; ++tau)
      for (double xv : {0.15, 0.5, 0.85}) {
        VectorXd x(1), xp(1), xm(1);
        x << xv;
        xp << xv + h;
        xm << xv - h;
        const double fd =
            (eval_path(batch, tau, xp) - eval_path(batch, tau, xm)) / (2.0 * h);
        const double an = path_gradient(batch, tau, x)[0];
        worst = std::max(worst,
                         std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
    out.push_back(below("pathwise gradient vs FD", worst, 1e-4));
  }

  {  // rollout objective gradient through the full tape
    Dataset data = selfcheck_detail::fixture_data_2d(5);
    KernelSpec spec;
    spec.kind = KernelKind::rbf;
    spec.lengthscale = 0.3;
    spec.signal_variance = 1.0;
    spec.noise_variance = 1e-3;
    VectorXd y = Eigen::Map<const VectorXd>(data.observations.data(),
                                            static_cast<Eigen::Index>(data.size()));
    GpModel gp = condition_gp(spec, y.mean(), data.points_matrix(), y);
    PathBatch batch = sample_paths(gp, 3, 64, SeedStream(5));
    CostModel cost = make_cost_model(CostKind::euclidean);
    PolicyParams params =
        init_policy(2, 8, PolicyHead::continuous, SeedStream(21));

    RolloutResult res = rollout(params, batch, data, 2, cost, 0.7);
    const VectorXd grad = backward(res, params);
    VectorXd flat = params.flatten();
    const Eigen::Index np = flat.size();
    const double h = 1e-5;
    double worst = 0.0;
    for (int c = 0; c < rollout_coords; ++c) {
      const Eigen::Index idx =
          (static_cast<Eigen::Index>(c) * 2654435761u) % np;
      auto value_at = [&](double delta) {
        PolicyParams p2 = params;
        VectorXd f2 = flat;
        f2[idx] += delta;
        p2.unflatten(f2);
        return rollout(p2, batch, data, 2, cost, 0.7).objective;
      };
      const double fd = (value_at(h) - value_at(-h)) / (2.0 * h);
      const double rel =
          std::abs(fd - grad[idx]) / std::max(1e-6, std::abs(grad[idx]));
      worst = std::max(worst, rel);
    }
    out.push_back(below("rollout gradient vs FD", worst, 1e-3));
  }

  return out;
}

// Exact cost-model vectors (noise off): every comparison is bitwise.
inline std::vector<CheckResult> run_cost_suite() {
  using selfcheck_detail::exact;
  std::vector<CheckResult> out;
  const double inf = std::numeric_limits<double>::infinity();
  auto v2 = [](double a, double b) {
    VectorXd v(2);
    v << a, b;
    return v;
  };

  {
    CostModel m = make_cost_model(CostKind::euclidean);
    out.push_back(exact("euclidean k=1 r=0: (0,0)->(3,4) = 5",
                        markov_cost(m, v2(0, 0), v2(3, 4)), 5.0));
  }
  {
    CostModel m = make_cost_model(CostKind::manhattan);
    m.k = 2.0;
    m.r = 0.5;
    out.push_back(exact("manhattan k=2 r=0.5: (0,0)->(1,1) = 3",
                        markov_cost(m, v2(0, 0), v2(1, 1)), 3.0));
  }
  {
    CostModel m = make_cost_model(CostKind::spotlight);
    out.push_back(exact("spotlight r=0.1: distance 0.05 costs 0",
                        markov_cost(m, v2(0, 0), v2(0.05, 0)), 0.0));
    out.push_back(exact("spotlight r=0.1: distance 0.05 feasible",
                        feasible(m, v2(0, 0), v2(0.05, 0)) ? 1.0 : 0.0, 1.0));
    out.push_back(exact("spotlight r=0.1: distance 0.2 infeasible (+inf)",
                        markov_cost(m, v2(0, 0), v2(0.2, 0)), inf));
    out.push_back(exact("spotlight r=0.1: distance 0.1 feasible (boundary)",
                        feasible(m, v2(0, 0), v2(0.1, 0)) ? 1.0 : 0.0, 1.0));
    out.push_back(exact("spotlight r=0.1: distance 0.100001 infeasible",
                        feasible(m, v2(0, 0), v2(0.100001, 0)) ? 1.0 : 0.0,
                        0.0));
  }
  {
    CostModel m = make_cost_model(CostKind::euclidean);
    out.push_back(exact("euclidean: any move feasible",
                        feasible(m, v2(0, 0), v2(9, 9)) ? 1.0 : 0.0, 1.0));
  }
  {
    CostModel m = make_cost_model(CostKind::nonmarkov_euclidean);
    m.d = 0.5;
    m.m = 2.0;
    std::vector<VectorXd> hist = {v2(0, 0), v2(1.25, 0), v2(2.5, 0)};
    out.push_back(exact("non-Markov d=0.5 m=2: cum 2.5, step 1 -> 0.5",
                        non_markov_cost(m, hist, v2(3.5, 0)), 0.5));
    std::vector<VectorXd> hist2 = {v2(0, 0), v2(1.9, 0)};
    out.push_back(exact("non-Markov d=0.5 m=2: cum 1.9, step 1 -> 1",
                        non_markov_cost(m, hist2, v2(2.9, 0)), 1.0));
    CostModel m0 = m;
    m0.d = 0.0;
    CostModel base = make_cost_model(CostKind::euclidean);
    out.push_back(exact("non-Markov d=0 equals the Markov cost",
                        non_markov_cost(m0, hist, v2(3.5, 0)),
                        markov_cost(base, v2(2.5, 0), v2(3.5, 0))));
  }
  {
    CostModel m = make_cost_model(CostKind::euclidean);
    std::vector<VectorXd> observed = {v2(0.4, 0.4)};
    out.push_back(exact("trajectory with no lookahead = single move cost",
                        trajectory_cost(m, observed, {}, v2(0.4, 0.9)),
                        markov_cost(m, v2(0.4, 0.4), v2(0.4, 0.9))));
    std::vector<VectorXd> tail = {v2(0, 0)};
    std::vector<VectorXd> look = {v2(0, 0.3), v2(0, 0.6)};
    out.push_back(exact("trajectory collinear sum = 0.9",
                        trajectory_cost(m, tail, look, v2(0, 0.9)), 0.9));
  }
  return out;
}

inline std::vector<CheckResult> run_all_suites() {
  std::vector<CheckResult> all = run_matheron_suite();
  for (const CheckResult& c : run_gradient_suite()) all.push_back(c);
  for (const CheckResult& c : run_cost_suite()) all.push_back(c);
  return all;
}

}  // namespace lookahes

#endif  // LOOKAHES_SELFCHECK_HPP
