#ifndef LOOKAHES_RUNNER_HPP
#define LOOKAHES_RUNNER_HPP

// Reproducible experiment loop: initial design, fit -> plan -> commit ->
// observe, per-step records, terminal action selection, and cross-seed
// metrics.  All stochastic draws descend from one root seed through labeled
// forks, so a (config, seed) pair pins every number in the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahes/acquisition.hpp"
#include "lookahes/config.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/core.hpp"
#include "lookahes/environments.hpp"
#include "lookahes/parallel.hpp"
#include "lookahes/pathwise.hpp"
#include "lookahes/policy.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/sobol.hpp"
#include "lookahes/surrogate.hpp"

namespace lookahes {

struct RunRecord {
  int step = 0;        // 1-based BO step
  VectorXd x;          // committed query (normalized coordinates)
  double y = 0.0;      // observed (possibly noisy) value
  double step_cost = 0.0;
  double cum_cost = 0.0;
  double acq_value = 0.0;
  VectorXd action;     // current terminal-action estimate
  double regret = 0.0; // optimum - noiseless value at the action
  double wall_ms = 0.0;  // in-memory only; never serialized (reproducibility)
};

struct RunResult {
  std::vector<RunRecord> records;
  Dataset data;
  VectorXd final_action;
  double final_value = 0.0;   // noiseless calibrated value at final_action
  double final_regret = 0.0;
  double best_observed = 0.0;
  std::uint64_t seed = 0;
  std::string config_toml;    // fully resolved echo
  double wall_ms_total = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

namespace run_detail {

inline VectorXd snap_to_lattice(const VectorXd& x, int categories) {
  VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    int c = static_cast<int>(std::floor(x[i] * categories));
    c = std::min(std::max(c, 0), categories - 1);
    out[i] = (c + 0.5) / categories;
  }
  return out;
}

// Observed cost of a committed move, with optional noise, clamped at zero
// (costs are expenditures; Dataset::append rejects negatives).
inline double observed_step_cost(const CostModel& cost,
                                 const std::vector<VectorXd>& history,
                                 const VectorXd& query, SeedStream* noise) {
  double c;
  if (cost.kind == CostKind::nonmarkov_euclidean) {
    c = non_markov_cost(cost, history, query);
    if (noise != nullptr && cost.cost_noise_sigma > 0.0)
      c += cost.cost_noise_sigma * noise->normal();
  } else {
    c = markov_cost(cost, history.back(), query, noise);
  }
  return std::max(0.0, c);
}

inline Environment build_environment(const EnvConfig& ec, SeedStream root) {
  Environment env;
  if (ec.name == "syngp") {
    env = make_syngp(ec.lengthscale, ec.signal_var, root);
  } else if (ec.name == "syngp_discrete") {
    env = make_syngp_discrete(ec.categories, ec.lengthscale, ec.signal_var, root);
  } else if (ec.name == "image") {
    env = load_image_env(ec.image_path, ec.blur_radius);
  } else {
    env = make_synthetic(ec.name, ec.calib_n, root);
  }
  env.noise_sigma = ec.noise_sigma;
  return env;
}

}  // namespace run_detail

// Terminal action: for the policy/tree planners, re-rank the final
// optimization's per-path action heads (plus staying put) by exact posterior
// mean; for myopic baselines, run a cost-penalized posterior-mean ascent from
// the final surrogate.  Constant data degenerates to the current location.
inline VectorXd select_final_action(const ExperimentConfig& cfg,
                                    const GpModel* gp, const Dataset& data,
                                    const Candidate* last) {
  const VectorXd x_T = data.points.back();
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  for (double y : data.observations) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (gp == nullptr || !(ymax - ymin > 1e-12)) return x_T;

  const bool planner =
      cfg.acq.kind == AcqKind::lookahes || cfg.acq.kind == AcqKind::msl;
  if (planner && last != nullptr && !last->path_actions.empty()) {
    std::vector<VectorXd> cands = last->path_actions;
    cands.push_back(x_T);
    VectorXd best = x_T;
    double best_mu = -std::numeric_limits<double>::infinity();
    double best_dist = 0.0;
    bool have = false;
    for (const VectorXd& a : cands) {
      const double mu = posterior(*gp, a).first;
      const double dist = (a - x_T).norm();
      const bool better =
          !have || mu > best_mu + 1e-15 ||
          (std::abs(mu - best_mu) <= 1e-15 &&
           (dist < best_dist - 1e-15 ||
            (std::abs(dist - best_dist) <= 1e-15 && acq_detail::lex_less(a, best))));
      if (better) {
        best = a;
        best_mu = mu;
        best_dist = dist;
        have = true;
      }
    }
    return best;
  }

  AcqConfig final_cfg = cfg.acq;
  final_cfg.kind = AcqKind::sr;
  final_cfg.restarts = 64;
  Candidate c = optimize_baseline(AcqKind::sr, *gp, data, cfg.cost, final_cfg);
  return c.query;
}

inline RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto t_run0 = std::chrono::steady_clock::now();
  SeedStream root(seed);
  RunResult out;
  out.seed = seed;
  {
    ExperimentConfig echo = cfg;
    echo.run.seeds = {seed};
    out.config_toml = config_to_toml(echo);
  }

  Environment env = run_detail::build_environment(cfg.env, root);
  const int dim = env.dim();
  const int categories = env.discrete_categories;
  if (!cfg.run.start_point.empty() &&
      static_cast<int>(cfg.run.start_point.size()) != dim)
    throw ConfigError("key 'run.start_point' must have " + std::to_string(dim) +
                      " coordinates for environment " + env.name);

  SeedStream obs_noise = root.fork(streams::env_noise);
  SeedStream cost_noise = root.fork(streams::cost_noise);

  // Initial design: Sobol points (snapped to the lattice when discrete); the
  // designated start point goes last so it anchors the cost model.  Default
  // start: the lowest-valued initial point (a deliberately bad anchor).
  {
    auto inits = sobol_points(dim, cfg.run.n_init, root.fork(streams::init_design));
    for (VectorXd& x : inits) {
      if (categories > 0) x = run_detail::snap_to_lattice(x, categories);
      out.data.append(x, env_eval(env, x, &obs_noise), 0.0);
    }
    if (!cfg.run.start_point.empty()) {
      VectorXd s =
          Eigen::Map<const VectorXd>(cfg.run.start_point.data(), dim);
      if (categories > 0) s = run_detail::snap_to_lattice(s, categories);
      out.data.append(s, env_eval(env, s, &obs_noise), 0.0);
    } else {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < out.data.size(); ++i)
        if (out.data.observations[i] < out.data.observations[worst]) worst = i;
      std::swap(out.data.points[worst], out.data.points.back());
      std::swap(out.data.observations[worst], out.data.observations.back());
      std::swap(out.data.step_costs[worst], out.data.step_costs.back());
    }
  }

  const bool planner =
      cfg.acq.kind == AcqKind::lookahes || cfg.acq.kind == AcqKind::msl;
  AcqConfig acq = cfg.acq;
  acq.threads = resolve_threads(cfg.run.threads);
  if (categories > 0) acq.discrete_categories = categories;

  // The policy persists across BO steps (weights carry over; each step only
  // continues optimizing them against fresh paths).
  PolicyParams params;
  if (cfg.acq.kind == AcqKind::lookahes) {
    const PolicyHead head =
        categories > 0 ? PolicyHead::discrete : PolicyHead::continuous;
    params = init_policy(dim, cfg.policy.hidden, head,
                         root.fork(streams::policy_init), categories);
    if (cfg.policy.warmup_steps > 0)
      warmup_policy(params, root.fork(streams::policy_init).fork(1),
                    cfg.policy.warmup_steps);
  }

  double cum_cost = 0.0;
  Candidate last_candidate;
  bool have_candidate = false;
  GpModel gp;
  bool have_gp = false;

  for (int t = 1; t <= cfg.run.steps; ++t) {
    const auto t_step0 = std::chrono::steady_clock::now();
    SeedStream step_stream = root.fork(streams::bo_step_base).fork(t);
    acq.base_sample_seed = step_stream;
    try {
      gp = fit_gp(out.data, cfg.kernel, cfg.fit,
                  step_stream.fork(streams::surrogate_fit));
      have_gp = true;

      Candidate cand;
      if (planner) {
        PathBatch batch =
            sample_paths(gp, acq.restarts, cfg.rff_features, step_stream);
        cand = cfg.acq.kind == AcqKind::lookahes
                   ? optimize_lookahes(params, batch, out.data, cfg.cost, acq)
                   : optimize_msl(batch, out.data, cfg.cost, acq);
      } else {
        cand = optimize_baseline(cfg.acq.kind, gp, out.data, cfg.cost, acq);
      }
      last_candidate = cand;
      have_candidate = true;

      const double step_cost = run_detail::observed_step_cost(
          cfg.cost, out.data.points, cand.query, &cost_noise);
      const double y = env_eval(env, cand.query, &obs_noise);
      out.data.append(cand.query, y, step_cost);
      cum_cost += step_cost;

      RunRecord rec;
      rec.step = t;
      rec.x = cand.query;
      rec.y = y;
      rec.step_cost = step_cost;
      rec.cum_cost = cum_cost;
      rec.acq_value = cand.acq_value;
      rec.action = cand.action;
      rec.regret = env.optimum_value - env_value(env, cand.action);
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_step0)
                        .count();
      out.records.push_back(rec);
    } catch (const std::exception& e) {
      // Surrogate or planner failure: flush what we have and stop early.
      out.aborted = true;
      out.abort_reason = e.what();
      break;
    }
  }

  // Terminal action from the final posterior (refit on the full dataset).
  if (!out.aborted && cfg.run.steps > 0) {
    try {
      gp = fit_gp(out.data, cfg.kernel, cfg.fit,
                  root.fork(streams::bo_step_base)
                      .fork(cfg.run.steps + 1)
                      .fork(streams::surrogate_fit));
      have_gp = true;
    } catch (const std::exception&) {
      have_gp = false;
    }
  }
  out.final_action = select_final_action(
      cfg, have_gp ? &gp : nullptr, out.data,
      have_candidate ? &last_candidate : nullptr);
  out.final_value = env_value(env, out.final_action);
  out.final_regret = env.optimum_value - out.final_value;
  out.best_observed = *std::max_element(out.data.observations.begin(),
                                        out.data.observations.end());
  out.wall_ms_total = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_run0)
                          .count();
  return out;
}

// ---------------------------------------------------------------------------
// Cross-seed metrics.

struct Metrics {
  int n_runs = 0;
  int n_aborted = 0;
  double final_value_median = 0.0;
  double final_value_mean = 0.0;
  double final_value_std = 0.0;
  double scaled_value_median = 0.0;  // final value / 3 (optimum-relative)
  double regret_median = 0.0;
  double cum_regret_median = 0.0;  // sum of per-step action regrets
  double cum_cost_median = 0.0;
  double cum_cost_mean = 0.0;
  double best_observed_median = 0.0;
  double wall_ms_mean = 0.0;
};

namespace run_detail {

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace run_detail

// Aggregate runs of one configuration across seeds.  Mixing configurations
// is an error: the numbers would not be comparable.
inline Metrics compute_metrics(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("compute_metrics: no runs");
  auto config_sans_seed = [](const RunResult& r) {
    // The echo differs across seeds only in its seeds line.
    std::string s = r.config_toml;
    const std::size_t a = s.find("seeds = [");
    if (a != std::string::npos) {
      const std::size_t b = s.find(']', a);
      if (b != std::string::npos) s.erase(a, b - a + 1);
    }
    return s;
  };
  const std::string ref = config_sans_seed(runs.front());
  for (const RunResult& r : runs)
    if (config_sans_seed(r) != ref)
      throw std::invalid_argument("compute_metrics: mixed configurations");

  Metrics m;
  m.n_runs = static_cast<int>(runs.size());
  std::vector<double> fv, fr, cr, cc, bo, wall;
  for (const RunResult& r : runs) {
    if (r.aborted) {
      ++m.n_aborted;
      continue;
    }
    fv.push_back(r.final_value);
    fr.push_back(r.final_regret);
    double creg = 0.0;
    for (const RunRecord& rec : r.records) creg += rec.regret;
    cr.push_back(creg);
    cc.push_back(r.records.empty() ? 0.0 : r.records.back().cum_cost);
    bo.push_back(r.best_observed);
    wall.push_back(r.wall_ms_total);
  }
  if (fv.empty())
    throw std::invalid_argument("compute_metrics: every run aborted");
  m.final_value_median = run_detail::median(fv);
  m.final_value_mean = run_detail::mean(fv);
  m.final_value_std = run_detail::sample_std(fv);
  m.scaled_value_median = m.final_value_median / 3.0;
  m.regret_median = run_detail::median(fr);
  m.cum_regret_median = run_detail::median(cr);
  m.cum_cost_median = run_detail::median(cc);
  m.cum_cost_mean = run_detail::mean(cc);
  m.best_observed_median = run_detail::median(bo);
  m.wall_ms_mean = run_detail::mean(wall);
  return m;
}

}  // namespace lookahes

#endif  // LOOKAHES_RUNNER_HPP
