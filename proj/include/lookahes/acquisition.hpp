#ifndef LOOKAHES_ACQUISITION_HPP
#define LOOKAHES_ACQUISITION_HPP

// Acquisition layer: the pathwise multi-step objective optimized through the
// recurrent policy (lookahes), the free-variable multistep tree (msl), and
// cost-penalized myopic baselines (sr, ei, pi, ucb, kg).  All optimizers are
// deterministic given the config's seed stream; restarts use slot-based
// parallelism with fixed-order reductions.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/kernels.hpp"
#include "lookahes/parallel.hpp"
#include "lookahes/pathwise.hpp"
#include "lookahes/policy.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/sobol.hpp"
#include "lookahes/surrogate.hpp"

namespace lookahes {

enum class AcqKind { lookahes, msl, sr, ei, pi, ucb, kg };

inline const char* acq_kind_name(AcqKind k) {
  switch (k) {
    case AcqKind::lookahes: return "lookahes";
    case AcqKind::msl: return "msl";
    case AcqKind::sr: return "sr";
    case AcqKind::ei: return "ei";
    case AcqKind::pi: return "pi";
    case AcqKind::ucb: return "ucb";
    case AcqKind::kg: return "kg";
  }
  return "?";
}

inline AcqKind acq_kind_from_name(const std::string& s) {
  for (AcqKind k : {AcqKind::lookahes, AcqKind::msl, AcqKind::sr, AcqKind::ei,
                    AcqKind::pi, AcqKind::ucb, AcqKind::kg})
    if (s == acq_kind_name(k)) return k;
  throw std::invalid_argument("unknown acquisition kind: " + s);
}

struct AcqConfig {
  AcqKind kind = AcqKind::lookahes;
  int horizon = 1;    // L; myopic kinds always plan a single next query
  int restarts = 64;  // r (= number of trajectories for lookahes/msl)
  double lambda = 1.0;
  int mc_samples = 8192;  // Sobol MC budget for baseline estimators
  double beta = 2.0;      // ucb optimism
  double tau = 1.0;       // pi logistic temperature
  int grad_steps = 200;   // inner optimization iterations
  SeedStream base_sample_seed{0};
  // Optimizer knobs.
  double vmf_kappa = 0.0;          // 0: uniform-sphere restart perturbation
  double perturb_magnitude = 0.05; // restart perturbation radius
  double policy_lr = 1e-3;         // lookahes Adam step size
  double msl_lr = 0.05;            // msl logit Adam step size
  double baseline_lr = 0.02;       // baseline query Adam step size
  bool free_actions = false;       // lookahes: per-path free action variables
  int discrete_categories = 0;     // >0: optimize over the cell grid
  int threads = 1;
};

struct Candidate {
  VectorXd query;
  double acq_value = 0.0;
  VectorXd action;
  double predicted_cost = 0.0;
  bool projected = false;  // hard-feasibility fallback engaged at commit
  std::vector<VectorXd> path_actions;  // per-path action heads, best first
};

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Myopic acquisition values.

// Analytic expected improvement; sigma = 0 falls back to max(mu - best, 0).
inline double ei_analytic(double mu, double sigma, double best) {
  if (sigma <= 1e-12) return std::max(mu - best, 0.0);
  const double z = (mu - best) / sigma;
  return (mu - best) * normal_cdf(z) + sigma * normal_pdf(z);
}

// Sobol-MC expected improvement (cross-check estimator for the analytic form).
inline double ei_value_mc(const GpModel& gp, const VectorXd& x, double best_y,
                          int n, SeedStream stream) {
  const auto [mu, var] = posterior(gp, x);
  const double sigma = std::sqrt(std::max(var, 0.0));
  const MatrixXd z = sobol_normal(1, n, stream);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::max(mu + sigma * z(i, 0) - best_y, 0.0);
  return acc / n;
}

// Sobol-MC probability of improvement with logistic temperature tau; the
// tau -> 0 limit recovers the Gaussian cdf form.  sigma = 0: indicator.
inline double pi_value_mc(double mu, double sigma, double best, double tau,
                          const VectorXd& z_base) {
  if (sigma <= 1e-12) return mu > best ? 1.0 : 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z_base.size(); ++i) {
    const double f = mu + sigma * z_base[i];
    acc += 1.0 / (1.0 + std::exp(-(f - best) / tau));
  }
  return acc / static_cast<double>(z_base.size());
}

// ---------------------------------------------------------------------------
// Knowledge gradient.
//
// KG(x) = E_y[max_z mu_{t+1}(z)] - max_z mu_t(z), with the expectation taken
// over 16 symmetric Gaussian quantiles of the predictive y at x.  The fantasy
// posterior mean has the exact rank-one form
//   mu_{t+1}(z) = mu_t(z) + k_t(z,x) / s * z_f,   s = sqrt(var_t(x) + noise),
// so no refactorization is needed.  The inner max runs over a fixed candidate
// grid (plus the incumbent argmax, which makes KG >= 0 up to roundoff) and is
// polished by a few gradient-ascent steps.

struct MeanArgmax {
  VectorXd x;
  double value = -std::numeric_limits<double>::infinity();
};

// Argmax of the posterior mean over grid columns, refined by gradient ascent
// (tracking the best point seen, so refinement never loses to the grid).
inline MeanArgmax posterior_mean_argmax(const GpModel& gp, const MatrixXd& grid,
                                        int refine_steps, double lr = 0.01) {
  MeanArgmax best;
  for (Eigen::Index j = 0; j < grid.cols(); ++j) {
    const double m = posterior(gp, grid.col(j)).first;
    if (m > best.value) {
      best.value = m;
      best.x = grid.col(j);
    }
  }
  VectorXd z = best.x;
  for (int s = 0; s < refine_steps; ++s) {
    z += lr * posterior_mean_grad(gp, z);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z[i] = std::min(std::max(z[i], 0.0), 1.0);
    const double m = posterior(gp, z).first;
    if (m > best.value) {
      best.value = m;
      best.x = z;
    }
  }
  return best;
}

struct KgWorkspace {
  MatrixXd grid;     // dim x G candidate set
  VectorXd grid_mu;  // mu_t over the grid
  MatrixXd k_grid;   // G x n kernel block k(grid, X_train)
  VectorXd zf;       // symmetric fantasy quantiles
  VectorXd xstar;    // incumbent posterior-mean argmax
  VectorXd kstar;    // k(xstar, X_train)
  double m_t = 0.0;  // incumbent max mean
  int refine_steps = 10;
};

inline KgWorkspace kg_prepare(const GpModel& gp, const MatrixXd& grid,
                              int n_fantasy = 16, int refine_steps = 10) {
  KgWorkspace ws;
  ws.grid = grid;
  ws.refine_steps = refine_steps;
  const Eigen::Index G = grid.cols(), n = gp.n();
  ws.grid_mu.resize(G);
  ws.k_grid.resize(G, n);
  for (Eigen::Index j = 0; j < G; ++j) {
    for (Eigen::Index i = 0; i < n; ++i)
      ws.k_grid(j, i) = kernel_eval(gp.kernel, grid.col(j), gp.train_x.col(i));
    ws.grid_mu[j] = gp.mean_const + ws.k_grid.row(j).dot(gp.alpha);
  }
  MeanArgmax star = posterior_mean_argmax(gp, grid, refine_steps);
  ws.xstar = star.x;
  ws.m_t = star.value;
  ws.kstar.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    ws.kstar[i] = kernel_eval(gp.kernel, ws.xstar, gp.train_x.col(i));
  ws.zf.resize(n_fantasy);
  for (int f = 0; f < n_fantasy; ++f)
    ws.zf[f] = inverse_normal_cdf((f + 0.5) / n_fantasy);
  return ws;
}

namespace acq_detail {

// Gradient of z |-> k_t(z, x) = k(z,x) - k(z,X) v  (v fixed).
inline VectorXd posterior_cov_grad(const GpModel& gp, const VectorXd& z,
                                   const VectorXd& x, const VectorXd& v) {
  VectorXd g = kernel_grad_x(gp.kernel, z, x);
  for (Eigen::Index j = 0; j < gp.n(); ++j) {
    const double f =
        kernel_grad_factor(gp.kernel, (z - gp.train_x.col(j)).norm());
    if (f != 0.0) g -= (v[j] * f) * (z - gp.train_x.col(j));
  }
  return g;
}

}  // namespace acq_detail

inline double kg_value_ws(const GpModel& gp, const VectorXd& x,
                          const KgWorkspace& ws) {
  const Eigen::Index n = gp.n();
  VectorXd k_x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    k_x[i] = kernel_eval(gp.kernel, x, gp.train_x.col(i));
  const VectorXd sol = gp.chol.triangularView<Eigen::Lower>().solve(k_x);
  const VectorXd v =
      gp.chol.transpose().triangularView<Eigen::Upper>().solve(sol);
  const double var =
      std::max(gp.kernel.signal_variance - sol.squaredNorm(), 0.0);
  const double pred_sd = std::sqrt(var + gp.kernel.noise_variance);

  const Eigen::Index G = ws.grid.cols();
  VectorXd w(G);
  for (Eigen::Index j = 0; j < G; ++j) {
    const double k_zx = kernel_eval(gp.kernel, ws.grid.col(j), x);
    w[j] = (k_zx - ws.k_grid.row(j).dot(v)) / pred_sd;
  }
  const double w_star =
      (kernel_eval(gp.kernel, ws.xstar, x) - ws.kstar.dot(v)) / pred_sd;

  // Fantasy-mean evaluation at an arbitrary point z.
  auto mu_f = [&](const VectorXd& z, double zf) {
    double mu = gp.mean_const;
    double kt = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double k = kernel_eval(gp.kernel, z, gp.train_x.col(i));
      mu += k * gp.alpha[i];
      kt += k * v[i];
    }
    const double k_zx = kernel_eval(gp.kernel, z, x);
    return mu + (k_zx - kt) / pred_sd * zf;
  };

  double acc = 0.0;
  for (Eigen::Index f = 0; f < ws.zf.size(); ++f) {
    const double zf = ws.zf[f];
    double best = ws.m_t + w_star * zf;  // incumbent always a candidate
    VectorXd arg = ws.xstar;
    for (Eigen::Index j = 0; j < G; ++j) {
      const double m = ws.grid_mu[j] + w[j] * zf;
      if (m > best) {
        best = m;
        arg = ws.grid.col(j);
      }
    }
    VectorXd z = arg;
    for (int s = 0; s < ws.refine_steps; ++s) {
      VectorXd g = posterior_mean_grad(gp, z) +
                   (zf / pred_sd) * acq_detail::posterior_cov_grad(gp, z, x, v);
      z += 0.01 * g;
      for (Eigen::Index i = 0; i < z.size(); ++i)
        z[i] = std::min(std::max(z[i], 0.0), 1.0);
      best = std::max(best, mu_f(z, zf));
    }
    acc += best;
  }
  return acc / static_cast<double>(ws.zf.size()) - ws.m_t;
}

inline MatrixXd default_kg_grid(int dim, const AcqConfig& cfg, int n_grid = 256) {
  auto pts = sobol_points(dim, n_grid, cfg.base_sample_seed.fork(streams::acq_base));
  MatrixXd grid(dim, n_grid);
  for (int j = 0; j < n_grid; ++j) grid.col(j) = pts[j];
  return grid;
}

inline double kg_value(const GpModel& gp, const VectorXd& x, const AcqConfig& cfg) {
  const KgWorkspace ws = kg_prepare(gp, default_kg_grid(gp.dim(), cfg));
  return kg_value_ws(gp, x, ws);
}

// Single-point acquisition value for the myopic kinds.
inline double baseline_value(AcqKind kind, const GpModel& gp, const VectorXd& x,
                             double best_y, const AcqConfig& cfg) {
  switch (kind) {
    case AcqKind::sr:
      return posterior(gp, x).first;
    case AcqKind::ei: {
      const auto [mu, var] = posterior(gp, x);
      return ei_analytic(mu, std::sqrt(std::max(var, 0.0)), best_y);
    }
    case AcqKind::pi: {
      const auto [mu, var] = posterior(gp, x);
      const MatrixXd z =
          sobol_normal(1, cfg.mc_samples, cfg.base_sample_seed.fork(streams::acq_base));
      return pi_value_mc(mu, std::sqrt(std::max(var, 0.0)), best_y, cfg.tau,
                         z.col(0));
    }
    case AcqKind::ucb: {
      const auto [mu, var] = posterior(gp, x);
      return mu + std::sqrt(cfg.beta) * std::sqrt(std::max(var, 0.0));
    }
    case AcqKind::kg:
      return kg_value(gp, x, cfg);
    default:
      throw std::invalid_argument(
          "baseline_value: kind has no single-point form");
  }
}

// ---------------------------------------------------------------------------
// LookaHES objective.

// (1/r) sum_tau [ -f^tau(a^tau) + lambda * trajectory_cost(...) ] from a
// deterministic rollout; lower is better.  Costs here are the exact model
// (hard spotlight), not the optimizer's soft surrogate.
inline double lookahes_value(const PolicyParams& params, const PathBatch& batch,
                             const Dataset& data, const CostModel& cost,
                             const AcqConfig& cfg) {
  RolloutResult res =
      rollout(params, batch, data, cfg.horizon, cost, cfg.lambda);
  const RolloutGraph& rg = *res.tape;
  double acc = 0.0;
  std::vector<VectorXd> look(static_cast<std::size_t>(rg.L));
  for (int b = 0; b < rg.B; ++b) {
    for (int l = 0; l < rg.L; ++l) {
      const MatrixXd& q = res.lookahead_x[static_cast<std::size_t>(l)];
      look[static_cast<std::size_t>(l)] = q.col(q.cols() == 1 ? 0 : b);
    }
    const VectorXd a = res.actions.col(res.actions.cols() == 1 ? 0 : b);
    const double c = trajectory_cost(cost, data.points, look, a);
    acc += -rg.action_value->val(0, b) + cfg.lambda * c;
  }
  return acc / rg.B;
}

namespace acq_detail {

struct PathCandidate {
  VectorXd query, action;
  std::vector<VectorXd> lookahead;
  double value = 0.0;  // -f^tau(a) + lambda * exact cost (lower better)
  double cost = 0.0;   // exact trajectory cost
  int path = 0;
};

inline bool lex_less(const VectorXd& a, const VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

// Ordering: lower objective, then lower predicted cost, then lexicographic
// query (full determinism).  Non-finite values sort last.
inline bool candidate_less(const PathCandidate& a, const PathCandidate& b) {
  const double av = std::isfinite(a.value) ? a.value
                                           : std::numeric_limits<double>::max();
  const double bv = std::isfinite(b.value) ? b.value
                                           : std::numeric_limits<double>::max();
  if (av != bv) return av < bv;
  const double ac = std::isfinite(a.cost) ? a.cost
                                          : std::numeric_limits<double>::max();
  const double bc = std::isfinite(b.cost) ? b.cost
                                          : std::numeric_limits<double>::max();
  if (ac != bc) return ac < bc;
  return lex_less(a.query, b.query);
}

inline Eigen::Index bcol(const MatrixXd& m, int b) {
  return m.cols() == 1 ? 0 : b;
}

// Per-path first-step candidates from an optimized (already forwarded) graph.
inline std::vector<PathCandidate> extract_candidates(const RolloutGraph& rg,
                                                     const Dataset& data,
                                                     const CostModel& cost,
                                                     double lambda) {
  std::vector<PathCandidate> out;
  out.reserve(static_cast<std::size_t>(rg.B));
  const tape::Node* first =
      rg.L > 0 ? rg.query_nodes.front() : rg.action_coord;
  for (int b = 0; b < rg.B; ++b) {
    PathCandidate c;
    c.path = b;
    c.query = first->val.col(bcol(first->val, b));
    c.action = rg.action_coord->val.col(bcol(rg.action_coord->val, b));
    c.lookahead.reserve(rg.query_nodes.size());
    for (const tape::Node* q : rg.query_nodes)
      c.lookahead.push_back(q->val.col(bcol(q->val, b)));
    c.cost = trajectory_cost(cost, data.points, c.lookahead, c.action);
    c.value = -rg.action_value->val(0, b) + lambda * c.cost;
    out.push_back(std::move(c));
  }
  return out;
}

// Hard spotlight feasibility at commit time: keep a feasible query, otherwise
// retry with fresh sphere perturbations of the raw emission, and finally
// project onto the feasible ball around x_t.  Discrete domains snap to the
// nearest feasible cell center instead.
inline std::pair<VectorXd, bool> commit_feasible(
    const VectorXd& query, const VectorXd& raw_base, const VectorXd& x_t,
    const CostModel& cost, int categories, double magnitude,
    SeedStream stream) {
  if (cost.kind != CostKind::spotlight || feasible(cost, x_t, query))
    return {query, false};
  const int dim = static_cast<int>(query.size());
  if (categories > 0) {
    // Enumerate per-coordinate centers nearest to the query, preferring
    // feasible cells; x_t's own cell is feasible whenever x_t is a center.
    VectorXd best = query;
    double best_d = std::numeric_limits<double>::infinity();
    bool found = false;
    const auto total = static_cast<long>(std::pow(categories, dim));
    for (long cell = 0; cell < total; ++cell) {
      long rest = cell;
      VectorXd u(dim);
      for (int i = 0; i < dim; ++i) {
        u[i] = (rest % categories + 0.5) / categories;
        rest /= categories;
      }
      if (!feasible(cost, x_t, u)) continue;
      const double d = (u - query).norm();
      if (d < best_d || (d == best_d && lex_less(u, best))) {
        best_d = d;
        best = u;
        found = true;
      }
    }
    if (found) return {best, true};
    return {query, true};  // no feasible cell exists; flag and keep
  }
  for (int attempt = 0; attempt < 32; ++attempt) {
    VectorXd q = raw_base + magnitude * uniform_sphere(dim, stream);
    for (int i = 0; i < dim; ++i) q[i] = std::min(std::max(q[i], 0.0), 1.0);
    if (feasible(cost, x_t, q)) return {q, false};
  }
  const double dist = step_distance(cost, x_t, query);
  VectorXd q = x_t + (query - x_t) * (cost.r / dist);
  return {q, true};
}

}  // namespace acq_detail

// ---------------------------------------------------------------------------
// LookaHES optimizer.

// Adam on the soft rollout objective; the policy params persist (amortized
// warm starting across outer iterations).  Emits one candidate first step per
// trajectory and commits the best (objective, then cost, then lexicographic),
// with hard feasibility enforced at commit time.
inline Candidate optimize_lookahes(PolicyParams& params, const PathBatch& batch,
                                   const Dataset& data, const CostModel& cost,
                                   const AcqConfig& cfg) {
  const int L = cfg.horizon;
  RolloutOptions opts;
  opts.lambda = cfg.lambda;
  opts.perturb = cfg.perturb_magnitude > 0.0 &&
                 params.shape.head == PolicyHead::continuous;
  opts.free_actions = cfg.free_actions && L > 0;
  auto rg = build_rollout_graph(params.shape, &batch, data, L, cost, opts,
                                data.points);

  // Flat trainable vector: policy params, then any free action logits.
  VectorXd flat(rg->trainable_size());
  const Eigen::Index np = params.param_count();
  flat.head(np) = params.flatten();
  if (rg->trainable_size() > np) {
    SeedStream fs = cfg.base_sample_seed.fork(streams::msl_init);
    for (Eigen::Index i = np; i < flat.size(); ++i) flat[i] = fs.uniform(-2.0, 2.0);
  }

  // Frozen per-path perturbation offsets for this outer iteration.
  SeedStream vstream = cfg.base_sample_seed.fork(streams::vmf);
  if (!rg->vmf_nodes.empty()) {
    const VectorXd& x_t = data.points.back();
    if (cfg.vmf_kappa > 0.0) {  // mean = displacement of the raw emission
      rg->write_trainable(flat);
      rg->g.forward();
    }
    for (tape::AddConst* node : rg->vmf_nodes) {
      for (Eigen::Index b = 0; b < node->C.cols(); ++b) {
        VectorXd dir;
        if (cfg.vmf_kappa > 0.0) {
          const MatrixXd& raw = node->X->val;
          const VectorXd mean =
              raw.col(acq_detail::bcol(raw, static_cast<int>(b))) - x_t;
          dir = mean.norm() > 1e-12
                    ? vmf_direction(mean, cfg.vmf_kappa, vstream)
                    : uniform_sphere(params.shape.dim, vstream);
        } else {
          dir = uniform_sphere(params.shape.dim, vstream);
        }
        node->C.col(b) = cfg.perturb_magnitude * dir;
      }
    }
  }

  AdamState adam = AdamState::make(flat.size(), cfg.policy_lr);
  double best_val = std::numeric_limits<double>::infinity();
  VectorXd best_flat = flat;
  VectorXd grad;
  for (int it = 0; it <= cfg.grad_steps; ++it) {
    rg->write_trainable(flat);
    rg->g.forward();
    const double v = rg->objective->val(0, 0);
    if (v < best_val) {
      best_val = v;
      best_flat = flat;
    }
    if (it == cfg.grad_steps) break;
    rg->g.backward(rg->objective);
    rg->read_trainable_grad(grad);
    adam_step(flat, grad, adam);
  }
  rg->write_trainable(best_flat);
  rg->g.forward();
  params.unflatten(best_flat.head(np));

  auto cands =
      acq_detail::extract_candidates(*rg, data, cost, cfg.lambda);
  std::sort(cands.begin(), cands.end(), acq_detail::candidate_less);
  const acq_detail::PathCandidate& sel = cands.front();

  // Raw (pre-perturbation) first emission, for feasibility retries.
  VectorXd raw_base = sel.query;
  if (rg->first_step_raw != nullptr &&
      params.shape.head == PolicyHead::continuous) {
    const MatrixXd& raw = rg->first_step_raw->val;
    raw_base = raw.col(acq_detail::bcol(raw, sel.path));
  }
  auto [query, projected] = acq_detail::commit_feasible(
      sel.query, raw_base, data.points.back(), cost, cfg.discrete_categories,
      cfg.perturb_magnitude, vstream.fork(0xFEA5));

  Candidate out;
  out.query = query;
  out.action = sel.action;
  out.projected = projected;
  // Exact continuation cost through the committed query.
  std::vector<VectorXd> look = sel.lookahead;
  if (!look.empty()) look.front() = query;
  double c = trajectory_cost(cost, data.points, look, sel.action);
  if (!std::isfinite(c)) {
    // Later (never-executed) rollout steps may stay infeasible; report the
    // committed move's own cost so the candidate is finite.
    c = cost.kind == CostKind::nonmarkov_euclidean
            ? non_markov_cost(cost, data.points, query)
            : markov_cost(cost, data.points.back(), query);
  }
  out.predicted_cost = c;
  out.acq_value = -rg->action_value->val(0, sel.path) + cfg.lambda * c;
  out.path_actions.reserve(cands.size());
  for (const acq_detail::PathCandidate& pc : cands)
    out.path_actions.push_back(pc.action);
  return out;
}

// ---------------------------------------------------------------------------
// Free-variable multistep tree (per-path sequences, no policy network).

// Graph over r free per-path sequences x_{t+1:t+L}, a: logits -> sigmoid (or
// straight-through one-hots) -> costs + terminal path value.  Fantasized
// observations drop out: nothing consumes them when every step is free.
inline std::shared_ptr<RolloutGraph> build_msl_graph(
    int dim, const PathBatch* batch, const Dataset& data, int L,
    const CostModel& cost, double lambda, int categories,
    const std::vector<VectorXd>& observed_path) {
  if (observed_path.empty())
    throw std::invalid_argument("build_msl_graph: empty observed path");
  auto rg = std::make_shared<RolloutGraph>();
  rg->shape = PolicyShape{dim, 0,
                          categories > 0 ? PolicyHead::discrete
                                         : PolicyHead::continuous,
                          categories};
  rg->L = L;
  rg->B = batch->n_paths;
  rg->batch = batch;
  auto& g = rg->g;
  const int B = rg->B;

  auto* anchor = g.add<tape::Value>(dim, 1);
  anchor->val.col(0) = observed_path.back();
  const double obs_cum = cumulative_markov(cost, observed_path);
  const MatrixXd centers =
      categories > 0 ? policy_detail::cell_center_map(dim, categories)
                     : MatrixXd();

  std::vector<int> all_paths(static_cast<std::size_t>(B));
  for (int i = 0; i < B; ++i) all_paths[static_cast<std::size_t>(i)] = i;

  std::vector<tape::Node*> traj;
  for (int s = 0; s <= L; ++s) {
    auto* logits = g.add<tape::Value>(rg->shape.decoder_out(), B);
    rg->extra_nodes.push_back(logits);
    tape::Node* q =
        categories > 0
            ? static_cast<tape::Node*>(
                  g.add<tape::StraightThrough>(logits, dim, categories))
            : static_cast<tape::Node*>(g.add<tape::Sigmoid>(logits));
    tape::Node* coord =
        categories > 0 ? g.add<tape::LinMapConst>(centers, q) : q;
    traj.push_back(coord);
    if (s < L) {
      rg->query_nodes.push_back(coord);
      if (s == 0) rg->first_step_raw = coord;
    } else {
      rg->action_coord = coord;
      if (categories > 0) rg->action_onehot = q;
      if (L == 0) rg->first_step_raw = coord;
    }
  }
  rg->action_value = g.add<tape::PathEval>(rg->action_coord, batch, all_paths);
  rg->cost_node = g.add<tape::TrajCost>(anchor, traj, cost, obs_cum);
  rg->objective =
      g.add<tape::Objective>(rg->action_value, rg->cost_node, lambda, 1.0);
  return rg;
}

inline Candidate optimize_msl(const PathBatch& batch, const Dataset& data,
                              const CostModel& cost, const AcqConfig& cfg) {
  const int dim = batch.dim();
  auto rg = build_msl_graph(dim, &batch, data, cfg.horizon, cost, cfg.lambda,
                            cfg.discrete_categories, data.points);
  VectorXd flat(rg->trainable_size());
  SeedStream fs = cfg.base_sample_seed.fork(streams::msl_init);
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = fs.uniform(-2.0, 2.0);

  AdamState adam = AdamState::make(flat.size(), cfg.msl_lr);
  double best_val = std::numeric_limits<double>::infinity();
  VectorXd best_flat = flat;
  VectorXd grad;
  for (int it = 0; it <= cfg.grad_steps; ++it) {
    rg->write_trainable(flat);
    rg->g.forward();
    const double v = rg->objective->val(0, 0);
    if (v < best_val) {
      best_val = v;
      best_flat = flat;
    }
    if (it == cfg.grad_steps) break;
    rg->g.backward(rg->objective);
    rg->read_trainable_grad(grad);
    adam_step(flat, grad, adam);
  }
  rg->write_trainable(best_flat);
  rg->g.forward();

  auto cands = acq_detail::extract_candidates(*rg, data, cost, cfg.lambda);
  std::sort(cands.begin(), cands.end(), acq_detail::candidate_less);
  const acq_detail::PathCandidate& sel = cands.front();
  auto [query, projected] = acq_detail::commit_feasible(
      sel.query, sel.query, data.points.back(), cost, cfg.discrete_categories,
      cfg.perturb_magnitude, cfg.base_sample_seed.fork(streams::vmf));

  Candidate out;
  out.query = query;
  out.action = sel.action;
  out.projected = projected;
  std::vector<VectorXd> look = sel.lookahead;
  if (!look.empty()) look.front() = query;
  double c = trajectory_cost(cost, data.points, look, sel.action);
  if (!std::isfinite(c)) {
    c = cost.kind == CostKind::nonmarkov_euclidean
            ? non_markov_cost(cost, data.points, query)
            : markov_cost(cost, data.points.back(), query);
  }
  out.predicted_cost = c;
  out.acq_value = -rg->action_value->val(0, sel.path) + cfg.lambda * c;
  out.path_actions.reserve(cands.size());
  for (const acq_detail::PathCandidate& pc : cands)
    out.path_actions.push_back(pc.action);
  return out;
}

// ---------------------------------------------------------------------------
// Cost-penalized myopic baselines.

namespace acq_detail {

// Single-move penalty: exact form (hard spotlight) or the optimizer's soft
// hinge, both including the non-Markov discount for a fixed history.
inline double step_penalty(const CostModel& cost,
                           const std::vector<VectorXd>& history,
                           double hist_cum, const VectorXd& q, bool soft) {
  const VectorXd& x_t = history.back();
  if (cost.kind == CostKind::nonmarkov_euclidean) {
    CostModel base = cost;
    base.kind = CostKind::euclidean;
    double c = markov_cost(base, x_t, q);
    if (hist_cum > cost.m) c = std::max(c - cost.d, 0.0);
    return c;
  }
  if (cost.kind == CostKind::spotlight && soft)
    return soft_step_cost(cost, x_t, q);
  return markov_cost(cost, x_t, q);
}

// Subgradient of the soft penalty (0 on clamped steps and at dist = 0).
inline VectorXd step_penalty_grad(const CostModel& cost, const VectorXd& x_t,
                                  const VectorXd& q, double soft_value) {
  VectorXd g = VectorXd::Zero(q.size());
  if (soft_value <= 0.0) return g;
  const double rate =
      cost.kind == CostKind::spotlight ? kSoftSpotlight : cost.k;
  if (cost.p == 1) {
    for (Eigen::Index i = 0; i < q.size(); ++i)
      g[i] = rate * (q[i] > x_t[i] ? 1.0 : (q[i] < x_t[i] ? -1.0 : 0.0));
  } else {
    const double dist = (q - x_t).norm();
    if (dist > 0.0) g = (rate / dist) * (q - x_t);
  }
  return g;
}

}  // namespace acq_detail

// Multi-start ascent on Acqf(x) - lambda * c(x_t -> x); discrete domains are
// enumerated exactly.  Ties: higher value, then lower cost, then lexicographic.
inline Candidate optimize_baseline(AcqKind kind, const GpModel& gp,
                                   const Dataset& data, const CostModel& cost,
                                   const AcqConfig& cfg) {
  const int dim = gp.dim();
  const VectorXd x_t = data.points.back();
  const double best_y = data.observations_vector().maxCoeff();
  const double hist_cum = cumulative_markov(cost, data.points);

  // Enumerable cell-center grid for discrete domains (built once).
  MatrixXd cell_grid;
  if (cfg.discrete_categories > 0) {
    const int C = cfg.discrete_categories;
    const long total = static_cast<long>(std::pow(C, dim));
    if (total > 200000)
      throw std::invalid_argument("optimize_baseline: discrete grid too large");
    cell_grid.resize(dim, total);
    for (long cell = 0; cell < total; ++cell) {
      long rest = cell;
      for (int i = 0; i < dim; ++i) {
        cell_grid(i, cell) = (rest % C + 0.5) / C;
        rest /= C;
      }
    }
  }

  // Shared read-only estimator state.
  VectorXd pi_base;
  if (kind == AcqKind::pi) {
    pi_base = sobol_normal(1, cfg.mc_samples,
                           cfg.base_sample_seed.fork(streams::acq_base))
                  .col(0);
  }
  KgWorkspace kg_ws;
  if (kind == AcqKind::kg) {
    kg_ws = cfg.discrete_categories > 0
                ? kg_prepare(gp, cell_grid, 16, 0)
                : kg_prepare(gp, default_kg_grid(dim, cfg));
  }

  // Value (and gradient, for the continuous path) of the raw acquisition.
  auto acq_value = [&](const VectorXd& x) -> double {
    switch (kind) {
      case AcqKind::sr:
        return posterior(gp, x).first;
      case AcqKind::ei: {
        const auto [mu, var] = posterior(gp, x);
        return ei_analytic(mu, std::sqrt(std::max(var, 0.0)), best_y);
      }
      case AcqKind::pi: {
        const auto [mu, var] = posterior(gp, x);
        return pi_value_mc(mu, std::sqrt(std::max(var, 0.0)), best_y, cfg.tau,
                           pi_base);
      }
      case AcqKind::ucb: {
        const auto [mu, var] = posterior(gp, x);
        return mu + std::sqrt(cfg.beta) * std::sqrt(std::max(var, 0.0));
      }
      case AcqKind::kg:
        return kg_value_ws(gp, x, kg_ws);
      default:
        throw std::invalid_argument("optimize_baseline: not a myopic kind");
    }
  };
  auto acq_grad = [&](const VectorXd& x) -> VectorXd {
    switch (kind) {
      case AcqKind::sr:
        return posterior_mean_grad(gp, x);
      case AcqKind::ei: {
        const auto [mu, var] = posterior(gp, x);
        const double sigma = std::sqrt(std::max(var, 0.0));
        const auto [dmu, dsd] = posterior_grads(gp, x);
        if (sigma <= 1e-12) return mu > best_y ? dmu : VectorXd::Zero(dim).eval();
        const double z = (mu - best_y) / sigma;
        return normal_cdf(z) * dmu + normal_pdf(z) * dsd;
      }
      case AcqKind::pi: {
        const auto [mu, var] = posterior(gp, x);
        const double sigma = std::sqrt(std::max(var, 0.0));
        const auto [dmu, dsd] = posterior_grads(gp, x);
        if (sigma <= 1e-12) return VectorXd::Zero(dim).eval();
        VectorXd g = VectorXd::Zero(dim);
        for (Eigen::Index i = 0; i < pi_base.size(); ++i) {
          const double f = mu + sigma * pi_base[i];
          const double s = 1.0 / (1.0 + std::exp(-(f - best_y) / cfg.tau));
          g += (s * (1.0 - s) / cfg.tau) * (dmu + pi_base[i] * dsd);
        }
        return (g / static_cast<double>(pi_base.size())).eval();
      }
      case AcqKind::ucb: {
        const auto [dmu, dsd] = posterior_grads(gp, x);
        return (dmu + std::sqrt(cfg.beta) * dsd).eval();
      }
      case AcqKind::kg: {  // central differences
        VectorXd g(dim);
        const double h = 1e-3;
        for (int i = 0; i < dim; ++i) {
          VectorXd hi = x, lo = x;
          hi[i] = std::min(x[i] + h, 1.0);
          lo[i] = std::max(x[i] - h, 0.0);
          const double span = hi[i] - lo[i];
          g[i] = span > 0.0
                     ? (kg_value_ws(gp, hi, kg_ws) - kg_value_ws(gp, lo, kg_ws)) /
                           span
                     : 0.0;
        }
        return g;
      }
      default:
        throw std::invalid_argument("optimize_baseline: not a myopic kind");
    }
  };

  struct Slot {
    double value = -std::numeric_limits<double>::infinity();
    double pen = std::numeric_limits<double>::infinity();
    VectorXd q;
  };

  const auto slot_better = [](const Slot& s, const Slot& b) {
    if (s.value != b.value) return s.value > b.value;
    if (s.pen != b.pen) return s.pen < b.pen;
    return acq_detail::lex_less(s.q, b.q);
  };

  Slot best;
  if (cfg.discrete_categories > 0) {
    const long total = cell_grid.cols();
    std::vector<Slot> slots(static_cast<std::size_t>(total));
    parallel_for(static_cast<int>(total), cfg.threads, [&](int cell) {
      const VectorXd u = cell_grid.col(cell);
      const double pen =
          acq_detail::step_penalty(cost, data.points, hist_cum, u, false);
      if (!std::isfinite(pen)) return;  // infeasible cell
      Slot& s = slots[static_cast<std::size_t>(cell)];
      s.q = u;
      s.pen = pen;
      s.value = acq_value(u) - cfg.lambda * pen;
    });
    for (const Slot& s : slots) {
      if (s.q.size() == 0) continue;
      if (best.q.size() == 0 || slot_better(s, best)) best = s;
    }
    if (best.q.size() == 0) {
      // Every cell infeasible (radius tighter than the lattice): snap to the
      // cell nearest x_t and flag the fallback.
      Eigen::Index arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < cell_grid.cols(); ++j) {
        const double d = (cell_grid.col(j) - x_t).norm();
        if (d < dmin) {
          dmin = d;
          arg = j;
        }
      }
      Candidate out;
      out.query = cell_grid.col(arg);
      out.action = kind == AcqKind::kg
                       ? kg_ws.xstar
                       : posterior_mean_argmax(gp, cell_grid, 0).x;
      out.acq_value = acq_value(out.query);
      out.predicted_cost = 0.0;
      out.projected = true;
      return out;
    }
  } else {
    const int n_starts = cfg.restarts + 1;  // Sobol starts plus x_t itself
    auto starts = sobol_points(dim, cfg.restarts,
                               cfg.base_sample_seed.fork(streams::restart_base));
    starts.push_back(x_t);
    std::vector<Slot> slots(static_cast<std::size_t>(n_starts));
    parallel_for(n_starts, cfg.threads, [&](int s) {
      VectorXd x = starts[static_cast<std::size_t>(s)];
      AdamState adam = AdamState::make(dim, cfg.baseline_lr);
      Slot local;
      const int steps = cfg.grad_steps;
      for (int it = 0; it <= steps; ++it) {
        const double a = acq_value(x);
        const double pen_exact =
            acq_detail::step_penalty(cost, data.points, hist_cum, x, false);
        if (std::isfinite(pen_exact)) {
          const Slot here{a - cfg.lambda * pen_exact, pen_exact, x};
          if (local.q.size() == 0 || slot_better(here, local)) local = here;
        }
        if (it == steps) break;
        const double pen_soft =
            acq_detail::step_penalty(cost, data.points, hist_cum, x, true);
        VectorXd g = acq_grad(x) -
                     cfg.lambda * acq_detail::step_penalty_grad(cost, x_t, x,
                                                                pen_soft);
        VectorXd neg = -g;
        adam_step(x, neg, adam);
        for (int i = 0; i < dim; ++i) x[i] = std::min(std::max(x[i], 0.0), 1.0);
      }
      slots[static_cast<std::size_t>(s)] = std::move(local);
    });
    for (const Slot& s : slots) {
      if (s.q.size() == 0) continue;
      if (best.q.size() == 0 || slot_better(s, best)) best = s;
    }
    if (best.q.size() == 0) {
      // No start ever reached feasibility (tiny spotlight radius): project.
      best.q = x_t;
      best.pen = 0.0;
      best.value = acq_value(x_t);
    }
  }

  auto [query, projected] = acq_detail::commit_feasible(
      best.q, best.q, x_t, cost, cfg.discrete_categories,
      cfg.perturb_magnitude, cfg.base_sample_seed.fork(streams::vmf));
  Candidate out;
  out.query = query;
  out.projected = projected;
  if (projected) {
    best.pen = acq_detail::step_penalty(cost, data.points, hist_cum, query, false);
    best.value = acq_value(query) - cfg.lambda * best.pen;
  }
  out.acq_value = best.value;
  out.predicted_cost = best.pen;
  // Bayes action under the negated-value loss: the posterior-mean argmax.
  if (kind == AcqKind::kg) {
    out.action = kg_ws.xstar;
  } else if (cfg.discrete_categories > 0) {
    out.action = posterior_mean_argmax(gp, cell_grid, 0).x;
  } else {
    out.action = posterior_mean_argmax(gp, default_kg_grid(dim, cfg), 10).x;
  }
  return out;
}

}  // namespace lookahes

#endif  // LOOKAHES_ACQUISITION_HPP
