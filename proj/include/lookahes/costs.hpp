#ifndef LOOKAHES_COSTS_HPP
#define LOOKAHES_COSTS_HPP

// Dynamic query costs.  A move from prev to cur costs
//   c_markov = max(k * (||cur - prev||_p - r), 0)        (+ noise if observed)
// with the spotlight kind modeling k = infinity as a hard feasibility radius
// (moves beyond r are infeasible, reported as +infinity, never an exception).
// The non-Markov kind discounts the Markov cost by d once the cumulative
// Markov cost of the history exceeds the threshold m; each discounted step is
// clamped at zero (costs are expenditures).
//
// Inside differentiable objectives the spotlight wall is replaced by a soft
// hinge k_soft * max(dist - r, 0); hard feasibility applies only when a query
// is committed.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/rng.hpp"

namespace lookahes {

enum class CostKind { euclidean, manhattan, spotlight, nonmarkov_euclidean };

inline const char* cost_kind_name(CostKind k) {
  switch (k) {
    case CostKind::euclidean: return "euclidean";
    case CostKind::manhattan: return "manhattan";
    case CostKind::spotlight: return "spotlight";
    case CostKind::nonmarkov_euclidean: return "nonmarkov_euclidean";
  }
  return "?";
}

struct CostModel {
  CostKind kind = CostKind::euclidean;
  double k = 1.0;       // rate (ignored by spotlight: conceptually infinite)
  int p = 2;            // norm order (1 or 2)
  double r = 0.0;       // free radius
  double d = 0.0;       // non-Markov discount
  double m = 0.0;       // non-Markov cumulative threshold
  double cost_noise_sigma = 0.0;
  double lambda = 1.0;  // Lagrange multiplier on the cost term
};

// Soft-spotlight hinge steepness used inside differentiable objectives.
constexpr double kSoftSpotlight = 100.0;

inline CostModel make_cost_model(CostKind kind) {
  CostModel m;
  m.kind = kind;
  switch (kind) {
    case CostKind::euclidean:
    case CostKind::nonmarkov_euclidean:
      m.p = 2;
      m.r = 0.0;
      break;
    case CostKind::manhattan:
      m.p = 1;
      m.r = 0.0;
      break;
    case CostKind::spotlight:
      m.p = 2;
      m.r = 0.1;
      break;
  }
  return m;
}

inline double step_distance(const CostModel& model, const VectorXd& prev,
                            const VectorXd& cur) {
  if (prev.size() != cur.size())
    throw std::invalid_argument("step_distance: dimension mismatch");
  if (model.p == 1) return (cur - prev).lpNorm<1>();
  if (model.p == 2) return (cur - prev).norm();
  throw std::invalid_argument("step_distance: norm order must be 1 or 2");
}

// True unless a spotlight move leaves the closed ball of radius r.
inline bool feasible(const CostModel& model, const VectorXd& prev,
                     const VectorXd& cur) {
  if (model.kind != CostKind::spotlight) return true;
  return step_distance(model, prev, cur) <= model.r;
}

// Single-move Markov cost.  Spotlight: 0 inside the free radius, +infinity
// (the distinguished infeasible value) outside.  When a noise stream is
// given, draws one Gaussian sample of std cost_noise_sigma (observed costs
// only; optimization never passes a stream).
inline double markov_cost(const CostModel& model, const VectorXd& prev,
                          const VectorXd& cur, SeedStream* noise_stream = nullptr) {
  if (model.kind == CostKind::nonmarkov_euclidean)
    throw std::invalid_argument("markov_cost: use non_markov_cost for this kind");
  const double dist = step_distance(model, prev, cur);
  double c;
  if (model.kind == CostKind::spotlight) {
    if (dist > model.r) return std::numeric_limits<double>::infinity();
    c = 0.0;
  } else {
    c = std::max(model.k * (dist - model.r), 0.0);
  }
  if (noise_stream && model.cost_noise_sigma > 0.0)
    c += model.cost_noise_sigma * noise_stream->normal();
  return c;
}

// Cumulative Markov cost along consecutive history pairs (noise-free).
inline double cumulative_markov(const CostModel& model,
                                const std::vector<VectorXd>& history) {
  CostModel base = model;
  base.kind = CostKind::euclidean;
  base.p = model.p;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < history.size(); ++i)
    total += markov_cost(base, history[i], history[i + 1]);
  return total;
}

// Non-Markov step cost: the Markov cost of history.back() -> cur, minus the
// discount d when the cumulative Markov cost of the history (pairs strictly
// before this move) exceeds m.  Discounted steps clamp at zero.
inline double non_markov_cost(const CostModel& model,
                              const std::vector<VectorXd>& history,
                              const VectorXd& cur) {
  if (model.kind != CostKind::nonmarkov_euclidean)
    throw std::invalid_argument("non_markov_cost: kind must be nonmarkov_euclidean");
  if (history.empty())
    throw std::invalid_argument("non_markov_cost: history must be nonempty");
  CostModel base = model;
  base.kind = CostKind::euclidean;
  double c = markov_cost(base, history.back(), cur);
  if (cumulative_markov(model, history) > model.m) c = std::max(c - model.d, 0.0);
  return c;
}

// Total cost of the continuation observed -> lookahead -> action.  Only moves
// after the last observed point contribute (sunk costs excluded); the
// non-Markov indicator still sees the full path history.  Spotlight
// infeasibility propagates as +infinity.
inline double trajectory_cost(const CostModel& model,
                              const std::vector<VectorXd>& observed,
                              const std::vector<VectorXd>& lookahead,
                              const VectorXd& action) {
  if (observed.empty())
    throw std::invalid_argument("trajectory_cost: observed path must be nonempty");
  std::vector<VectorXd> path = observed;
  path.reserve(observed.size() + lookahead.size() + 1);
  double total = 0.0;
  auto step = [&](const VectorXd& next) {
    double c;
    if (model.kind == CostKind::nonmarkov_euclidean) {
      c = non_markov_cost(model, path, next);
    } else {
      c = markov_cost(model, path.back(), next);
    }
    total += c;
    path.push_back(next);
  };
  for (const VectorXd& x : lookahead) step(x);
  step(action);
  return total;
}

// Differentiable stand-in for one step's cost (noise-free).  Spotlight uses
// the soft hinge; other kinds use their exact piecewise-linear form.  The
// subgradient at the hinge kink is taken as 0.
inline double soft_step_cost(const CostModel& model, const VectorXd& prev,
                             const VectorXd& cur) {
  const double dist = step_distance(model, prev, cur);
  if (model.kind == CostKind::spotlight)
    return kSoftSpotlight * std::max(dist - model.r, 0.0);
  return std::max(model.k * (dist - model.r), 0.0);
}

}  // namespace lookahes

#endif  // LOOKAHES_COSTS_HPP
