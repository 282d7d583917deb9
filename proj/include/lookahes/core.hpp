#ifndef LOOKAHES_CORE_HPP
#define LOOKAHES_CORE_HPP

// Domains and the running dataset.  All optimization happens in normalized
// coordinates on [0,1]^dim; raw coordinates appear only at the environment
// boundary.

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahes/rng.hpp"

namespace lookahes {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Axis-aligned box in raw coordinates.
struct BoxDomain {
  int dim = 0;
  VectorXd lower;  // size dim
  VectorXd upper;  // size dim, upper > lower per coordinate

  static BoxDomain cube(int dim, double lo, double hi) {
    BoxDomain b;
    b.dim = dim;
    b.lower = VectorXd::Constant(dim, lo);
    b.upper = VectorXd::Constant(dim, hi);
    return b;
  }
};

// Raw -> [0,1]^dim.  Throws std::domain_error naming the offending coordinate
// if a value falls outside the box.
inline VectorXd normalize(const BoxDomain& box, const VectorXd& raw) {
  if (raw.size() != box.dim)
    throw std::invalid_argument("normalize: point has dimension " +
                                std::to_string(raw.size()) + ", domain has " +
                                std::to_string(box.dim));
  VectorXd unit(box.dim);
  for (int i = 0; i < box.dim; ++i) {
    if (raw[i] < box.lower[i] || raw[i] > box.upper[i])
      throw std::domain_error("normalize: coordinate " + std::to_string(i) +
                              " = " + std::to_string(raw[i]) +
                              " outside [" + std::to_string(box.lower[i]) + ", " +
                              std::to_string(box.upper[i]) + "]");
    unit[i] = (raw[i] - box.lower[i]) / (box.upper[i] - box.lower[i]);
  }
  return unit;
}

// [0,1]^dim -> raw.  Round-trips with normalize to ~1e-12.
inline VectorXd denormalize(const BoxDomain& box, const VectorXd& unit) {
  if (unit.size() != box.dim)
    throw std::invalid_argument("denormalize: point has dimension " +
                                std::to_string(unit.size()) + ", domain has " +
                                std::to_string(box.dim));
  VectorXd raw(box.dim);
  for (int i = 0; i < box.dim; ++i) {
    if (unit[i] < 0.0 || unit[i] > 1.0)
      throw std::domain_error("denormalize: coordinate " + std::to_string(i) +
                              " = " + std::to_string(unit[i]) + " outside [0, 1]");
    raw[i] = box.lower[i] + unit[i] * (box.upper[i] - box.lower[i]);
  }
  return raw;
}

// Categorical grid: `dims` coordinates, each one of `categories` cells.
// A cell c maps to the continuous center (c + 0.5) / categories, so discrete
// problems reuse the continuous surrogate and cost machinery.
struct DiscreteDomain {
  int dims = 0;
  int categories = 0;

  double center(int cell) const {
    if (cell < 0 || cell >= categories)
      throw std::domain_error("DiscreteDomain: cell " + std::to_string(cell) +
                              " outside [0, " + std::to_string(categories) + ")");
    return (static_cast<double>(cell) + 0.5) / static_cast<double>(categories);
  }

  // Nearest cell for a continuous coordinate in [0,1].
  int cell_of(double u) const {
    int c = static_cast<int>(u * categories);
    if (c < 0) c = 0;
    if (c >= categories) c = categories - 1;
    return c;
  }

  // One-hot block layout: dims blocks of `categories` rows each.
  VectorXd onehot(const std::vector<int>& cells) const {
    if (static_cast<int>(cells.size()) != dims)
      throw std::invalid_argument("DiscreteDomain::onehot: wrong number of cells");
    VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(dims) * categories);
    for (int i = 0; i < dims; ++i) v[i * categories + cells[i]] = 1.0;
    return v;
  }

  VectorXd centers(const std::vector<int>& cells) const {
    VectorXd x(dims);
    for (int i = 0; i < dims; ++i) x[i] = center(cells[i]);
    return x;
  }
};

// Observed history.  Points live in [0,1]^dim; step_costs are the observed
// (possibly noisy, clamped nonnegative) per-move costs along the query path.
struct Dataset {
  std::vector<VectorXd> points;
  std::vector<double> observations;
  std::vector<double> step_costs;

  std::size_t size() const { return points.size(); }

  void append(const VectorXd& x, double y, double step_cost) {
    if (step_cost < 0.0)
      throw std::invalid_argument("Dataset::append: step cost must be nonnegative");
    points.push_back(x);
    observations.push_back(y);
    step_costs.push_back(step_cost);
  }

  // Points as a dim x n matrix (column per observation).
  MatrixXd points_matrix() const {
    if (points.empty()) return MatrixXd();
    MatrixXd X(points.front().size(), points.size());
    for (std::size_t j = 0; j < points.size(); ++j) X.col(j) = points[j];
    return X;
  }

  VectorXd observations_vector() const {
    return Eigen::Map<const VectorXd>(observations.data(),
                                      static_cast<Eigen::Index>(observations.size()));
  }
};

}  // namespace lookahes

#endif  // LOOKAHES_CORE_HPP
