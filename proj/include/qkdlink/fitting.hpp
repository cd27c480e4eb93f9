#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qkdlink::fitting {

struct DataPoint {
  double x = 0.0;
  double y = 0.0;
  double weight = 1.0;
};

struct Bounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

using ModelFn = std::function<double(std::span<const double> params, double x)>;

struct FitProblem {
  ModelFn model;
  std::vector<DataPoint> data;
  std::vector<double> initial;
  std::vector<Bounds> bounds;
  std::vector<std::string> names;

  std::size_t dim() const { return initial.size(); }

  void validate() const {
    if (!model) throw std::invalid_argument("FitProblem: no model");
    if (initial.empty()) throw std::invalid_argument("FitProblem: no parameters");
    if (bounds.size() != initial.size()) throw std::invalid_argument("FitProblem: bounds/initial size mismatch");
    if (!names.empty() && names.size() != initial.size()) {
      throw std::invalid_argument("FitProblem: names/initial size mismatch");
    }
    if (data.size() < initial.size()) throw std::invalid_argument("FitProblem: fewer data points than parameters");
    for (std::size_t j = 0; j < initial.size(); ++j) {
      if (!(bounds[j].lo <= bounds[j].hi)) throw std::invalid_argument("FitProblem: empty bounds");
      if (!(initial[j] >= bounds[j].lo && initial[j] <= bounds[j].hi)) {
        throw std::invalid_argument("FitProblem: initial value outside bounds for parameter " + std::to_string(j));
      }
    }
    for (const auto& d : data) {
      if (!(d.weight >= 0.0) || !std::isfinite(d.x) || !std::isfinite(d.y)) {
        throw std::invalid_argument("FitProblem: non-finite data or negative weight");
      }
    }
  }
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> sigma;
  double residual_norm = 0.0;  // sqrt(sum w r^2)
  bool converged = false;
  int iterations = 0;
  std::vector<double> cost_history;  // cost after each accepted step, starting at the initial point

  double param(const std::string& name) const { return params.at(index_of(name)); }
  double error(const std::string& name) const { return sigma.at(index_of(name)); }

 private:
  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw std::out_of_range("FitResult: no parameter named " + name);
  }
};

struct LeastSquaresOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

// Fixed engine constants. Relative finite-difference step for the central
// difference Jacobian, and the Marquardt damping schedule.
inline constexpr double kJacobianStep = 1e-6;
inline constexpr double kLambdaInitial = 1e-3;
inline constexpr double kLambdaUp = 10.0;
inline constexpr double kLambdaDown = 0.1;
inline constexpr double kLambdaMax = 1e16;

inline double weighted_cost(const FitProblem& p, std::span<const double> params) {
  double c = 0.0;
  for (const auto& d : p.data) {
    const double r = p.model(params, d.x) - d.y;
    c += d.weight * r * r;
  }
  return c;
}

namespace detail {

// Relative step; near zero the scale falls back to a fraction of the bound
// span so the difference quotient does not drown in roundoff.
inline double step_for(double value, double lo, double hi) {
  const bool finite = std::isfinite(hi - lo);
  const double floor = finite ? 1e-4 * (hi - lo) : 1e-8;
  double h = kJacobianStep * std::max(std::abs(value), floor);
  if (finite) h = std::min(h, 0.25 * (hi - lo) + 1e-300);
  return h;
}

inline std::vector<double> clamp_to(const std::vector<double>& v, const std::vector<Bounds>& b) {
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = std::clamp(v[j], b[j].lo, b[j].hi);
  return out;
}

}  // namespace detail

// d model(x_i) / d param_j by central differences; one-sided at a bound.
inline Eigen::MatrixXd jacobian(const FitProblem& p, const std::vector<double>& params) {
  const std::size_t n = p.data.size();
  const std::size_t m = params.size();
  Eigen::MatrixXd jac(n, m);
  std::vector<double> plus = params;
  std::vector<double> minus = params;
  for (std::size_t j = 0; j < m; ++j) {
    const double h = detail::step_for(params[j], p.bounds[j].lo, p.bounds[j].hi);
    const double up = std::min(params[j] + h, p.bounds[j].hi);
    const double down = std::max(params[j] - h, p.bounds[j].lo);
    plus[j] = up;
    minus[j] = down;
    const double span = up - down;
    for (std::size_t i = 0; i < n; ++i) {
      jac(i, j) = span > 0.0 ? (p.model(plus, p.data[i].x) - p.model(minus, p.data[i].x)) / span : 0.0;
    }
    plus[j] = params[j];
    minus[j] = params[j];
  }
  return jac;
}

// Bounded Levenberg-Marquardt. Every accepted step strictly lowers the
// weighted cost; stops when the accepted step is below tol relative to the
// parameter vector or the cost reaches zero. Hitting max_iter leaves
// converged = false.
inline FitResult least_squares(const FitProblem& p, LeastSquaresOptions options = {}) {
  p.validate();
  const std::size_t n = p.data.size();
  const std::size_t m = p.dim();

  std::vector<double> x = detail::clamp_to(p.initial, p.bounds);
  double cost = weighted_cost(p, x);
  if (!std::isfinite(cost)) throw std::domain_error("least_squares: model not finite at the initial point");

  FitResult result;
  result.names = p.names;
  result.cost_history.push_back(cost);

  Eigen::VectorXd w(n);
  for (std::size_t i = 0; i < n; ++i) w(i) = p.data[i].weight;

  double lambda = kLambdaInitial;
  bool converged = cost == 0.0;
  int iter = 0;
  while (!converged && iter < options.max_iter) {
    ++iter;
    const Eigen::MatrixXd jac = jacobian(p, x);
    Eigen::VectorXd r(n);
    for (std::size_t i = 0; i < n; ++i) r(i) = p.model(x, p.data[i].x) - p.data[i].y;
    const Eigen::MatrixXd jtw = jac.transpose() * w.asDiagonal();
    const Eigen::MatrixXd normal = jtw * jac;
    const Eigen::VectorXd grad = jtw * r;

    bool accepted = false;
    while (!accepted && lambda <= kLambdaMax) {
      Eigen::MatrixXd damped = normal;
      for (std::size_t j = 0; j < m; ++j) damped(j, j) += lambda * std::max(normal(j, j), 1e-300);
      const Eigen::VectorXd delta = damped.ldlt().solve(-grad);
      std::vector<double> trial(m);
      for (std::size_t j = 0; j < m; ++j) trial[j] = x[j] + delta(j);
      trial = detail::clamp_to(trial, p.bounds);

      double step_norm = 0.0;
      double x_norm = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        step_norm += (trial[j] - x[j]) * (trial[j] - x[j]);
        x_norm += x[j] * x[j];
      }
      step_norm = std::sqrt(step_norm);
      x_norm = std::sqrt(x_norm);

      const double trial_cost = weighted_cost(p, trial);
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        x = std::move(trial);
        cost = trial_cost;
        result.cost_history.push_back(cost);
        lambda = std::max(lambda * kLambdaDown, 1e-15);
        accepted = true;
        if (step_norm <= options.tol * (x_norm + options.tol) || cost == 0.0) converged = true;
      } else {
        if (step_norm <= options.tol * (x_norm + options.tol)) {
          // Projected step vanished: no feasible descent left at this point.
          converged = true;
          break;
        }
        lambda *= kLambdaUp;
      }
    }
    if (!accepted && !converged) {
      // Damping exhausted without a decrease: the point is a minimum to
      // working precision.
      converged = true;
    }
  }

  result.params = x;
  result.iterations = iter;
  result.converged = converged;
  result.residual_norm = std::sqrt(cost);

  // Asymptotic covariance: (J^T W J)^-1 scaled by the residual variance.
  const Eigen::MatrixXd jac = jacobian(p, x);
  const Eigen::MatrixXd normal = jac.transpose() * w.asDiagonal() * jac;
  const Eigen::MatrixXd cov = normal.completeOrthogonalDecomposition().pseudoInverse();
  const double dof = n > m ? static_cast<double>(n - m) : 1.0;
  const double variance = cost / dof;
  result.sigma.resize(m);
  for (std::size_t j = 0; j < m; ++j) result.sigma[j] = std::sqrt(std::max(0.0, cov(j, j) * variance));
  return result;
}

// Exhaustive search on a regular grid spanning the (finite) bounds. Only used
// to validate least_squares; the cost grows as resolution^dim.
inline std::vector<double> grid_oracle(const FitProblem& p, int resolution) {
  p.validate();
  if (p.dim() > 3) throw std::invalid_argument("grid_oracle: at most 3 parameters");
  if (resolution < 2) throw std::invalid_argument("grid_oracle: resolution must be >= 2");
  for (const auto& b : p.bounds) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi)) throw std::invalid_argument("grid_oracle: bounds must be finite");
  }
  const std::size_t m = p.dim();
  std::vector<int> idx(m, 0);
  std::vector<double> point(m);
  std::vector<double> best(m);
  double best_cost = std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t j = 0; j < m; ++j) {
      point[j] = p.bounds[j].lo + (p.bounds[j].hi - p.bounds[j].lo) * idx[j] / (resolution - 1);
    }
    const double c = weighted_cost(p, point);
    if (c < best_cost) {
      best_cost = c;
      best = point;
    }
    std::size_t j = 0;
    while (j < m && ++idx[j] == resolution) idx[j++] = 0;
    if (j == m) break;
  }
  return best;
}

}  // namespace qkdlink::fitting
