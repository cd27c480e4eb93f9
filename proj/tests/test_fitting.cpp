#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qkdlink/fitting.hpp"
#include "qkdlink/qber_fit.hpp"
#include "qkdlink/rng.hpp"

using namespace qkdlink;
using namespace qkdlink::fitting;

namespace {

FitProblem linear_problem() {
  FitProblem p;
  p.names = {"a", "b"};
  p.model = [](std::span<const double> q, double x) { return q[0] * x + q[1]; };
  for (int i = 0; i < 10; ++i) p.data.push_back({double(i), 3.0 * i - 2.0, 1.0});
  p.initial = {0.0, 0.0};
  p.bounds = {{-10.0, 10.0}, {-10.0, 10.0}};
  return p;
}

FitProblem exp_decay_problem(double noise_scale, std::uint64_t seed) {
  FitProblem p;
  p.names = {"amp", "rate"};
  p.model = [](std::span<const double> q, double x) { return q[0] * std::exp(-q[1] * x); };
  StreamRng rng(seed, 0);
  for (int i = 0; i < 40; ++i) {
    const double x = 0.1 * i;
    p.data.push_back({x, 2.5 * std::exp(-1.3 * x) + noise_scale * rng.normal(), 1.0});
  }
  p.initial = {1.0, 0.5};
  p.bounds = {{0.0, 5.0}, {0.0, 4.0}};
  return p;
}

std::vector<QberPoint> synth_qber(const QberCurveSetup& s, double pd, double e) {
  std::vector<QberPoint> pts;
  for (double db = 0.0; db <= 30.0; db += 3.0) pts.push_back({db, qber_model(s, pd, e, db), 1.0});
  return pts;
}

}  // namespace

TEST(LeastSquares, LinearModelExact) {
  const auto r = least_squares(linear_problem());
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.param("a"), 3.0, 1e-10);
  EXPECT_NEAR(r.param("b"), -2.0, 1e-10);
  EXPECT_NEAR(r.residual_norm, 0.0, 1e-9);
}

TEST(LeastSquares, StartingAtTheAnswerNeedsNoWork) {
  auto p = linear_problem();
  p.initial = {3.0, -2.0};
  const auto r = least_squares(p);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.residual_norm, 0.0);
}

TEST(LeastSquares, CostIsMonotoneAndDeterministic) {
  const auto p = exp_decay_problem(0.02, 11);
  const auto a = least_squares(p);
  const auto b = least_squares(p);
  ASSERT_GE(a.cost_history.size(), 2u);
  for (std::size_t i = 1; i < a.cost_history.size(); ++i) EXPECT_LE(a.cost_history[i], a.cost_history[i - 1]);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.residual_norm, b.residual_norm);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(LeastSquares, UncertaintiesCoverTruth) {
  const auto r = least_squares(exp_decay_problem(0.02, 5));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.param("amp"), 2.5, 4.0 * r.error("amp"));
  EXPECT_NEAR(r.param("rate"), 1.3, 4.0 * r.error("rate"));
  EXPECT_GT(r.error("amp"), 0.0);
  EXPECT_LT(r.error("amp"), 0.1);
}

TEST(LeastSquares, BoundsAreEnforced) {
  auto p = linear_problem();
  p.bounds = {{-10.0, 2.0}, {-10.0, 10.0}};
  const auto r = least_squares(p);
  EXPECT_LE(r.param("a"), 2.0);
  EXPECT_GE(r.param("a"), -10.0);
  EXPECT_NEAR(r.param("a"), 2.0, 1e-12);
}

TEST(LeastSquares, ExhaustedIterationsReportNotConverged) {
  const auto p = exp_decay_problem(0.02, 3);
  const auto r = least_squares(p, {1e-10, 1});
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
}

TEST(LeastSquares, RejectsMalformedProblems) {
  auto p = linear_problem();
  p.initial = {20.0, 0.0};
  EXPECT_THROW(least_squares(p), std::invalid_argument);
  p = linear_problem();
  p.data.resize(1);
  EXPECT_THROW(least_squares(p), std::invalid_argument);
  p = linear_problem();
  p.bounds.pop_back();
  EXPECT_THROW(least_squares(p), std::invalid_argument);
}

TEST(Jacobian, MatchesAnalyticDerivatives) {
  const auto p = exp_decay_problem(0.0, 1);
  const std::vector<double> at = {2.5, 1.3};
  const auto J = jacobian(p, at);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double x = p.data[i].x;
    const double d_amp = std::exp(-1.3 * x);
    const double d_rate = -2.5 * x * std::exp(-1.3 * x);
    EXPECT_NEAR(J(i, 0), d_amp, 1e-6 * std::max(1.0, std::abs(d_amp)));
    EXPECT_NEAR(J(i, 1), d_rate, 1e-6 * std::max(1.0, std::abs(d_rate)));
  }
}

TEST(Jacobian, OneSidedAtBounds) {
  auto p = exp_decay_problem(0.0, 1);
  const std::vector<double> at = {5.0, 0.0};  // both on a bound
  const auto J = jacobian(p, at);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    EXPECT_NEAR(J(i, 0), 1.0, 1e-6);
    EXPECT_NEAR(J(i, 1), -5.0 * p.data[i].x, 1e-5);
  }
}

TEST(GridOracle, LeastSquaresIsNoWorseThanGrid) {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const auto p = exp_decay_problem(0.05, seed);
    const auto grid = grid_oracle(p, 201);
    const auto fit = least_squares(p);
    // Slack: cost change across one grid cell around the grid optimum.
    const double cell_amp = 5.0 / 200.0, cell_rate = 4.0 / 200.0;
    std::vector<double> nudged = {grid[0] + cell_amp, grid[1] + cell_rate};
    const double slack = std::abs(weighted_cost(p, nudged) - weighted_cost(p, grid));
    EXPECT_LE(weighted_cost(p, fit.params), weighted_cost(p, grid) + slack);
  }
}

TEST(GridOracle, ConvexOneParameterAgreesWithinACell) {
  FitProblem p;
  p.model = [](std::span<const double> q, double x) { return q[0] * x * x; };
  for (int i = 1; i <= 8; ++i) p.data.push_back({double(i), 0.7 * i * i + 0.01 * ((i % 3) - 1), 1.0});
  p.initial = {0.1};
  p.bounds = {{0.0, 2.0}};
  const auto grid = grid_oracle(p, 401);
  const auto fit = least_squares(p);
  EXPECT_NEAR(fit.params[0], grid[0], 2.0 / 400.0);
}

TEST(GridOracle, Guards) {
  FitProblem p;
  p.model = [](std::span<const double> q, double x) { return q[0] + q[1] * x + q[2] * x * x + q[3] * x * x * x; };
  for (int i = 0; i < 8; ++i) p.data.push_back({double(i), double(i), 1.0});
  p.initial = {0, 0, 0, 0};
  p.bounds = {{-1, 1}, {-1, 1}, {-1, 1}, {-1, 1}};
  EXPECT_THROW(grid_oracle(p, 5), std::invalid_argument);
  auto q = linear_problem();
  EXPECT_THROW(grid_oracle(q, 1), std::invalid_argument);
  q.bounds[0].hi = INFINITY;
  EXPECT_THROW(grid_oracle(q, 10), std::invalid_argument);
}

// Rescaling x by k with bounds/initials rescaled accordingly rescales the
// fitted rate by 1/k.
TEST(LeastSquares, ScaleEquivariance) {
  const auto p = exp_decay_problem(0.02, 9);
  const double k = 1000.0;
  FitProblem s = p;
  for (auto& d : s.data) d.x *= k;
  s.initial[1] /= k;
  s.bounds[1] = {p.bounds[1].lo / k, p.bounds[1].hi / k};
  const auto a = least_squares(p);
  const auto b = least_squares(s);
  EXPECT_NEAR(b.params[0], a.params[0], 1e-6 * a.params[0]);
  EXPECT_NEAR(b.params[1] * k, a.params[1], 1e-6 * a.params[1]);
}

TEST(QberFit, RecoversSpsParameters) {
  const QberCurveSetup s{SourceKind::Sps, 0.08, 0.24, rates::LossConvention::ChannelOnly};
  const auto r = fit_qber_curve(synth_qber(s, 2e-6, 0.039), s);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.param("p_dark"), 2e-6, 0.05 * 2e-6);
  EXPECT_NEAR(r.param("e_det"), 0.039, 0.05 * 0.039);
}

TEST(QberFit, RecoversWcpParameters) {
  const QberCurveSetup s{SourceKind::Wcp, 0.5, 0.24, rates::LossConvention::ChannelOnly};
  const auto r = fit_qber_curve(synth_qber(s, 2e-6, 0.008), s);
  EXPECT_NEAR(r.param("e_det"), 0.008, 0.001);
  EXPECT_NEAR(r.param("p_dark"), 2e-6, 0.05 * 2e-6);
}

TEST(QberFit, ZeroDarkCountsLandOnTheBound) {
  const QberCurveSetup s{SourceKind::Sps, 0.08, 0.24, rates::LossConvention::ChannelOnly};
  const auto r = fit_qber_curve(synth_qber(s, 0.0, 0.039), s);
  EXPECT_GE(r.param("p_dark"), 0.0);
  EXPECT_LT(r.param("p_dark"), 1e-9);
  EXPECT_NEAR(r.param("e_det"), 0.039, 1e-6);
}

TEST(QberFit, Preconditions) {
  const QberCurveSetup s;
  EXPECT_THROW(fit_qber_curve({{0, 0.04, 1}, {5, 0.04, 1}}, s), std::invalid_argument);
  EXPECT_THROW(fit_qber_curve({{0, 0.04, 1}, {5, 0.04, 1}, {10, 0.05, 1}}, s), std::invalid_argument);
}
