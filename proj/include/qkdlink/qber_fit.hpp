#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qkdlink/fitting.hpp"
#include "qkdlink/rates.hpp"

namespace qkdlink::fitting {

enum class SourceKind { Sps, Wcp };

struct QberPoint {
  double loss_db = 0.0;
  double qber = 0.0;
  double weight = 1.0;
};

// Known constants of a QBER-vs-loss fit: the source mean photon number and
// how the loss axis maps onto the total transmittance.
struct QberCurveSetup {
  SourceKind kind = SourceKind::Sps;
  double mu = 0.08;
  double eta_bob = 0.24;
  rates::LossConvention convention = rates::LossConvention::ChannelOnly;
};

// Detected-signal probability per pulse, without dark counts.
inline double signal_at(const QberCurveSetup& s, double loss_db) {
  double eta = rates::db_to_linear(loss_db);
  if (s.convention == rates::LossConvention::ChannelOnly) eta *= s.eta_bob;
  return s.kind == SourceKind::Sps ? eta * s.mu : -std::expm1(-eta * s.mu);
}

inline double qber_model(const QberCurveSetup& s, double p_dark, double e_det, double loss_db) {
  const double signal = signal_at(s, loss_db);
  return (p_dark / 2.0 + e_det * signal) / (p_dark + signal);
}

// Extracts (P_D, e_det) from measured QBERs. Initial guesses: e_det from the
// lowest-loss point, P_D by inverting the model at the highest-loss point.
inline FitResult fit_qber_curve(const std::vector<QberPoint>& points, const QberCurveSetup& setup,
                                LeastSquaresOptions options = {}) {
  if (points.size() < 3) throw std::invalid_argument("fit_qber_curve: need at least 3 loss points");
  const auto [lo_it, hi_it] = std::minmax_element(
      points.begin(), points.end(), [](const QberPoint& a, const QberPoint& b) { return a.loss_db < b.loss_db; });
  if (hi_it->loss_db < 20.0) throw std::invalid_argument("fit_qber_curve: need a point at >= 20 dB loss");

  const double e_guess = std::clamp(lo_it->qber, 1e-6, 0.49);
  const double signal_hi = signal_at(setup, hi_it->loss_db);
  double pd_guess = signal_hi * (hi_it->qber - e_guess) / std::max(0.5 - hi_it->qber, 1e-6);
  pd_guess = std::clamp(pd_guess, 1e-9, 1e-3);

  FitProblem problem;
  problem.names = {"p_dark", "e_det"};
  problem.initial = {pd_guess, e_guess};
  problem.bounds = {{0.0, 1e-2}, {0.0, 0.5}};
  for (const auto& pt : points) problem.data.push_back({pt.loss_db, pt.qber, pt.weight});
  problem.model = [setup](std::span<const double> q, double loss_db) {
    return qber_model(setup, q[0], q[1], loss_db);
  };
  return least_squares(problem, options);
}

}  // namespace qkdlink::fitting
