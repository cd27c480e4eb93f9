#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace qkdlink::budget {

// Factors of mu_mol = eta_opt * eta_col * QY * eta_pump * ON_%.
struct EfficiencyBudget {
  double eta_opt_alice = 1.0;
  double eta_col = 1.0;
  double qy = 1.0;
  double eta_pump = 1.0;
  double on_frac = 1.0;
  double p_exc_inf = 0.75;
  double sat_param = 2.0;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(eta_opt_alice) || !unit(eta_col) || !unit(qy) || !unit(eta_pump) || !unit(on_frac) ||
        !unit(p_exc_inf)) {
      throw std::invalid_argument("EfficiencyBudget: every efficiency factor must lie in [0, 1]");
    }
    if (!(sat_param >= 0.0)) throw std::invalid_argument("EfficiencyBudget: saturation parameter must be >= 0");
  }

  // Forward product; the mean photon number these factors imply.
  double mu() const { return eta_opt_alice * eta_col * qy * eta_pump * on_frac; }
};

// eta_pump = P_e,inf * R(P)/R_inf. Without a measured rate ratio the pure
// saturation term s/(1+s) stands in for R(P)/R_inf.
inline double pump_efficiency(double p_exc_inf, double sat_param,
                              std::optional<double> measured_rate_ratio = std::nullopt) {
  if (!(sat_param >= 0.0)) throw std::invalid_argument("pump_efficiency: saturation parameter must be >= 0");
  if (measured_rate_ratio) {
    if (!(*measured_rate_ratio >= 0.0 && *measured_rate_ratio <= 1.0)) {
      throw std::invalid_argument("pump_efficiency: rate ratio outside [0, 1]");
    }
    return p_exc_inf * *measured_rate_ratio;
  }
  if (std::isinf(sat_param)) return p_exc_inf;
  return p_exc_inf * sat_param / (1.0 + sat_param);
}

// QY = mu_mol / (eta_opt * eta_col * eta_pump * ON_%). The budget's own qy
// field is ignored.
inline double extract_qy(double mu_mol, const EfficiencyBudget& b) {
  const double divisor = b.eta_opt_alice * b.eta_col * b.eta_pump * b.on_frac;
  if (!(divisor > 0.0)) throw std::invalid_argument("extract_qy: a divisor factor is zero");
  return mu_mol / divisor;
}

// mu_ref from the improved (starred) optics, collection and pumping with the
// extracted QY and the measured ON fraction.
inline double extrapolate_mu_ref(const EfficiencyBudget& starred) {
  starred.validate();
  return starred.mu();
}

enum class Channel : int { H = 0, V = 1, D = 2, A = 3 };

// Row i: detection-channel distribution for prepared state i (H, V, D, A).
class OutcomeMatrix {
 public:
  using Rows = std::array<std::array<double, 4>, 4>;

  explicit OutcomeMatrix(const Rows& rows) : rows_(rows) {
    for (std::size_t i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (double v : rows_[i]) {
        if (!(v >= 0.0)) throw std::invalid_argument("OutcomeMatrix: negative or NaN entry in row " + std::to_string(i));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("OutcomeMatrix: row " + std::to_string(i) + " sums to " + std::to_string(sum));
      }
    }
  }

  const Rows& rows() const { return rows_; }
  double operator()(std::size_t state, std::size_t channel) const { return rows_.at(state).at(channel); }

 private:
  Rows rows_;
};

enum class IdealConvention {
  Sifted,     // all mass on the matched channel
  Apparatus,  // pre-sifting: wrong-basis arm splits evenly
};

// Ideal BB84 outcome matrix. In apparatus mode a prepared state reaches the
// matched arm with probability 1 - basis_split (H/V) or basis_split (D/A) and
// the other arm's two detectors evenly.
inline OutcomeMatrix ideal_matrix(IdealConvention convention, double basis_split = 0.5) {
  if (!(basis_split > 0.0 && basis_split < 1.0)) throw std::invalid_argument("ideal_matrix: basis_split outside (0, 1)");
  OutcomeMatrix::Rows rows{};
  for (std::size_t s = 0; s < 4; ++s) {
    if (convention == IdealConvention::Sifted) {
      rows[s][s] = 1.0;
      continue;
    }
    const bool diagonal = s >= 2;
    const double own_arm = diagonal ? basis_split : 1.0 - basis_split;
    const std::size_t other_first = diagonal ? 0 : 2;
    rows[s][s] = own_arm;
    rows[s][other_first] = (1.0 - own_arm) / 2.0;
    rows[s][other_first + 1] = (1.0 - own_arm) / 2.0;
  }
  return OutcomeMatrix(rows);
}

// Mean over the four prepared states of the Bhattacharyya coefficient.
inline double fidelity(const OutcomeMatrix& experimental, const OutcomeMatrix& ideal) {
  double total = 0.0;
  for (std::size_t s = 0; s < 4; ++s) {
    double bc = 0.0;
    for (std::size_t c = 0; c < 4; ++c) bc += std::sqrt(experimental(s, c) * ideal(s, c));
    total += bc;
  }
  return std::min(1.0, total / 4.0);
}

}  // namespace qkdlink::budget
