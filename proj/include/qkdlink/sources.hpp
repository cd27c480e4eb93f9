#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace qkdlink::sources {

// Room-temperature single-photon emitter, characterized by its mean photon
// number per pulse at Alice's output and its zero-delay correlation.
class SpsModel {
 public:
  SpsModel(double mu_mol, double g2_zero) : mu_mol_(mu_mol), g2_zero_(g2_zero) {
    if (!(mu_mol > 0.0 && mu_mol <= 1.0)) {
      throw std::invalid_argument("SpsModel: mu_mol must lie in (0, 1], got " + std::to_string(mu_mol));
    }
    if (!(g2_zero >= 0.0 && g2_zero < 1.0)) {
      throw std::invalid_argument("SpsModel: g2_zero must lie in [0, 1), got " + std::to_string(g2_zero));
    }
  }

  double mu_mol() const { return mu_mol_; }
  double g2_zero() const { return g2_zero_; }

 private:
  double mu_mol_;
  double g2_zero_;
};

// Attenuated laser with Poissonian photon number; nu is the optional decoy
// intensity.
class WcpModel {
 public:
  explicit WcpModel(double mu, std::optional<double> nu = std::nullopt) : mu_(mu), nu_(nu) {
    if (!(mu > 0.0) || !std::isfinite(mu)) {
      throw std::invalid_argument("WcpModel: mu must be positive, got " + std::to_string(mu));
    }
    if (nu && !(*nu > 0.0 && *nu < mu)) {
      throw std::invalid_argument("WcpModel: decoy nu must satisfy 0 < nu < mu");
    }
  }

  double mu() const { return mu_; }
  const std::optional<double>& nu() const { return nu_; }

 private:
  double mu_;
  std::optional<double> nu_;
};

using SourceModel = std::variant<SpsModel, WcpModel>;

inline constexpr int kDefaultWcpMaxPhotons = 12;

// P(n photons) for n = 0..n_max, with a precomputed cumulative table for
// inverse-transform sampling.
class PhotonNumberDist {
 public:
  explicit PhotonNumberDist(std::vector<double> probabilities) : p_(std::move(probabilities)) {
    if (p_.empty()) throw std::invalid_argument("PhotonNumberDist: empty support");
    for (double v : p_) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("PhotonNumberDist: probability outside [0, 1]");
    }
    const double total = std::accumulate(p_.begin(), p_.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("PhotonNumberDist: probabilities sum to " + std::to_string(total));
    }
    cumulative_.resize(p_.size());
    std::partial_sum(p_.begin(), p_.end(), cumulative_.begin());
    cumulative_.back() = 1.0;
  }

  const std::vector<double>& probabilities() const { return p_; }
  std::size_t n_max() const { return p_.size() - 1; }
  double operator[](std::size_t n) const { return n < p_.size() ? p_[n] : 0.0; }

  double mean() const {
    double m = 0.0;
    for (std::size_t n = 0; n < p_.size(); ++n) m += static_cast<double>(n) * p_[n];
    return m;
  }

  // u uniform on [0, 1).
  unsigned sample(double u) const {
    unsigned n = 0;
    while (n + 1 < cumulative_.size() && u >= cumulative_[n]) ++n;
    return n;
  }

 private:
  std::vector<double> p_;
  std::vector<double> cumulative_;
};

// P_m = mu^2 g2(0) / 2.
inline double multi_photon_prob(const SpsModel& sps) {
  return sps.mu_mol() * sps.mu_mol() * sps.g2_zero() / 2.0;
}

// Three-point distribution on {0, 1, 2} matching the mean mu_mol and the
// pair probability P(2) = P_m, i.e. 2 P(2) / mean^2 = g2(0).
inline PhotonNumberDist sps_number_dist(const SpsModel& sps) {
  const double p2 = multi_photon_prob(sps);
  const double p1 = sps.mu_mol() - 2.0 * p2;
  const double p0 = 1.0 - p1 - p2;
  if (p1 < 0.0 || p0 < 0.0) {
    throw std::invalid_argument("sps_number_dist: (mu_mol, g2_zero) admits no non-negative distribution");
  }
  return PhotonNumberDist({p0, p1, p2});
}

// Poisson(mu) truncated at n_max; the tail mass is folded into P(n_max).
inline PhotonNumberDist wcp_number_dist(const WcpModel& wcp, int n_max = kDefaultWcpMaxPhotons) {
  if (n_max < 2) throw std::invalid_argument("wcp_number_dist: n_max must be >= 2");
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1);
  double term = std::exp(-wcp.mu());
  double head = 0.0;
  for (int n = 0; n < n_max; ++n) {
    p[n] = term;
    head += term;
    term *= wcp.mu() / (n + 1);
  }
  p[n_max] = std::max(0.0, 1.0 - head);
  return PhotonNumberDist(std::move(p));
}

inline PhotonNumberDist number_dist(const SourceModel& source) {
  return std::visit(
      [](const auto& m) -> PhotonNumberDist {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, SpsModel>) {
          return sps_number_dist(m);
        } else {
          return wcp_number_dist(m);
        }
      },
      source);
}

inline double mean_photon_number(const SourceModel& source) {
  if (const auto* s = std::get_if<SpsModel>(&source)) return s->mu_mol();
  return std::get<WcpModel>(source).mu();
}

}  // namespace qkdlink::sources
