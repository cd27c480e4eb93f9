#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/sources.hpp"

namespace qkdlink::rates {

using sources::SpsModel;
using sources::WcpModel;

struct LinkParams {
  double eta_channel = 1.0;  // linear transmittance
  double eta_bob = 0.24;     // eta_opt * eta_det
  double p_dark = 2e-6;      // total dark-count probability per pulse
  double e_det = 0.039;
  double rep_rate = 80e6;    // Hz
  double sift_factor = 0.5;
  double f_ec = 1.1;

  double eta_total() const { return eta_channel * eta_bob; }

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(eta_channel)) throw std::invalid_argument("LinkParams: eta_channel outside [0, 1]");
    if (!unit(eta_bob)) throw std::invalid_argument("LinkParams: eta_bob outside [0, 1]");
    if (!unit(p_dark)) throw std::invalid_argument("LinkParams: p_dark outside [0, 1]");
    if (!(e_det >= 0.0 && e_det <= 0.5)) throw std::invalid_argument("LinkParams: e_det outside [0, 0.5]");
    if (!(rep_rate > 0.0) || !std::isfinite(rep_rate)) throw std::invalid_argument("LinkParams: rep_rate must be > 0");
    if (!(sift_factor > 0.0 && sift_factor <= 1.0)) throw std::invalid_argument("LinkParams: sift_factor outside (0, 1]");
    if (!(f_ec >= 1.0) || !std::isfinite(f_ec)) throw std::invalid_argument("LinkParams: f_ec must be >= 1");
  }
};

struct RatePoint {
  double loss_db = 0.0;
  double qber = 0.0;
  double p_click = 0.0;
  double skr_per_pulse = 0.0;
  double skr_bps = 0.0;
};

inline double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw NumericError("binary_entropy: argument outside [0, 1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

// Privacy-amplification compression -log2(1/2 + 2x - 2x^2).
inline double tau_privacy(double x) {
  if (!(x >= 0.0 && x <= 0.5)) throw NumericError("tau_privacy: argument outside [0, 0.5]");
  return -std::log2(0.5 + 2.0 * x - 2.0 * x * x);
}

inline double qber_sps(const LinkParams& link, const SpsModel& sps) {
  link.validate();
  const double signal = link.eta_total() * sps.mu_mol();
  const double denom = link.p_dark + signal;
  if (denom <= 0.0) throw NumericError("qber_sps: no signal and no dark counts");
  return (link.p_dark / 2.0 + link.e_det * signal) / denom;
}

inline double qber_wcp(const LinkParams& link, const WcpModel& wcp) {
  link.validate();
  const double signal = -std::expm1(-link.eta_total() * wcp.mu());
  const double denom = link.p_dark + signal;
  if (denom <= 0.0) throw NumericError("qber_wcp: no signal and no dark counts");
  return (link.p_dark / 2.0 + link.e_det * signal) / denom;
}

// Overall gain Q_mu = P_D + 1 - exp(-eta mu).
inline double gain_wcp(const LinkParams& link, const WcpModel& wcp) {
  return link.p_dark - std::expm1(-link.eta_total() * wcp.mu());
}

inline double p_click_sps(const LinkParams& link, const SpsModel& sps) {
  return sps.mu_mol() * link.eta_total() + link.p_dark;
}

namespace detail {

inline RatePoint finish(const LinkParams& link, double qber, double p_click, double per_pulse) {
  RatePoint r;
  r.qber = qber;
  r.p_click = p_click;
  r.skr_per_pulse = std::max(0.0, per_pulse);
  r.skr_bps = r.skr_per_pulse * link.rep_rate;
  return r;
}

}  // namespace detail

// Single-photon-source rate with the multi-photon correction
// beta = (P_click - P_m) / P_click. A measured QBER may replace the modeled one.
inline RatePoint skr_sps(const LinkParams& link, const SpsModel& sps,
                         std::optional<double> measured_qber = std::nullopt) {
  const double qber = measured_qber ? *measured_qber : qber_sps(link, sps);
  if (!(qber >= 0.0 && qber <= 0.5)) throw NumericError("skr_sps: QBER outside [0, 0.5]");
  const double p_click = p_click_sps(link, sps);
  const double p_multi = sources::multi_photon_prob(sps);
  if (p_multi >= p_click) return detail::finish(link, qber, p_click, 0.0);
  const double beta = (p_click - p_multi) / p_click;
  const double per_pulse =
      link.sift_factor * p_click * (beta * tau_privacy(qber) - link.f_ec * binary_entropy(qber));
  return detail::finish(link, qber, p_click, per_pulse);
}

// Weak coherent pulses without decoys: every multi-photon pulse is assumed
// tagged, leaving the fraction Omega of the gain usable.
inline RatePoint skr_wcp_no_decoy(const LinkParams& link, const WcpModel& wcp) {
  const double gain = gain_wcp(link, wcp);
  const double qber = qber_wcp(link, wcp);
  const double mu = wcp.mu();
  const double p_multi = -std::expm1(-mu) - mu * std::exp(-mu);
  const double omega = std::max(0.0, (gain - p_multi) / gain);
  if (omega == 0.0 || qber / omega > 0.5) return detail::finish(link, qber, gain, 0.0);
  const double per_pulse =
      link.sift_factor * gain * (omega * (1.0 - binary_entropy(qber / omega)) - link.f_ec * binary_entropy(qber));
  return detail::finish(link, qber, gain, per_pulse);
}

// Asymptotic vacuum + weak decoy rate with the one-photon gain and error
// equated to their ideal-decoy values.
inline RatePoint skr_wcp_decoy(const LinkParams& link, const WcpModel& wcp) {
  if (!wcp.nu()) throw ConfigError("skr_wcp_decoy: decoy intensity nu is required");
  const double gain = gain_wcp(link, wcp);
  const double qber = qber_wcp(link, wcp);
  const double eta = link.eta_total();
  const double mu = wcp.mu();
  const double denom1 = link.p_dark + eta;
  if (denom1 <= 0.0) throw NumericError("skr_wcp_decoy: no signal and no dark counts");
  const double e1 = (link.p_dark / 2.0 + link.e_det * eta) / denom1;
  const double q1 = denom1 * mu * std::exp(-mu);
  const double per_pulse =
      link.sift_factor * (-gain * link.f_ec * binary_entropy(qber) + q1 * (1.0 - binary_entropy(e1)));
  return detail::finish(link, qber, gain, per_pulse);
}

enum class RateKind { Sps, WcpNoDecoy, WcpDecoy };

// One curve of a loss sweep. e_det and a measured SPS QBER may differ per
// curve (e.g. molecule vs laser); everything else comes from the shared link.
struct SweepModel {
  std::string name;
  RateKind kind = RateKind::Sps;
  sources::SourceModel source = SpsModel(0.08, 0.02);
  std::optional<double> e_det;
  std::optional<double> measured_qber;
};

enum class LossConvention {
  ChannelOnly,   // grid is channel loss; eta_bob applied on top
  IncludesBob,   // grid is the total transmittance eta_bob * eta_channel
};

inline double db_to_linear(double db) { return std::pow(10.0, -db / 10.0); }

inline LinkParams link_at_loss(LinkParams link, double loss_db, LossConvention convention) {
  if (convention == LossConvention::IncludesBob) link.eta_bob = 1.0;
  link.eta_channel = db_to_linear(loss_db);
  return link;
}

inline RatePoint evaluate(const LinkParams& link, const SweepModel& model) {
  switch (model.kind) {
    case RateKind::Sps:
      return skr_sps(link, std::get<SpsModel>(model.source), model.measured_qber);
    case RateKind::WcpNoDecoy:
      return skr_wcp_no_decoy(link, std::get<WcpModel>(model.source));
    case RateKind::WcpDecoy:
      return skr_wcp_decoy(link, std::get<WcpModel>(model.source));
  }
  throw std::logic_error("evaluate: unknown rate kind");
}

struct SweepRow {
  std::string model;
  double eta_total = 0.0;
  RatePoint point;
};

// Rows are ordered model-major, then by the loss grid.
inline std::vector<SweepRow> sweep_loss(const LinkParams& link, const std::vector<SweepModel>& models,
                                        const std::vector<double>& loss_grid_db,
                                        LossConvention convention = LossConvention::ChannelOnly) {
  link.validate();
  if (loss_grid_db.empty()) throw std::invalid_argument("sweep_loss: empty loss grid");
  for (std::size_t i = 0; i < loss_grid_db.size(); ++i) {
    if (!(loss_grid_db[i] >= 0.0) || !std::isfinite(loss_grid_db[i])) {
      throw std::invalid_argument("sweep_loss: loss values must be finite and >= 0 dB");
    }
    if (i > 0 && !(loss_grid_db[i] > loss_grid_db[i - 1])) {
      throw std::invalid_argument("sweep_loss: loss grid must be strictly increasing");
    }
  }
  std::vector<SweepRow> rows;
  rows.reserve(models.size() * loss_grid_db.size());
  for (const auto& model : models) {
    LinkParams base = link;
    if (model.e_det) base.e_det = *model.e_det;
    for (double db : loss_grid_db) {
      const LinkParams at = link_at_loss(base, db, convention);
      SweepRow row{model.name, at.eta_total(), evaluate(at, model)};
      row.point.loss_db = db;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace qkdlink::rates
