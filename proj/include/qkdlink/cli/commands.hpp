#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qkdlink/budget.hpp"
#include "qkdlink/config.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/format.hpp"
#include "qkdlink/montecarlo.hpp"
#include "qkdlink/photonstats.hpp"
#include "qkdlink/qber_fit.hpp"
#include "qkdlink/rates.hpp"
#include "qkdlink/timetag.hpp"

namespace qkdlink::cli {

inline constexpr const char* kSchemaTag = "# qkd-linkbench v1";

// Exit codes are part of the CLI contract.
enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kNotConverged = 4 };

using nlohmann::ordered_json;

// ---- rates sweep -----------------------------------------------------------

inline std::vector<rates::SweepRow> run_sweep(const config::RunConfig& cfg) {
  return rates::sweep_loss(cfg.link, cfg.sweep_models(), cfg.loss_grid, cfg.convention);
}

inline void write_sweep_csv(std::ostream& out, const std::vector<rates::SweepRow>& rows) {
  out << kSchemaTag << '\n';
  out << "model,loss_db,eta_total,qber,p_click,skr_per_pulse,skr_bps\n";
  for (const auto& r : rows) {
    out << r.model << ',' << format_number(r.point.loss_db) << ',' << format_number(r.eta_total) << ','
        << format_number(r.point.qber) << ',' << format_number(r.point.p_click) << ','
        << format_number(r.point.skr_per_pulse) << ',' << format_number(r.point.skr_bps) << '\n';
  }
}

inline int cmd_rates_sweep(const config::RunConfig& cfg, std::ostream& out) {
  write_sweep_csv(out, run_sweep(cfg));
  return kOk;
}

// ---- Monte Carlo -----------------------------------------------------------

struct Prediction {
  double qber = 0.0;
  double gain = 0.0;
};

// Analytic QBER and per-pulse click probability for a simulated source.
inline Prediction predict(const montecarlo::SimConfig& sim) {
  if (const auto* sps = std::get_if<sources::SpsModel>(&sim.source)) {
    return {rates::qber_sps(sim.link, *sps), rates::p_click_sps(sim.link, *sps)};
  }
  const auto& wcp = std::get<sources::WcpModel>(sim.source);
  return {rates::qber_wcp(sim.link, wcp), rates::gain_wcp(sim.link, wcp)};
}

struct SimReport {
  montecarlo::SimConfig config;
  montecarlo::SimOutcome outcome;
  Prediction prediction;
  std::optional<double> qber_z;
  double gain_z = 0.0;
};

// Binomial z-score of an observed count against a predicted probability.
inline double binomial_z(double observed_ratio, double p, double n) {
  const double var = p * (1.0 - p) / n;
  if (!(var > 0.0)) return observed_ratio == p ? 0.0 : INFINITY;
  return (observed_ratio - p) / std::sqrt(var);
}

inline SimReport run_simulate(const montecarlo::SimConfig& sim) {
  SimReport r;
  r.config = sim;
  r.outcome = montecarlo::simulate_bb84(sim);
  r.prediction = predict(sim);
  r.gain_z = binomial_z(r.outcome.empirical_gain(), r.prediction.gain, static_cast<double>(r.outcome.pulses));
  if (const auto q = r.outcome.empirical_qber()) {
    r.qber_z = binomial_z(*q, r.prediction.qber, static_cast<double>(r.outcome.sifted_bits));
  }
  return r;
}

inline ordered_json simulate_json(const SimReport& r, const std::string& model_name) {
  const auto& o = r.outcome;
  ordered_json j;
  j["schema"] = "qkd-linkbench v1 simulate";
  j["model"] = model_name;
  j["pulses"] = o.pulses;
  j["seed"] = r.config.seed;
  j["eta_total"] = round_sig(r.config.link.eta_total());
  j["clicked_pulses"] = o.clicked_pulses;
  j["clicks_per_detector"] = {{"H", o.clicks_per_detector[0]},
                           {"V", o.clicks_per_detector[1]},
                           {"D", o.clicks_per_detector[2]},
                           {"A", o.clicks_per_detector[3]}};
  j["sifted_bits"] = o.sifted_bits;
  j["sifted_errors"] = o.sifted_errors;
  j["double_clicks"] = o.double_clicks;
  ordered_json matrix = ordered_json::array();
  for (const auto& row : o.outcome_matrix) matrix.push_back(row);
  j["outcome_matrix"] = matrix;
  const auto q = o.empirical_qber();
  j["empirical"] = {{"qber", q ? ordered_json(round_sig(*q)) : ordered_json(nullptr)},
                    {"gain", round_sig(o.empirical_gain())}};
  j["analytic"] = {{"qber", round_sig(r.prediction.qber)}, {"gain", round_sig(r.prediction.gain)}};
  j["z"] = {{"qber", r.qber_z ? ordered_json(round_sig(*r.qber_z)) : ordered_json(nullptr)},
            {"gain", round_sig(r.gain_z)}};
  return j;
}

inline int cmd_simulate(const config::RunConfig& cfg, std::ostream& out) {
  const auto report = run_simulate(cfg.sim_config());
  out << simulate_json(report, cfg.simulate.model).dump(2) << '\n';
  return kOk;
}

// ---- budget ----------------------------------------------------------------

struct BudgetCaseReport {
  double eta_col = 0.0;
  double qy_extracted = 0.0;
  double qy_used = 0.0;
  std::string qy_source;
  double mu_forward = 0.0;  // forward product with qy_used, current setup
  double mu_ref = 0.0;
};

struct BudgetReport {
  config::BudgetConfig input;
  double eta_pump = 0.0;
  double eta_pump_star = 0.0;
  std::vector<BudgetCaseReport> cases;
  std::vector<rates::SweepRow> comparison;
};

inline BudgetReport run_budget(const config::RunConfig& cfg) {
  if (!cfg.budget) throw ConfigError("config has no [budget] section");
  const auto& b = *cfg.budget;
  BudgetReport r;
  r.input = b;
  r.eta_pump = b.pump();
  r.eta_pump_star = b.pump_star();
  for (std::size_t i = 0; i < b.cases.size(); ++i) {
    const auto& c = b.cases[i];
    BudgetCaseReport cr;
    cr.eta_col = c.eta_col;
    budget::EfficiencyBudget now{b.eta_opt_alice, c.eta_col, 1.0, r.eta_pump, b.on_frac, b.p_exc_inf,
                                 b.sat_param.value_or(INFINITY)};
    cr.qy_extracted = budget::extract_qy(b.mu_mol, now);
    cr.qy_used = c.qy_reference.value_or(cr.qy_extracted);
    cr.qy_source = c.qy_reference ? b.provenance.at("qy") : "extracted";
    if (cr.qy_used > 1.0) throw NumericError("budget case " + std::to_string(i + 1) + ": quantum yield exceeds 1");
    now.qy = cr.qy_used;
    cr.mu_forward = now.mu();
    budget::EfficiencyBudget star{b.eta_opt_star, b.eta_col_star, cr.qy_used, r.eta_pump_star, b.on_frac, b.p_exc_inf,
                                  INFINITY};
    cr.mu_ref = budget::extrapolate_mu_ref(star);
    r.cases.push_back(cr);
  }

  std::vector<rates::SweepModel> models;
  models.push_back({"sps", rates::RateKind::Sps, cfg.sps(), cfg.e_det_sps, std::nullopt});
  for (std::size_t i = 0; i < r.cases.size(); ++i) {
    models.push_back({"sps_mu_ref_" + std::to_string(i + 1), rates::RateKind::Sps,
                      sources::SpsModel(std::min(r.cases[i].mu_ref, 1.0), cfg.g2_zero), cfg.e_det_sps, std::nullopt});
  }
  if (cfg.wcp_nu) models.push_back({"wcp_decoy", rates::RateKind::WcpDecoy, cfg.wcp(), cfg.e_det_wcp, std::nullopt});
  r.comparison = rates::sweep_loss(cfg.link, models, cfg.loss_grid, cfg.convention);
  return r;
}

// Key = value text; every factor carries its provenance label.
inline void write_budget_report(std::ostream& out, const BudgetReport& r) {
  const auto& b = r.input;
  auto prov = [&](const std::string& key) {
    const auto it = b.provenance.find(key);
    return it == b.provenance.end() ? std::string("derived") : it->second;
  };
  auto line = [&](const std::string& key, double v, const std::string& source) {
    out << key << " = " << format_number(v) << " (" << source << ")\n";
  };
  out << kSchemaTag << " budget\n";
  out << "[inputs]\n";
  line("mu_mol", b.mu_mol, prov("mu_mol"));
  line("eta_opt_alice", b.eta_opt_alice, prov("eta_opt_alice"));
  line("on_frac", b.on_frac, prov("on_frac"));
  line("p_exc_inf", b.p_exc_inf, prov("p_exc_inf"));
  if (b.sat_param) line("sat_param", *b.sat_param, prov("sat_param"));
  if (b.pump_ratio) line("pump_ratio", *b.pump_ratio, prov("pump_ratio"));
  line("eta_pump", r.eta_pump, b.eta_pump ? prov("eta_pump") : "derived");
  line("eta_opt_star", b.eta_opt_star, prov("eta_opt_star"));
  line("eta_col_star", b.eta_col_star, prov("eta_col_star"));
  line("eta_pump_star", r.eta_pump_star, b.eta_pump_star ? prov("eta_pump_star") : "p_exc_inf");
  for (std::size_t i = 0; i < r.cases.size(); ++i) {
    const auto& c = r.cases[i];
    out << "[case " << i + 1 << "]\n";
    line("eta_col", c.eta_col, prov("eta_col"));
    line("qy_extracted", c.qy_extracted, "derived");
    line("qy", c.qy_used, c.qy_source);
    line("mu_forward", c.mu_forward, "derived");
    line("mu_ref", c.mu_ref, "derived");
  }
  out << "[comparison]\n";
  write_sweep_csv(out, r.comparison);
}

inline int cmd_budget(const config::RunConfig& cfg, std::ostream& out) {
  write_budget_report(out, run_budget(cfg));
  return kOk;
}

// ---- fits ------------------------------------------------------------------

inline ordered_json fit_json(const fitting::FitResult& f) {
  ordered_json params = ordered_json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    params[f.names[i]] = {{"value", round_sig(f.params[i])}, {"sigma", round_sig(f.sigma[i])}};
  }
  ordered_json j;
  j["parameters"] = params;
  j["residual_norm"] = round_sig(f.residual_norm);
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  return j;
}

struct G2Options {
  std::optional<std::int64_t> bin_ps;
  std::optional<std::int64_t> window_ps;
  std::uint8_t start_channel = 1;
  std::uint8_t stop_channel = 2;
};

inline photonstats::CoincidenceOptions pulsed_histogram_options(const TimeTagStream& s, const G2Options& o) {
  photonstats::CoincidenceOptions h;
  h.bin_width_ps = o.bin_ps.value_or(1000);
  h.window_ps = o.window_ps.value_or(16 * s.rep_period_ps());
  h.start_channel = o.start_channel;
  h.stop_channel = o.stop_channel;
  h.normalization = photonstats::Normalization::LateralPeak;
  return h;
}

inline photonstats::CoincidenceOptions longtime_histogram_options(const TimeTagStream& s, const G2Options& o) {
  photonstats::CoincidenceOptions h;
  h.bin_width_ps = o.bin_ps.value_or(4 * s.rep_period_ps());
  h.window_ps = o.window_ps.value_or(400 * s.rep_period_ps());
  h.start_channel = o.start_channel;
  h.stop_channel = o.stop_channel;
  return h;
}

inline int finish_fit(std::ostream& out, ordered_json j, bool converged) {
  out << j.dump(2) << '\n';
  return converged ? kOk : kNotConverged;
}

inline int cmd_fit_g2(std::istream& timetags, const G2Options& o, std::ostream& out) {
  const auto stream = read_timetags(timetags);
  const auto hist = photonstats::coincidence_histogram(stream, pulsed_histogram_options(stream, o));
  const auto fit = photonstats::fit_g2_pulsed(hist);
  ordered_json j;
  j["schema"] = "qkd-linkbench v1 fit g2";
  j["rep_period_ps"] = stream.rep_period_ps();
  j["coincidences"] = hist.total();
  j["g2_zero"] = {{"value", round_sig(fit.g2_zero)}, {"sigma", round_sig(fit.g2_zero_sigma)}};
  j["tau_c_ns"] = {{"value", round_sig(fit.tau_c_ps / 1e3)}, {"sigma", round_sig(fit.tau_c_sigma / 1e3)}};
  j["fit"] = fit_json(fit.fit);
  return finish_fit(out, j, fit.fit.converged);
}

inline int cmd_fit_g2long(std::istream& timetags, const G2Options& o, std::optional<double> exclude_ps,
                          std::ostream& out) {
  const auto stream = read_timetags(timetags);
  const auto opt = longtime_histogram_options(stream, o);
  const auto hist = photonstats::coincidence_histogram(stream, opt);
  const auto fit = photonstats::fit_g2_longtime(hist, exclude_ps.value_or(static_cast<double>(opt.bin_width_ps)));
  ordered_json j;
  j["schema"] = "qkd-linkbench v1 fit g2long";
  j["coincidences"] = hist.total();
  j["on_fraction"] = {{"value", round_sig(fit.on_fraction)}, {"sigma", round_sig(fit.on_fraction_sigma)}};
  j["bunching_time_ns"] = round_sig(fit.bunching_time_ps / 1e3);
  j["tau_trap_ns"] = round_sig(fit.tau_trap_ps / 1e3);
  j["fit"] = fit_json(fit.fit);
  return finish_fit(out, j, fit.fit.converged);
}

namespace detail {

// Numeric CSV with a required header naming the columns; '#' lines skipped.
inline std::vector<std::vector<double>> read_numeric_csv(std::istream& in, const std::vector<std::string>& required,
                                                         std::size_t optional_cols = 0) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = config::detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cells = config::detail::split(text, ',');
    if (!header) {
      for (std::size_t i = 0; i < required.size(); ++i) {
        if (i >= cells.size() || config::detail::lower(cells[i]) != required[i]) {
          throw ParseError(line_no, "expected header starting with '" + required[i] + "' in column " + std::to_string(i + 1));
        }
      }
      header = true;
      continue;
    }
    if (cells.size() < required.size() || cells.size() > required.size() + optional_cols) {
      throw ParseError(line_no, "wrong number of columns");
    }
    std::vector<double> row;
    for (auto c : cells) {
      double v = 0.0;
      if (!config::detail::parse_double(c, v)) throw ParseError(line_no, "not a number: '" + std::string(c) + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (!header) throw ParseError(line_no, "missing CSV header");
  return rows;
}

}  // namespace detail

inline int cmd_fit_saturation(std::istream& in, std::optional<double> query_power, double rep_rate, std::ostream& out) {
  std::vector<photonstats::SaturationPoint> pts;
  for (const auto& row : detail::read_numeric_csv(in, {"power", "rate"})) pts.push_back({row[0], row[1]});
  const auto fit = photonstats::fit_saturation(pts);
  ordered_json j;
  j["schema"] = "qkd-linkbench v1 fit saturation";
  j["ill_conditioned"] = fit.ill_conditioned;
  if (query_power) {
    j["query"] = {{"power", round_sig(*query_power)},
                  {"saturation_param", round_sig(fit.saturation_param(*query_power))},
                  {"rate", round_sig(fit.rate(*query_power))},
                  {"mu_mol", round_sig(fit.mu_mol(*query_power, rep_rate))}};
  }
  j["fit"] = fit_json(fit.fit);
  return finish_fit(out, j, fit.fit.converged);
}

inline int cmd_fit_qber(std::istream& in, const fitting::QberCurveSetup& setup, std::ostream& out) {
  std::vector<fitting::QberPoint> pts;
  for (const auto& row : detail::read_numeric_csv(in, {"loss_db", "qber"}, 1)) {
    pts.push_back({row[0], row[1], row.size() > 2 ? row[2] : 1.0});
  }
  const auto fit = fitting::fit_qber_curve(pts, setup);
  ordered_json j;
  j["schema"] = "qkd-linkbench v1 fit qber";
  j["source"] = setup.kind == fitting::SourceKind::Sps ? "sps" : "wcp";
  j["fit"] = fit_json(fit);
  return finish_fit(out, j, fit.converged);
}

// ---- synthetic time tags ---------------------------------------------------

inline int cmd_timetags(const EmitterDynamics& dyn, std::int64_t rep_period_ps, std::uint64_t cycles,
                        std::uint64_t seed, std::ostream& out) {
  write_timetags(out, montecarlo::generate_timetags(dyn, rep_period_ps, cycles, seed));
  return kOk;
}

}  // namespace qkdlink::cli
