// qkd-linkbench: loss sweeps, Monte Carlo runs, fits and the efficiency budget.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qkdlink/cli/commands.hpp"

namespace {

using namespace qkdlink;

// Output goes to --out if given, stdout otherwise.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw ConfigError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  return in;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BB84 link models, simulation and photon-statistics fits"};
  app.require_subcommand(1);

  std::string config_path, out_path, input_path;

  // sweep
  auto* sweep = app.add_subcommand("sweep", "closed-form QBER / key-rate sweep over loss (CSV)");
  std::optional<std::string> loss_grid, loss_includes_bob;
  std::optional<double> f_ec, qber_sps;
  sweep->add_option("-c,--config", config_path, "run configuration")->required();
  sweep->add_option("--loss-grid", loss_grid, "e.g. 0:1:40 or 0,7,14 (dB)");
  sweep->add_option("--loss-includes-bob", loss_includes_bob, "grid is total loss (true) or channel loss (false)");
  sweep->add_option("--f-ec", f_ec, "error-correction inefficiency");
  sweep->add_option("--qber-sps", qber_sps, "measured SPS QBER used in place of the model");
  sweep->add_option("-o,--out", out_path, "output file (default stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "pulse-level Monte Carlo with analytic comparison (JSON)");
  std::optional<std::uint64_t> pulses, seed;
  std::optional<unsigned> workers;
  std::optional<double> channel_loss;
  std::optional<std::string> sim_model;
  simulate->add_option("-c,--config", config_path, "run configuration")->required();
  simulate->add_option("--pulses", pulses, "number of pulses");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--workers", workers, "worker threads (results do not depend on this)");
  simulate->add_option("--loss", channel_loss, "channel loss in dB");
  simulate->add_option("--model", sim_model, "sps | wcp | wcp_decoy");
  simulate->add_option("-o,--out", out_path, "output file (default stdout)");

  // budget
  auto* budget_cmd = app.add_subcommand("budget", "source efficiency budget and mu_ref extrapolation");
  budget_cmd->add_option("-c,--config", config_path, "run configuration")->required();
  budget_cmd->add_option("-o,--out", out_path, "output file (default stdout)");

  // fit
  auto* fit = app.add_subcommand("fit", "least-squares fits of measured data (JSON)");
  fit->require_subcommand(1);
  cli::G2Options g2opt;
  std::optional<double> exclude_ps, query_power;
  double rep_rate = 80e6;
  std::string source_kind = "sps";
  fitting::QberCurveSetup qsetup;
  std::optional<std::string> q_includes_bob;
  unsigned start_ch = 1, stop_ch = 2;

  auto add_hist_opts = [&](CLI::App* c) {
    c->add_option("-i,--input", input_path, "timetag v1 file")->required();
    c->add_option("--bin-ps", g2opt.bin_ps, "histogram bin width (ps)");
    c->add_option("--window-ps", g2opt.window_ps, "histogram half window (ps)");
    c->add_option("--start", start_ch, "start channel")->capture_default_str();
    c->add_option("--stop", stop_ch, "stop channel")->capture_default_str();
    c->add_option("-o,--out", out_path, "output file (default stdout)");
  };
  auto* fit_g2 = fit->add_subcommand("g2", "pulsed g2(tau): g2(0) and lifetime");
  add_hist_opts(fit_g2);
  auto* fit_g2long = fit->add_subcommand("g2long", "long-delay bunching: ON fraction");
  add_hist_opts(fit_g2long);
  fit_g2long->add_option("--exclude-ps", exclude_ps, "skip bins closer than this to zero delay");
  auto* fit_sat = fit->add_subcommand("saturation", "count rate vs pump power");
  fit_sat->add_option("-i,--input", input_path, "CSV with header power,rate")->required();
  fit_sat->add_option("--query-power", query_power, "report s, R(P) and mu_mol at this power");
  fit_sat->add_option("--rep-rate", rep_rate, "repetition rate in Hz for mu_mol")->capture_default_str();
  fit_sat->add_option("-o,--out", out_path, "output file (default stdout)");
  auto* fit_q = fit->add_subcommand("qber", "P_D and e_det from QBER vs loss");
  fit_q->add_option("-i,--input", input_path, "CSV with header loss_db,qber[,weight]")->required();
  fit_q->add_option("--source", source_kind, "sps | wcp")->capture_default_str();
  fit_q->add_option("--mu", qsetup.mu, "mean photon number of the source")->capture_default_str();
  fit_q->add_option("--eta-bob", qsetup.eta_bob, "receiver efficiency")->capture_default_str();
  fit_q->add_option("--loss-includes-bob", q_includes_bob, "loss axis is total loss");
  fit_q->add_option("-o,--out", out_path, "output file (default stdout)");

  // timetags
  auto* tt = app.add_subcommand("timetags", "synthetic HBT time-tag stream (timetag v1)");
  EmitterDynamics dyn;
  std::int64_t rep_period_ps = 25'000;
  std::uint64_t cycles = 1'000'000, tt_seed = 1;
  tt->add_option("--tau-c-ns", dyn.tau_c_ns, "excited-state lifetime")->capture_default_str();
  tt->add_option("--g2", dyn.g2_zero, "g2(0)")->capture_default_str();
  tt->add_option("--mu", dyn.mu, "photons per cycle while ON")->capture_default_str();
  tt->add_option("--on-fraction", dyn.on_fraction, "ON fraction")->capture_default_str();
  tt->add_option("--tau-trap-ns", dyn.tau_trap_ns, "mean dark dwell")->capture_default_str();
  tt->add_option("--rep-period-ps", rep_period_ps, "laser period")->capture_default_str();
  tt->add_option("--cycles", cycles, "excitation cycles")->capture_default_str();
  tt->add_option("--seed", tt_seed, "seed")->capture_default_str();
  tt->add_option("-o,--out", out_path, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kConfigError;
  }

  try {
    if (*sweep) {
      auto cfg = config::load_file(config_path);
      if (loss_grid) cfg.loss_grid = config::parse_loss_grid(*loss_grid);
      if (loss_includes_bob) {
        cfg.convention = parse_bool(*loss_includes_bob) ? rates::LossConvention::IncludesBob
                                                        : rates::LossConvention::ChannelOnly;
      }
      if (f_ec) cfg.link.f_ec = *f_ec;
      if (qber_sps) cfg.qber_sps = *qber_sps;
      Sink sink(out_path);
      return cli::cmd_rates_sweep(cfg, sink.get());
    }
    if (*simulate) {
      auto cfg = config::load_file(config_path);
      if (pulses) {
        if (*pulses == 0) throw ConfigError("--pulses must be >= 1");
        cfg.simulate.pulses = *pulses;
      }
      if (seed) cfg.simulate.seed = *seed;
      if (workers) cfg.simulate.workers = *workers;
      if (channel_loss) cfg.channel_loss_db = *channel_loss;
      if (sim_model) cfg.simulate.model = *sim_model;
      Sink sink(out_path);
      return cli::cmd_simulate(cfg, sink.get());
    }
    if (*budget_cmd) {
      const auto cfg = config::load_file(config_path);
      Sink sink(out_path);
      return cli::cmd_budget(cfg, sink.get());
    }
    if (*fit) {
      if (start_ch > 255 || stop_ch > 255) throw ConfigError("channel index must be <= 255");
      g2opt.start_channel = static_cast<std::uint8_t>(start_ch);
      g2opt.stop_channel = static_cast<std::uint8_t>(stop_ch);
      auto in = open_input(input_path);
      Sink sink(out_path);
      if (*fit_g2) return cli::cmd_fit_g2(in, g2opt, sink.get());
      if (*fit_g2long) return cli::cmd_fit_g2long(in, g2opt, exclude_ps, sink.get());
      if (*fit_sat) return cli::cmd_fit_saturation(in, query_power, rep_rate, sink.get());
      if (*fit_q) {
        if (source_kind == "sps") qsetup.kind = fitting::SourceKind::Sps;
        else if (source_kind == "wcp") qsetup.kind = fitting::SourceKind::Wcp;
        else throw ConfigError("--source must be sps or wcp");
        if (q_includes_bob && parse_bool(*q_includes_bob)) qsetup.convention = rates::LossConvention::IncludesBob;
        return cli::cmd_fit_qber(in, qsetup, sink.get());
      }
    }
    if (*tt) {
      Sink sink(out_path);
      return cli::cmd_timetags(dyn, rep_period_ps, cycles, tt_seed, sink.get());
    }
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kNotConverged;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kNumericError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kNumericError;
  }
  return cli::kOk;
}
