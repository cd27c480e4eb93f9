#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qkdlink/error.hpp"
#include "qkdlink/fitting.hpp"
#include "qkdlink/format.hpp"
#include "qkdlink/timetag.hpp"

namespace qkdlink::photonstats {

enum class Normalization { Raw, LateralPeak };

struct Histogram {
  std::vector<std::int64_t> bin_edges_ps;  // size = counts.size() + 1
  std::vector<std::uint64_t> counts;
  Normalization normalization = Normalization::Raw;
  double norm_factor = 1.0;  // normalized = counts / norm_factor
  std::int64_t rep_period_ps = 0;

  std::size_t size() const { return counts.size(); }
  double width(std::size_t i) const { return static_cast<double>(bin_edges_ps[i + 1] - bin_edges_ps[i]); }
  double center(std::size_t i) const {
    return 0.5 * static_cast<double>(bin_edges_ps[i] + bin_edges_ps[i + 1]);
  }
  double normalized(std::size_t i) const { return static_cast<double>(counts[i]) / norm_factor; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }

  void validate() const {
    if (bin_edges_ps.size() != counts.size() + 1) throw std::invalid_argument("Histogram: edges/counts size mismatch");
    for (std::size_t i = 0; i + 1 < bin_edges_ps.size(); ++i) {
      if (bin_edges_ps[i + 1] <= bin_edges_ps[i]) throw std::invalid_argument("Histogram: edges not increasing");
    }
    if (!(norm_factor > 0.0)) throw std::invalid_argument("Histogram: normalization factor must be positive");
  }
};

// Sum of the counts whose bin centers fall in the period-wide slot around
// delay n*T.
inline double peak_integral(const Histogram& h, int n) {
  const double T = static_cast<double>(h.rep_period_ps);
  const double lo = (n - 0.5) * T;
  const double hi = (n + 0.5) * T;
  double sum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double c = h.center(i);
    if (c >= lo && c < hi) sum += static_cast<double>(h.counts[i]);
  }
  return sum;
}

// Peak orders whose full slot lies inside the histogram.
inline int max_full_peak(const Histogram& h) {
  const double T = static_cast<double>(h.rep_period_ps);
  const double reach = std::min(-static_cast<double>(h.bin_edges_ps.front()), static_cast<double>(h.bin_edges_ps.back()));
  return static_cast<int>(std::floor(reach / T - 0.5 + 1e-9));
}

// Divides by the mean integral of lateral peaks with 5 <= |n| <= 15. If the
// window holds fewer peaks, every full lateral peak is used instead.
inline void normalize_lateral(Histogram& h) {
  if (h.rep_period_ps <= 0) throw std::invalid_argument("normalize_lateral: histogram has no repetition period");
  const int n_full = max_full_peak(h);
  if (n_full < 1) throw std::invalid_argument("normalize_lateral: no complete lateral peak inside the window");
  const int lo = n_full >= 5 ? 5 : 1;
  const int hi = std::min(15, n_full);
  double sum = 0.0;
  int used = 0;
  for (int n = lo; n <= hi; ++n) {
    sum += peak_integral(h, n) + peak_integral(h, -n);
    used += 2;
  }
  if (!(sum > 0.0)) throw NumericError("normalize_lateral: lateral peaks are empty");
  h.norm_factor = sum / used;
  h.normalization = Normalization::LateralPeak;
}

enum class PairMode {
  AllPairs,   // every stop within the window of a start (multi-stop)
  StartStop,  // only the first stop at or after each start
};

struct CoincidenceOptions {
  std::int64_t bin_width_ps = 100;
  std::int64_t window_ps = 400'000;
  std::uint8_t start_channel = 1;
  std::uint8_t stop_channel = 2;
  Normalization normalization = Normalization::Raw;
  PairMode pairing = PairMode::AllPairs;
};

// Delay histogram t_stop - t_start over [-window, +window). AllPairs counts
// every pair inside the window once (linear in events plus pairs via a
// sliding lower bound on the stop list). StartStop keeps only the first stop
// at or after each start, the classic TCSPC start-stop measurement; its
// lateral peaks decay with the stop rate, so the fits use AllPairs.
inline Histogram coincidence_histogram(const TimeTagStream& stream, const CoincidenceOptions& opt) {
  const std::int64_t T = stream.rep_period_ps();
  if (opt.bin_width_ps <= 0) throw std::invalid_argument("coincidence_histogram: bin width must be positive");
  if (opt.window_ps < 2 * T) throw std::invalid_argument("coincidence_histogram: window must be >= 2 repetition periods");
  if ((2 * opt.window_ps) % opt.bin_width_ps != 0) {
    throw std::invalid_argument("coincidence_histogram: bin width does not divide the window");
  }
  const auto starts = stream.channel_times(opt.start_channel);
  const auto stops = stream.channel_times(opt.stop_channel);
  if (starts.empty() || stops.empty()) throw std::invalid_argument("coincidence_histogram: empty start or stop channel");

  Histogram h;
  h.rep_period_ps = T;
  const std::int64_t n_bins = 2 * opt.window_ps / opt.bin_width_ps;
  h.bin_edges_ps.resize(static_cast<std::size_t>(n_bins) + 1);
  for (std::int64_t i = 0; i <= n_bins; ++i) h.bin_edges_ps[i] = -opt.window_ps + i * opt.bin_width_ps;
  h.counts.assign(static_cast<std::size_t>(n_bins), 0);

  std::size_t lo = 0;
  if (opt.pairing == PairMode::StartStop) {
    for (const std::int64_t t : starts) {
      while (lo < stops.size() && stops[lo] < t) ++lo;
      if (lo == stops.size()) break;
      const std::int64_t d = stops[lo] - t;
      if (d < opt.window_ps) ++h.counts[static_cast<std::size_t>((d + opt.window_ps) / opt.bin_width_ps)];
    }
  } else {
    for (const std::int64_t t : starts) {
      while (lo < stops.size() && stops[lo] < t - opt.window_ps) ++lo;
      for (std::size_t j = lo; j < stops.size(); ++j) {
        const std::int64_t d = stops[j] - t;
        if (d >= opt.window_ps) break;
        ++h.counts[static_cast<std::size_t>((d + opt.window_ps) / opt.bin_width_ps)];
      }
    }
  }
  if (opt.normalization == Normalization::LateralPeak) normalize_lateral(h);
  return h;
}

// Histogram CSV: bin_center_ps,counts,normalized
inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "# qkd-linkbench v1\n";
  out << "bin_center_ps,counts,normalized\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    out << format_number(h.center(i)) << ',' << h.counts[i] << ',' << format_number(h.normalized(i)) << '\n';
  }
}

namespace detail {

// Mean over [a, b] of exp(-|t| / tau).
inline double laplace_bin_mean(double a, double b, double tau) {
  auto F = [tau](double t) { return std::copysign(tau * -std::expm1(-std::abs(t) / tau), t); };
  return (F(b) - F(a)) / (b - a);
}

inline std::vector<double> poisson_weights(const Histogram& h) {
  std::vector<double> w(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    w[i] = 1.0 / std::max(static_cast<double>(h.counts[i]), 1.0);
  }
  return w;
}

}  // namespace detail

struct G2PulsedFit {
  fitting::FitResult fit;
  double g2_zero = 0.0;
  double g2_zero_sigma = 0.0;
  double tau_c_ps = 0.0;
  double tau_c_sigma = 0.0;
};

// Model per bin: amplitude * [g2(0) exp(-|tau|/tau_c) + sum_{n != 0} exp(-|tau + nT|/tau_c)],
// averaged over the bin, with n over every peak that reaches the window.
inline double g2_pulsed_model(std::span<const double> q, double lo_ps, double hi_ps, double T, int n_peaks) {
  const double amplitude = q[0];
  const double g2 = q[1];
  const double tau = q[2];
  double v = g2 * detail::laplace_bin_mean(lo_ps, hi_ps, tau);
  for (int n = 1; n <= n_peaks; ++n) {
    v += detail::laplace_bin_mean(lo_ps - n * T, hi_ps - n * T, tau);
    v += detail::laplace_bin_mean(lo_ps + n * T, hi_ps + n * T, tau);
  }
  return amplitude * v;
}

inline constexpr int kG2ReweightPasses = 2;

// Bounded Poisson-weighted fit of the pulsed correlation model. Initial
// guesses come from the data: central/lateral integral ratio for g2(0), the
// largest lateral peak height for the amplitude, and its half-maximum
// crossing for tau_c.
inline G2PulsedFit fit_g2_pulsed(Histogram h, std::optional<std::int64_t> rep_period_ps = std::nullopt,
                                 fitting::LeastSquaresOptions options = {}) {
  if (rep_period_ps) h.rep_period_ps = *rep_period_ps;
  h.validate();
  if (h.rep_period_ps <= 0) throw std::invalid_argument("fit_g2_pulsed: unknown repetition period");
  if (max_full_peak(h) < 5) throw std::invalid_argument("fit_g2_pulsed: histogram must span >= 5 lateral peaks per side");
  if (h.normalization != Normalization::LateralPeak) normalize_lateral(h);
  const double T = static_cast<double>(h.rep_period_ps);

  const double lateral = (peak_integral(h, 1) + peak_integral(h, -1)) / 2.0;
  const double g2_guess = lateral > 0.0 ? std::clamp(peak_integral(h, 0) / lateral, 0.0, 1.0) : 0.1;

  // Height and half-width of the +1 peak.
  std::size_t peak_bin = 0;
  double peak_height = -1.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double c = h.center(i);
    if (c >= 0.5 * T && c < 1.5 * T && h.normalized(i) > peak_height) {
      peak_height = h.normalized(i);
      peak_bin = i;
    }
  }
  if (!(peak_height > 0.0)) throw NumericError("fit_g2_pulsed: first lateral peak is empty");
  double tau_guess = 0.1 * T;
  for (std::size_t i = peak_bin; i < h.size(); ++i) {
    if (h.normalized(i) <= peak_height / 2.0) {
      tau_guess = std::clamp((h.center(i) - h.center(peak_bin)) / std::log(2.0), 0.01 * T, 0.5 * T);
      break;
    }
  }

  const double reach = std::max(-static_cast<double>(h.bin_edges_ps.front()), static_cast<double>(h.bin_edges_ps.back()));
  const int n_peaks = static_cast<int>(std::ceil(reach / T)) + 2;

  fitting::FitProblem problem;
  problem.names = {"amplitude", "g2_zero", "tau_c_ps"};
  problem.initial = {peak_height, g2_guess, tau_guess};
  problem.bounds = {{0.0, 1e3 * peak_height + 1.0}, {0.0, 10.0}, {1e-3 * T, T}};
  const auto weights = detail::poisson_weights(h);
  for (std::size_t i = 0; i < h.size(); ++i) {
    problem.data.push_back({static_cast<double>(i), h.normalized(i), weights[i] * h.norm_factor * h.norm_factor});
  }
  const std::vector<double> lo(h.bin_edges_ps.begin(), h.bin_edges_ps.end() - 1);
  const std::vector<double> hi(h.bin_edges_ps.begin() + 1, h.bin_edges_ps.end());
  problem.model = [lo, hi, T, n_peaks](std::span<const double> q, double x) {
    const auto i = static_cast<std::size_t>(x);
    return g2_pulsed_model(q, lo[i], hi[i], T, n_peaks);
  };

  // Data-weighted chi-square is biased low at small counts; refit with the
  // variances taken from the previous model (Pearson weighting).
  auto fit = fitting::least_squares(problem, options);
  for (int pass = 0; pass < kG2ReweightPasses; ++pass) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double model_counts = problem.model(fit.params, static_cast<double>(i)) * h.norm_factor;
      problem.data[i].weight = h.norm_factor * h.norm_factor / std::max(model_counts, 1.0);
    }
    problem.initial = fit.params;
    fit = fitting::least_squares(problem, options);
  }

  G2PulsedFit out;
  out.fit = std::move(fit);
  out.g2_zero = out.fit.param("g2_zero");
  out.g2_zero_sigma = out.fit.error("g2_zero");
  out.tau_c_ps = out.fit.param("tau_c_ps");
  out.tau_c_sigma = out.fit.error("tau_c_ps");
  return out;
}

struct G2LongFit {
  fitting::FitResult fit;  // baseline, bunching_amplitude, bunching_time_ps
  double on_fraction = 1.0;
  double on_fraction_sigma = 0.0;  // counting noise only, not the telegraph realization
  double bunching_time_ps = 0.0;
  double tau_trap_ps = 0.0;  // mean dark dwell = bunching time / ON fraction
};

// Fits baseline * (1 + A exp(-|tau| / tau_b)) to the long-delay histogram,
// skipping bins within exclude_ps of zero delay (the antibunching dip).
// ON fraction = 1 / (1 + A).
inline G2LongFit fit_g2_longtime(const Histogram& h, double exclude_ps, fitting::LeastSquaresOptions options = {}) {
  h.validate();
  std::vector<fitting::DataPoint> data;
  const auto weights = detail::poisson_weights(h);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double c = h.center(i);
    if (std::abs(c) < exclude_ps) continue;
    data.push_back({std::abs(c), static_cast<double>(h.counts[i]), weights[i]});
  }
  if (data.size() < 6) throw std::invalid_argument("fit_g2_longtime: too few bins outside the excluded region");

  const double reach = std::max(-static_cast<double>(h.bin_edges_ps.front()), static_cast<double>(h.bin_edges_ps.back()));
  // Baseline from the outer fifth of the window, near-zero level from the
  // innermost retained bins.
  double far_sum = 0.0, near_sum = 0.0;
  int far_n = 0, near_n = 0;
  double near_max_x = 0.0;
  {
    std::vector<double> xs;
    for (const auto& d : data) xs.push_back(d.x);
    std::sort(xs.begin(), xs.end());
    near_max_x = xs[std::min<std::size_t>(xs.size() - 1, 3)];
  }
  for (const auto& d : data) {
    if (d.x >= 0.8 * reach) {
      far_sum += d.y;
      ++far_n;
    }
    if (d.x <= near_max_x) {
      near_sum += d.y;
      ++near_n;
    }
  }
  const double baseline = far_n > 0 ? far_sum / far_n : data.back().y;
  if (!(baseline > 0.0)) throw NumericError("fit_g2_longtime: empty histogram tail");
  const double amp_guess = std::max(0.0, (near_n > 0 ? near_sum / near_n : baseline) / baseline - 1.0);
  double tb_guess = reach / 5.0;
  if (amp_guess > 0.0) {
    // First delay where the excess falls below 1/e of its near-zero value.
    std::vector<std::pair<double, double>> sorted;
    for (const auto& d : data) sorted.emplace_back(d.x, d.y / baseline - 1.0);
    std::sort(sorted.begin(), sorted.end());
    for (const auto& [x, excess] : sorted) {
      if (excess <= amp_guess / std::exp(1.0)) {
        tb_guess = std::max(x, h.width(0));
        break;
      }
    }
  }

  fitting::FitProblem problem;
  problem.names = {"baseline", "bunching_amplitude", "bunching_time_ps"};
  problem.initial = {baseline, amp_guess, tb_guess};
  problem.bounds = {{0.0, 10.0 * baseline}, {0.0, 100.0}, {h.width(0) / 10.0, 10.0 * reach}};
  problem.data = std::move(data);
  problem.model = [](std::span<const double> q, double x) { return q[0] * (1.0 + q[1] * std::exp(-x / q[2])); };

  G2LongFit out;
  out.fit = fitting::least_squares(problem, options);
  const double A = out.fit.param("bunching_amplitude");
  out.on_fraction = 1.0 / (1.0 + A);
  out.on_fraction_sigma = out.fit.error("bunching_amplitude") / ((1.0 + A) * (1.0 + A));
  out.bunching_time_ps = out.fit.param("bunching_time_ps");
  out.tau_trap_ps = out.bunching_time_ps / out.on_fraction;
  return out;
}

struct SaturationPoint {
  double power = 0.0;
  double rate = 0.0;
};

struct SaturationFit {
  fitting::FitResult fit;  // a, b, r_inf, p_sat
  bool ill_conditioned = false;

  double a() const { return fit.params[0]; }
  double b() const { return fit.params[1]; }
  double r_inf() const { return fit.params[2]; }
  double p_sat() const { return fit.params[3]; }

  double rate(double p) const { return a() + b() * p + r_inf() * p / (p + p_sat()); }
  double saturation_param(double p) const { return p / p_sat(); }
  // Mean collected photons per pulse at pump power p.
  double mu_mol(double p, double rep_rate) const { return rate(p) / rep_rate; }
};

inline double saturation_model(std::span<const double> q, double p) { return q[0] + q[1] * p + q[2] * p / (p + q[3]); }

// R = a + b p + R_inf p / (p + p_S). Initial guesses: a from the lowest-power
// rate, b = 0, R_inf from the largest rate, p_S at the half-maximum crossing.
inline SaturationFit fit_saturation(std::vector<SaturationPoint> points, fitting::LeastSquaresOptions options = {}) {
  if (points.size() < 6) throw std::invalid_argument("fit_saturation: need at least 6 points");
  std::sort(points.begin(), points.end(), [](const auto& x, const auto& y) { return x.power < y.power; });
  for (const auto& pt : points) {
    if (!(pt.power >= 0.0) || !std::isfinite(pt.rate)) throw std::invalid_argument("fit_saturation: bad data point");
  }
  const double p_max = points.back().power;
  if (!(p_max > 0.0)) throw std::invalid_argument("fit_saturation: all powers are zero");
  double r_max = 0.0;
  for (const auto& pt : points) r_max = std::max(r_max, pt.rate);
  const double a_guess = std::max(0.0, points.front().power == 0.0 ? points.front().rate : 0.0);
  const double r_inf_guess = std::max(r_max - a_guess, 1e-12);
  double p_sat_guess = p_max / 2.0;
  for (const auto& pt : points) {
    if (pt.rate - a_guess >= r_inf_guess / 2.0) {
      p_sat_guess = std::max(pt.power, p_max * 1e-3);
      break;
    }
  }

  fitting::FitProblem problem;
  problem.names = {"a", "b", "r_inf", "p_sat"};
  problem.initial = {a_guess, 0.0, r_inf_guess, p_sat_guess};
  problem.bounds = {{0.0, 10.0 * r_max + 1.0}, {0.0, 100.0 * r_max / p_max + 1.0}, {0.0, 100.0 * r_max + 1.0},
                    {p_max * 1e-6, p_max * 1e3}};
  for (const auto& pt : points) problem.data.push_back({pt.power, pt.rate, 1.0});
  problem.model = saturation_model;

  SaturationFit out;
  out.fit = fitting::least_squares(problem, options);

  const auto jac = fitting::jacobian(problem, out.fit.params);
  Eigen::MatrixXd cols = jac;
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    const double nrm = cols.col(j).norm();
    if (nrm > 0.0) cols.col(j) /= nrm;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cols);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
  int below = 0, above = 0;
  for (const auto& pt : points) (pt.power < out.p_sat() ? below : above)++;
  out.ill_conditioned = cond > 1e6 || below < 2 || above < 2;
  return out;
}

}  // namespace qkdlink::photonstats
