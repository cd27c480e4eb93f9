#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qkdlink/budget.hpp"
#include "qkdlink/rates.hpp"
#include "qkdlink/rng.hpp"
#include "qkdlink/sources.hpp"
#include "qkdlink/timetag.hpp"

namespace qkdlink::montecarlo {

// Polarization states and detector channels share the index order H, V, D, A.
enum class PolState : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

inline constexpr int basis_of(int state) { return state >> 1; }  // 0 = H/V, 1 = D/A

struct AliceSequence {
  enum class Kind { Random, Cyclic, Fixed };
  Kind kind = Kind::Random;
  PolState fixed = PolState::H;

  static AliceSequence random() { return {Kind::Random, PolState::H}; }
  static AliceSequence cyclic() { return {Kind::Cyclic, PolState::H}; }
  static AliceSequence only(PolState s) { return {Kind::Fixed, s}; }
};

struct SimConfig {
  sources::SourceModel source = sources::SpsModel(0.08, 0.02);
  rates::LinkParams link;
  double basis_split = 0.5;  // probability a photon is routed to the D/A analyzer
  AliceSequence alice_sequence = AliceSequence::random();
  std::uint64_t n_pulses = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;

  // Each of the four detectors dark-clicks with P_D / 4 per pulse.
  double dark_per_detector() const { return link.p_dark / 4.0; }

  void validate() const {
    link.validate();
    if (!(basis_split > 0.0 && basis_split < 1.0)) throw std::invalid_argument("SimConfig: basis_split outside (0, 1)");
    if (n_pulses < 1) throw std::invalid_argument("SimConfig: n_pulses must be >= 1");
    if (workers < 1) throw std::invalid_argument("SimConfig: workers must be >= 1");
  }
};

struct SimOutcome {
  std::uint64_t pulses = 0;
  std::uint64_t clicked_pulses = 0;  // pulses with at least one click
  std::array<std::uint64_t, 4> clicks_per_detector{};
  std::uint64_t sifted_bits = 0;
  std::uint64_t sifted_errors = 0;
  std::uint64_t double_clicks = 0;  // sifted pulses resolved by a random bit
  std::array<std::uint64_t, 4> pulses_per_state{};
  std::array<std::array<std::uint64_t, 4>, 4> outcome_matrix{};  // [state][detector] clicks

  // Undefined (nullopt) when nothing survived sifting.
  std::optional<double> empirical_qber() const {
    if (sifted_bits == 0) return std::nullopt;
    return static_cast<double>(sifted_errors) / static_cast<double>(sifted_bits);
  }

  double empirical_gain() const {
    return pulses == 0 ? 0.0 : static_cast<double>(clicked_pulses) / static_cast<double>(pulses);
  }

  SimOutcome& operator+=(const SimOutcome& o) {
    pulses += o.pulses;
    clicked_pulses += o.clicked_pulses;
    sifted_bits += o.sifted_bits;
    sifted_errors += o.sifted_errors;
    double_clicks += o.double_clicks;
    for (std::size_t i = 0; i < 4; ++i) {
      clicks_per_detector[i] += o.clicks_per_detector[i];
      pulses_per_state[i] += o.pulses_per_state[i];
      for (std::size_t j = 0; j < 4; ++j) outcome_matrix[i][j] += o.outcome_matrix[i][j];
    }
    return *this;
  }

  friend bool operator==(const SimOutcome&, const SimOutcome&) = default;
};

namespace detail {

inline constexpr std::uint64_t kBatchPulses = 1 << 16;

struct PulseKernel {
  sources::PhotonNumberDist dist;
  double survive;
  double e_det;
  double basis_split;
  double dark;
  AliceSequence sequence;
  std::uint64_t seed;

  void run(std::uint64_t first, std::uint64_t last, SimOutcome& out) const {
    out.pulses += last - first;
    for (std::uint64_t pulse = first; pulse < last; ++pulse) {
      StreamRng rng(seed, pulse);
      int state = 0;
      switch (sequence.kind) {
        case AliceSequence::Kind::Random:
          state = static_cast<int>(rng() >> 62);
          break;
        case AliceSequence::Kind::Cyclic:
          state = static_cast<int>(pulse & 3);
          break;
        case AliceSequence::Kind::Fixed:
          state = static_cast<int>(sequence.fixed);
          break;
      }
      ++out.pulses_per_state[state];

      std::array<bool, 4> click{};
      const unsigned photons = dist.sample(rng.uniform());
      for (unsigned k = 0; k < photons; ++k) {
        if (!(rng.uniform() < survive)) continue;
        const int arm = rng.uniform() < basis_split ? 1 : 0;
        int detector;
        if (arm == basis_of(state)) {
          const bool flip = rng.uniform() < e_det;
          detector = flip ? (state ^ 1) : state;
        } else {
          detector = 2 * arm + static_cast<int>(rng() >> 63);
        }
        click[detector] = true;
      }
      for (int d = 0; d < 4; ++d) {
        if (rng.uniform() < dark) click[d] = true;
      }

      bool any = false;
      for (int d = 0; d < 4; ++d) {
        if (click[d]) {
          any = true;
          ++out.clicks_per_detector[d];
          ++out.outcome_matrix[state][d];
        }
      }
      if (!any) continue;
      ++out.clicked_pulses;

      const bool hv = click[0] || click[1];
      const bool da = click[2] || click[3];
      if (hv == da) continue;  // both arms fired
      const int arm = da ? 1 : 0;
      if (arm != basis_of(state)) continue;
      const int base = 2 * arm;
      int bit;
      if (click[base] && click[base + 1]) {
        ++out.double_clicks;
        bit = static_cast<int>(rng() >> 63);
      } else {
        bit = click[base + 1] ? 1 : 0;
      }
      ++out.sifted_bits;
      if (bit != (state & 1)) ++out.sifted_errors;
    }
  }
};

}  // namespace detail

// Pulse-level BB84 simulation. Pulse i draws from its own counter-based
// stream, so the merged tallies are identical for any worker count.
inline SimOutcome simulate_bb84(const SimConfig& cfg) {
  cfg.validate();
  const detail::PulseKernel kernel{sources::number_dist(cfg.source),
                                   cfg.link.eta_total(),
                                   cfg.link.e_det,
                                   cfg.basis_split,
                                   cfg.dark_per_detector(),
                                   cfg.alice_sequence,
                                   cfg.seed};
  const std::uint64_t n_batches = (cfg.n_pulses + detail::kBatchPulses - 1) / detail::kBatchPulses;
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(cfg.workers, n_batches));

  std::vector<SimOutcome> partial(workers);
  auto work = [&](unsigned w) {
    for (std::uint64_t b = w; b < n_batches; b += workers) {
      const std::uint64_t first = b * detail::kBatchPulses;
      const std::uint64_t last = std::min(cfg.n_pulses, first + detail::kBatchPulses);
      kernel.run(first, last, partial[w]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  SimOutcome total;
  for (const auto& p : partial) total += p;
  return total;
}

// One run per prepared state with the sequence pinned to that state; row i is
// the pre-sifting click distribution over the four detectors.
inline budget::OutcomeMatrix outcome_matrix(SimConfig cfg) {
  budget::OutcomeMatrix::Rows rows{};
  for (int s = 0; s < 4; ++s) {
    cfg.alice_sequence = AliceSequence::only(static_cast<PolState>(s));
    const SimOutcome out = simulate_bb84(cfg);
    double total = 0.0;
    for (auto c : out.clicks_per_detector) total += static_cast<double>(c);
    if (total == 0.0) throw NumericError("outcome_matrix: no clicks recorded for prepared state " + std::to_string(s));
    for (int d = 0; d < 4; ++d) rows[s][d] = static_cast<double>(out.clicks_per_detector[d]) / total;
  }
  return budget::OutcomeMatrix(rows);
}

// Synthetic HBT stream. Each laser period the emitter, if ON, emits 0, 1 or
// 2 photons (mean mu, pair probability mu^2 g2/2); each photon is delayed by
// an exponential lifetime and sent to channel 1 or 2 with equal probability.
// ON/OFF blinking is a telegraph process with exponential dwell times.
inline TimeTagStream generate_timetags(const EmitterDynamics& dyn, std::int64_t rep_period_ps, std::uint64_t cycles,
                                       std::uint64_t seed) {
  dyn.validate();
  if (rep_period_ps <= 0) throw std::invalid_argument("generate_timetags: rep_period_ps must be positive");
  if (cycles < 1) throw std::invalid_argument("generate_timetags: need at least one excitation cycle");
  const auto dist = sources::sps_number_dist(sources::SpsModel(dyn.mu, dyn.g2_zero));
  const double tau_c_ps = dyn.tau_c_ns * 1e3;
  const bool blinks = dyn.on_fraction < 1.0;
  const double on_mean_ps = blinks ? dyn.tau_on_ns() * 1e3 : 0.0;
  const double off_mean_ps = dyn.tau_trap_ns * 1e3;

  StreamRng rng(seed, 0);
  bool on = !blinks || rng.uniform() < dyn.on_fraction;
  double next_switch = blinks ? rng.exponential(on ? on_mean_ps : off_mean_ps) : 0.0;

  std::vector<TimeTag> records;
  records.reserve(static_cast<std::size_t>(static_cast<double>(cycles) * dyn.mu * dyn.on_fraction * 1.05) + 16);
  for (std::uint64_t k = 0; k < cycles; ++k) {
    const double t0 = static_cast<double>(k) * static_cast<double>(rep_period_ps);
    if (blinks) {
      while (t0 >= next_switch) {
        on = !on;
        next_switch += rng.exponential(on ? on_mean_ps : off_mean_ps);
      }
    }
    if (!on) continue;
    const unsigned photons = dist.sample(rng.uniform());
    for (unsigned p = 0; p < photons; ++p) {
      const double t = t0 + rng.exponential(tau_c_ps);
      const auto channel = static_cast<std::uint8_t>(1 + (rng() >> 63));
      records.push_back({channel, static_cast<std::int64_t>(std::llround(t))});
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const TimeTag& a, const TimeTag& b) { return a.t_ps < b.t_ps; });
  return TimeTagStream(std::move(records), rep_period_ps);
}

}  // namespace qkdlink::montecarlo
