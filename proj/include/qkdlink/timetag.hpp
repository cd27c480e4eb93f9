#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qkdlink/error.hpp"

namespace qkdlink {

struct TimeTag {
  std::uint8_t channel = 0;
  std::int64_t t_ps = 0;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Detection records ordered by time. Timestamps are integer picoseconds.
class TimeTagStream {
 public:
  TimeTagStream() = default;
  TimeTagStream(std::vector<TimeTag> records, std::int64_t rep_period_ps)
      : records_(std::move(records)), rep_period_ps_(rep_period_ps) {
    validate();
  }

  const std::vector<TimeTag>& records() const { return records_; }
  std::int64_t rep_period_ps() const { return rep_period_ps_; }
  std::size_t size() const { return records_.size(); }

  std::set<std::uint8_t> channels() const {
    std::set<std::uint8_t> out;
    for (const auto& r : records_) out.insert(r.channel);
    return out;
  }

  // Sorted timestamps of one channel.
  std::vector<std::int64_t> channel_times(std::uint8_t channel) const {
    std::vector<std::int64_t> out;
    for (const auto& r : records_) {
      if (r.channel == channel) out.push_back(r.t_ps);
    }
    return out;
  }

  // Time between the first and the last record.
  std::int64_t span_ps() const { return records_.empty() ? 0 : records_.back().t_ps - records_.front().t_ps; }

 private:
  void validate() const {
    if (rep_period_ps_ <= 0) throw std::invalid_argument("TimeTagStream: rep_period_ps must be positive");
    std::vector<std::int64_t> last(256, INT64_MIN);
    for (const auto& r : records_) {
      if (r.t_ps < last[r.channel]) throw std::invalid_argument("TimeTagStream: timestamps decrease within a channel");
      last[r.channel] = r.t_ps;
    }
  }

  std::vector<TimeTag> records_;
  std::int64_t rep_period_ps_ = 1;
};

// Emitter parameters for synthetic streams: excited-state lifetime, pair
// statistics, and ON/OFF blinking through a dark (triplet) state.
struct EmitterDynamics {
  double tau_c_ns = 3.6;
  double g2_zero = 0.02;
  double on_fraction = 1.0;
  double tau_trap_ns = 1000.0;  // mean OFF dwell
  double mu = 0.08;             // mean photons per excitation cycle while ON

  void validate() const {
    if (!(tau_c_ns > 0.0)) throw std::invalid_argument("EmitterDynamics: tau_c must be > 0");
    if (!(on_fraction > 0.0 && on_fraction <= 1.0)) throw std::invalid_argument("EmitterDynamics: on_fraction outside (0, 1]");
    if (!(tau_trap_ns > 0.0)) throw std::invalid_argument("EmitterDynamics: tau_trap must be > 0");
    if (!(g2_zero >= 0.0 && g2_zero < 1.0)) throw std::invalid_argument("EmitterDynamics: g2_zero outside [0, 1)");
    if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("EmitterDynamics: mu outside (0, 1]");
  }

  // Mean ON dwell so that the stationary ON probability is on_fraction.
  double tau_on_ns() const { return tau_trap_ns * on_fraction / (1.0 - on_fraction); }

  // Correlation time of the ON/OFF telegraph signal.
  double bunching_time_ns() const { return tau_trap_ns * on_fraction; }
};

// timetag v1 text format:
//   # timetag v1 rep_period_ps=<T>
//   <channel_index>,<timestamp_ps>
inline void write_timetags(std::ostream& out, const TimeTagStream& stream) {
  out << "# timetag v1 rep_period_ps=" << stream.rep_period_ps() << '\n';
  std::string line;
  for (const auto& r : stream.records()) {
    line.clear();
    line += std::to_string(r.channel);
    line += ',';
    line += std::to_string(r.t_ps);
    line += '\n';
    out << line;
  }
}

namespace detail {

template <typename T>
bool parse_uint(std::string_view text, T& value) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  return res.ec == std::errc() && res.ptr == end;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline TimeTagStream read_timetags(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::int64_t period = 0;
  bool have_header = false;
  std::vector<TimeTag> records;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = detail::trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      constexpr std::string_view kPrefix = "# timetag v1 rep_period_ps=";
      if (text.substr(0, kPrefix.size()) != kPrefix) throw ParseError(line_no, "expected '# timetag v1 rep_period_ps=<T>' header");
      std::uint64_t t = 0;
      if (!detail::parse_uint(detail::trim(text.substr(kPrefix.size())), t) || t == 0) {
        throw ParseError(line_no, "bad rep_period_ps in header");
      }
      period = static_cast<std::int64_t>(t);
      have_header = true;
      continue;
    }
    if (text.front() == '#') continue;
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) throw ParseError(line_no, "expected 'channel_index,timestamp_ps'");
    unsigned channel = 0;
    std::uint64_t t = 0;
    if (!detail::parse_uint(detail::trim(text.substr(0, comma)), channel) || channel > 255) {
      throw ParseError(line_no, "bad channel index");
    }
    if (!detail::parse_uint(detail::trim(text.substr(comma + 1)), t) || t > static_cast<std::uint64_t>(INT64_MAX)) {
      throw ParseError(line_no, "bad timestamp (unsigned integer picoseconds expected)");
    }
    records.push_back({static_cast<std::uint8_t>(channel), static_cast<std::int64_t>(t)});
  }
  if (!have_header) throw ParseError(line_no, "missing timetag header");
  // The file only guarantees per-channel order; merge into global time order.
  std::stable_sort(records.begin(), records.end(),
                   [](const TimeTag& a, const TimeTag& b) { return a.t_ps < b.t_ps; });
  try {
    return TimeTagStream(std::move(records), period);
  } catch (const std::invalid_argument& e) {
    throw ParseError(line_no, e.what());
  }
}

}  // namespace qkdlink
