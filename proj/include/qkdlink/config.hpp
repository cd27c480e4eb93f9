#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qkdlink/budget.hpp"
#include "qkdlink/error.hpp"
#include "qkdlink/montecarlo.hpp"
#include "qkdlink/format.hpp"
#include "qkdlink/rates.hpp"
#include "qkdlink/sources.hpp"

namespace qkdlink::config {

// What a key's value must look like. Dimensioned kinds require a unit suffix.
enum class Kind {
  Number,     // dimensionless
  NumberList, // dimensionless, comma separated
  Loss,       // db
  LossList,   // db, comma list or start:step:stop range
  Frequency,  // hz, khz, mhz, ghz -> Hz
  Time,       // ps, ns, us, ms, s -> ps
  Count,      // unsigned integer
  Bool,
  Word,
  WordList,
};

struct KeySpec {
  std::string_view section;
  std::string_view key;
  Kind kind;
};

inline constexpr KeySpec kSchema[] = {
    {"source", "mu_mol", Kind::Number},
    {"source", "g2_zero", Kind::Number},
    {"source", "mu_ref", Kind::NumberList},
    {"source", "wcp_mu", Kind::Number},
    {"source", "wcp_nu", Kind::Number},

    {"link", "eta_bob", Kind::Number},
    {"link", "p_dark", Kind::Number},
    {"link", "e_det_sps", Kind::Number},
    {"link", "e_det_wcp", Kind::Number},
    {"link", "rep_rate", Kind::Frequency},
    {"link", "channel_loss", Kind::Loss},

    {"protocol", "sift_factor", Kind::Number},
    {"protocol", "f_ec", Kind::Number},
    {"protocol", "qber_sps", Kind::Number},

    {"sweep", "loss_grid", Kind::LossList},
    {"sweep", "loss_includes_bob", Kind::Bool},
    {"sweep", "models", Kind::WordList},

    {"simulate", "model", Kind::Word},
    {"simulate", "pulses", Kind::Count},
    {"simulate", "seed", Kind::Count},
    {"simulate", "basis_split", Kind::Number},
    {"simulate", "workers", Kind::Count},
    {"simulate", "alice_sequence", Kind::Word},

    {"budget", "mu_mol", Kind::Number},
    {"budget", "eta_opt_alice", Kind::Number},
    {"budget", "eta_col", Kind::NumberList},
    {"budget", "on_frac", Kind::Number},
    {"budget", "p_exc_inf", Kind::Number},
    {"budget", "sat_param", Kind::Number},
    {"budget", "pump_ratio", Kind::Number},
    {"budget", "eta_pump", Kind::Number},
    {"budget", "qy", Kind::NumberList},
    {"budget", "eta_opt_star", Kind::Number},
    {"budget", "eta_col_star", Kind::Number},
    {"budget", "eta_pump_star", Kind::Number},
};

inline const KeySpec* find_key(std::string_view section, std::string_view key) {
  for (const auto& k : kSchema) {
    if (k.section == section && k.key == key) return &k;
  }
  return nullptr;
}

inline bool known_section(std::string_view section) {
  return std::any_of(std::begin(kSchema), std::end(kSchema), [&](const KeySpec& k) { return k.section == section; });
}

struct RawValue {
  std::string text;
  std::string provenance;  // paper | measured | assumed, or empty
  std::size_t line = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

// Parsed text: [section] headers, `key = value [unit] [(provenance)]` lines,
// comments starting with '#' or ';'.
class Document {
 public:
  static Document parse(std::istream& in) {
    Document doc;
    std::string line;
    std::size_t line_no = 0;
    std::string section;
    while (std::getline(in, line)) {
      ++line_no;
      std::string_view text = detail::trim(line);
      if (const auto hash = text.find('#'); hash != std::string_view::npos) text = detail::trim(text.substr(0, hash));
      if (text.empty() || text.front() == ';') continue;
      if (text.front() == '[') {
        if (text.back() != ']') throw ParseError(line_no, "unterminated section header");
        section = detail::lower(detail::trim(text.substr(1, text.size() - 2)));
        if (!known_section(section)) throw ParseError(line_no, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
      if (section.empty()) throw ParseError(line_no, "key outside of any section");
      const std::string key = detail::lower(detail::trim(text.substr(0, eq)));
      if (!find_key(section, key)) throw ParseError(line_no, "unknown key '" + key + "' in [" + section + "]");
      std::string_view value = detail::trim(text.substr(eq + 1));
      RawValue raw;
      raw.line = line_no;
      if (!value.empty() && value.back() == ')') {
        const auto open = value.rfind('(');
        if (open == std::string_view::npos) throw ParseError(line_no, "unbalanced ')'");
        raw.provenance = detail::lower(detail::trim(value.substr(open + 1, value.size() - open - 2)));
        if (raw.provenance != "paper" && raw.provenance != "measured" && raw.provenance != "assumed") {
          throw ParseError(line_no, "provenance must be (paper), (measured) or (assumed)");
        }
        value = detail::trim(value.substr(0, open));
      }
      if (value.empty()) throw ParseError(line_no, "empty value for '" + key + "'");
      raw.text = std::string(value);
      auto& sec = doc.values_[section];
      if (sec.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
      sec.emplace(key, std::move(raw));
    }
    return doc;
  }

  static Document parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
  }

  bool has(std::string_view section, std::string_view key) const { return lookup(section, key) != nullptr; }

  const RawValue* lookup(std::string_view section, std::string_view key) const {
    const auto s = values_.find(std::string(section));
    if (s == values_.end()) return nullptr;
    const auto k = s->second.find(std::string(key));
    return k == s->second.end() ? nullptr : &k->second;
  }

  std::string provenance(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    return v && !v->provenance.empty() ? v->provenance : "unspecified";
  }

  // Typed accessors; values are converted to base units (dB, Hz, ps).
  std::optional<double> number(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    const auto list = numbers_of(*v, spec(section, key));
    if (list.size() != 1) throw ParseError(v->line, "'" + std::string(key) + "' expects a single value");
    return list.front();
  }

  std::optional<std::vector<double>> numbers(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    return numbers_of(*v, spec(section, key));
  }

  std::optional<std::uint64_t> count(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    std::uint64_t out = 0;
    const auto res = std::from_chars(v->text.data(), v->text.data() + v->text.size(), out);
    if (res.ec != std::errc() || res.ptr != v->text.data() + v->text.size()) {
      throw ParseError(v->line, "'" + std::string(key) + "' expects an unsigned integer");
    }
    return out;
  }

  std::optional<bool> flag(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    const auto t = detail::lower(v->text);
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    throw ParseError(v->line, "'" + std::string(key) + "' expects true or false");
  }

  std::optional<std::string> word(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    return detail::lower(v->text);
  }

  std::optional<std::vector<std::string>> words(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    if (!v) return std::nullopt;
    std::vector<std::string> out;
    for (auto w : detail::split(v->text, ',')) {
      if (w.empty()) throw ParseError(v->line, "empty list entry in '" + std::string(key) + "'");
      out.push_back(detail::lower(w));
    }
    return out;
  }

  std::size_t line_of(std::string_view section, std::string_view key) const {
    const auto* v = lookup(section, key);
    return v ? v->line : 0;
  }

 private:
  static Kind spec(std::string_view section, std::string_view key) { return find_key(section, key)->kind; }

  static std::vector<double> numbers_of(const RawValue& v, Kind kind) {
    // Split off a trailing alphabetic unit suffix.
    std::string_view text = v.text;
    std::size_t cut = text.size();
    while (cut > 0 && std::isalpha(static_cast<unsigned char>(text[cut - 1]))) --cut;
    const std::string unit = detail::lower(detail::trim(text.substr(cut)));
    text = detail::trim(text.substr(0, cut));

    double scale = 1.0;
    switch (kind) {
      case Kind::Number:
      case Kind::NumberList:
        if (!unit.empty()) throw ParseError(v.line, "dimensionless value must not carry a unit ('" + unit + "')");
        break;
      case Kind::Loss:
      case Kind::LossList:
        if (unit != "db") throw ParseError(v.line, "loss value requires the 'db' suffix");
        break;
      case Kind::Frequency:
        if (unit == "hz") scale = 1.0;
        else if (unit == "khz") scale = 1e3;
        else if (unit == "mhz") scale = 1e6;
        else if (unit == "ghz") scale = 1e9;
        else throw ParseError(v.line, "frequency requires a hz/khz/mhz/ghz suffix");
        break;
      case Kind::Time:
        if (unit == "ps") scale = 1.0;
        else if (unit == "ns") scale = 1e3;
        else if (unit == "us") scale = 1e6;
        else if (unit == "ms") scale = 1e9;
        else if (unit == "s") scale = 1e12;
        else throw ParseError(v.line, "time requires a ps/ns/us/ms/s suffix");
        break;
      default:
        throw ParseError(v.line, "value is not numeric");
    }

    const bool list_ok = kind == Kind::NumberList || kind == Kind::LossList;
    std::vector<double> out;
    if (list_ok && text.find(':') != std::string_view::npos) {
      const auto parts = detail::split(text, ':');
      double a = 0, step = 0, b = 0;
      if (parts.size() != 3 || !detail::parse_double(parts[0], a) || !detail::parse_double(parts[1], step) ||
          !detail::parse_double(parts[2], b)) {
        throw ParseError(v.line, "range must be start:step:stop");
      }
      if (!(step > 0.0) || b < a) throw ParseError(v.line, "range needs step > 0 and stop >= start");
      const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
      for (std::size_t i = 0; i <= n; ++i) out.push_back((a + static_cast<double>(i) * step) * scale);
      return out;
    }
    for (auto item : detail::split(text, ',')) {
      double x = 0.0;
      if (!detail::parse_double(item, x)) throw ParseError(v.line, "not a number: '" + std::string(item) + "'");
      out.push_back(x * scale);
    }
    if (!list_ok && out.size() != 1) throw ParseError(v.line, "expected a single value");
    return out;
  }

  std::map<std::string, std::map<std::string, RawValue>> values_;
};

// Parses a bare loss grid (CLI override): "0,5,10" or "0:1:40", optional db.
inline std::vector<double> parse_loss_grid(const std::string& text) {
  std::string t = std::string(detail::trim(text));
  if (t.empty()) throw ConfigError("empty loss grid");
  const auto l = detail::lower(t);
  if (l.size() < 2 || l.substr(l.size() - 2) != "db") t += " db";
  try {
    return *Document::parse_string("[sweep]\nloss_grid = " + t + "\n").numbers("sweep", "loss_grid");
  } catch (const ParseError& e) {
    std::string why = e.what();
    why = why.substr(why.find(": ") + 2);
    throw ConfigError("bad loss grid '" + text + "': " + why);
  }
}

struct BudgetCase {
  double eta_col = 0.0;
  std::optional<double> qy_reference;  // configured QY; extraction is reported alongside
};

struct BudgetConfig {
  double mu_mol = 0.0;
  double eta_opt_alice = 0.0;
  double on_frac = 1.0;
  double p_exc_inf = 0.75;
  std::optional<double> sat_param;
  std::optional<double> pump_ratio;
  std::optional<double> eta_pump;  // direct override
  double eta_opt_star = 0.0;
  double eta_col_star = 0.0;
  std::optional<double> eta_pump_star;  // defaults to p_exc_inf
  std::vector<BudgetCase> cases;
  std::map<std::string, std::string> provenance;

  double pump() const {
    if (eta_pump) return *eta_pump;
    return budget::pump_efficiency(p_exc_inf, sat_param.value_or(INFINITY), pump_ratio);
  }
  double pump_star() const { return eta_pump_star.value_or(p_exc_inf); }
};

struct SimulateConfig {
  std::string model = "sps";  // sps | wcp | wcp_decoy
  std::uint64_t pulses = 1'000'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  double basis_split = 0.5;
  montecarlo::AliceSequence sequence = montecarlo::AliceSequence::random();
};

struct RunConfig {
  double mu_mol = 0.08;
  double g2_zero = 0.02;
  std::vector<double> mu_ref;
  double wcp_mu = 0.5;
  std::optional<double> wcp_nu;

  rates::LinkParams link;  // e_det holds the SPS value
  double e_det_sps = 0.039;
  double e_det_wcp = 0.008;
  double channel_loss_db = 0.0;
  std::optional<double> qber_sps;

  std::vector<double> loss_grid{0.0};
  rates::LossConvention convention = rates::LossConvention::ChannelOnly;
  std::vector<std::string> models{"sps", "wcp_no_decoy", "wcp_decoy", "sps_mu_ref"};

  SimulateConfig simulate;
  std::optional<BudgetConfig> budget;

  sources::SpsModel sps() const { return sources::SpsModel(mu_mol, g2_zero); }
  sources::WcpModel wcp() const { return sources::WcpModel(wcp_mu, wcp_nu); }

  // Loss-sweep curves in configured order.
  std::vector<rates::SweepModel> sweep_models() const {
    std::vector<rates::SweepModel> out;
    for (const auto& name : models) {
      if (name == "sps") {
        out.push_back({"sps", rates::RateKind::Sps, sps(), e_det_sps, qber_sps});
      } else if (name == "wcp_no_decoy") {
        out.push_back({"wcp_no_decoy", rates::RateKind::WcpNoDecoy, wcp(), e_det_wcp, std::nullopt});
      } else if (name == "wcp_decoy") {
        if (!wcp_nu) throw ConfigError("model wcp_decoy needs [source] wcp_nu");
        out.push_back({"wcp_decoy", rates::RateKind::WcpDecoy, wcp(), e_det_wcp, std::nullopt});
      } else if (name == "sps_mu_ref") {
        if (mu_ref.empty()) throw ConfigError("model sps_mu_ref needs [source] mu_ref");
        for (std::size_t i = 0; i < mu_ref.size(); ++i) {
          const std::string label = mu_ref.size() == 1 ? "sps_mu_ref" : "sps_mu_ref_" + std::to_string(i + 1);
          out.push_back({label, rates::RateKind::Sps, sources::SpsModel(mu_ref[i], g2_zero), e_det_sps, std::nullopt});
        }
      } else {
        throw ConfigError("unknown sweep model '" + name + "'");
      }
    }
    return out;
  }

  // Link as seen by the simulator: configured channel loss and the e_det of
  // the simulated source.
  rates::LinkParams simulate_link() const {
    rates::LinkParams l = rates::link_at_loss(link, channel_loss_db, convention);
    l.e_det = simulate.model == "sps" ? e_det_sps : e_det_wcp;
    return l;
  }

  sources::SourceModel simulate_source() const {
    if (simulate.model == "sps") return sps();
    if (simulate.model == "wcp") return sources::WcpModel(wcp_mu);
    if (simulate.model == "wcp_decoy") {
      if (!wcp_nu) throw ConfigError("[simulate] model = wcp_decoy needs [source] wcp_nu");
      return sources::WcpModel(*wcp_nu);
    }
    throw ConfigError("unknown [simulate] model '" + simulate.model + "'");
  }

  montecarlo::SimConfig sim_config() const {
    montecarlo::SimConfig cfg;
    cfg.source = simulate_source();
    cfg.link = simulate_link();
    cfg.basis_split = simulate.basis_split;
    cfg.alice_sequence = simulate.sequence;
    cfg.n_pulses = simulate.pulses;
    cfg.seed = simulate.seed;
    cfg.workers = simulate.workers;
    return cfg;
  }
};

namespace detail {

template <typename F>
auto wrap(const Document& doc, std::string_view section, std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    const auto line = doc.line_of(section, key);
    const std::string where = "[" + std::string(section) + "] " + std::string(key);
    if (line > 0) throw ParseError(line, where + ": " + e.what());
    throw ConfigError(where + ": " + e.what());
  }
}

inline montecarlo::AliceSequence parse_sequence(const std::string& w, std::size_t line) {
  if (w == "random") return montecarlo::AliceSequence::random();
  if (w == "cyclic") return montecarlo::AliceSequence::cyclic();
  if (w == "h") return montecarlo::AliceSequence::only(montecarlo::PolState::H);
  if (w == "v") return montecarlo::AliceSequence::only(montecarlo::PolState::V);
  if (w == "d") return montecarlo::AliceSequence::only(montecarlo::PolState::D);
  if (w == "a") return montecarlo::AliceSequence::only(montecarlo::PolState::A);
  throw ParseError(line, "alice_sequence must be random, cyclic, h, v, d or a");
}

}  // namespace detail

inline BudgetConfig load_budget(const Document& doc) {
  BudgetConfig b;
  auto required = [&](std::string_view key) {
    const auto v = doc.number("budget", key);
    if (!v) throw ConfigError("[budget] missing required key '" + std::string(key) + "'");
    b.provenance[std::string(key)] = doc.provenance("budget", key);
    return *v;
  };
  auto optional = [&](std::string_view key) {
    const auto v = doc.number("budget", key);
    if (v) b.provenance[std::string(key)] = doc.provenance("budget", key);
    return v;
  };
  if (doc.has("budget", "mu_mol")) {
    b.mu_mol = required("mu_mol");
  } else if (const auto mu = doc.number("source", "mu_mol")) {
    b.mu_mol = *mu;
    b.provenance["mu_mol"] = doc.provenance("source", "mu_mol");
  } else {
    throw ConfigError("[budget] missing required key 'mu_mol'");
  }
  b.eta_opt_alice = required("eta_opt_alice");
  b.on_frac = required("on_frac");
  b.eta_opt_star = required("eta_opt_star");
  b.eta_col_star = required("eta_col_star");
  b.p_exc_inf = optional("p_exc_inf").value_or(0.75);
  if (!doc.has("budget", "p_exc_inf")) b.provenance["p_exc_inf"] = "default";
  b.sat_param = optional("sat_param");
  b.pump_ratio = optional("pump_ratio");
  b.eta_pump = optional("eta_pump");
  b.eta_pump_star = optional("eta_pump_star");
  if (!b.sat_param && !b.pump_ratio && !b.eta_pump) {
    throw ConfigError("[budget] missing required key 'sat_param' (or 'pump_ratio' / 'eta_pump')");
  }

  const auto cols = doc.numbers("budget", "eta_col");
  if (!cols || cols->empty()) throw ConfigError("[budget] missing required key 'eta_col'");
  b.provenance["eta_col"] = doc.provenance("budget", "eta_col");
  const auto qy = doc.numbers("budget", "qy");
  if (qy) {
    b.provenance["qy"] = doc.provenance("budget", "qy");
    if (qy->size() != cols->size()) {
      throw ParseError(doc.line_of("budget", "qy"), "qy needs one entry per eta_col entry");
    }
  }
  for (std::size_t i = 0; i < cols->size(); ++i) {
    b.cases.push_back({(*cols)[i], qy ? std::optional<double>((*qy)[i]) : std::nullopt});
  }

  auto unit = [&](double v, std::string_view key) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParseError(doc.line_of("budget", key), "[budget] " + std::string(key) + " must lie in [0, 1]");
    }
  };
  unit(b.eta_opt_alice, "eta_opt_alice");
  unit(b.on_frac, "on_frac");
  unit(b.p_exc_inf, "p_exc_inf");
  unit(b.eta_opt_star, "eta_opt_star");
  unit(b.eta_col_star, "eta_col_star");
  for (const auto& c : b.cases) unit(c.eta_col, "eta_col");
  if (b.eta_pump) unit(*b.eta_pump, "eta_pump");
  if (b.eta_pump_star) unit(*b.eta_pump_star, "eta_pump_star");
  if (b.pump_ratio) unit(*b.pump_ratio, "pump_ratio");
  if (b.sat_param && *b.sat_param < 0.0) throw ParseError(doc.line_of("budget", "sat_param"), "sat_param must be >= 0");
  return b;
}

inline RunConfig load(const Document& doc) {
  RunConfig c;
  using detail::wrap;
  if (auto v = doc.number("source", "mu_mol")) c.mu_mol = *v;
  if (auto v = doc.number("source", "g2_zero")) c.g2_zero = *v;
  if (auto v = doc.numbers("source", "mu_ref")) c.mu_ref = *v;
  if (auto v = doc.number("source", "wcp_mu")) c.wcp_mu = *v;
  if (auto v = doc.number("source", "wcp_nu")) c.wcp_nu = *v;
  wrap(doc, "source", "mu_mol", [&] { return c.sps(); });
  wrap(doc, "source", "wcp_nu", [&] { return c.wcp(); });
  for (double m : c.mu_ref) wrap(doc, "source", "mu_ref", [&] { return sources::SpsModel(m, c.g2_zero); });

  if (auto v = doc.number("link", "eta_bob")) c.link.eta_bob = *v;
  if (auto v = doc.number("link", "p_dark")) c.link.p_dark = *v;
  if (auto v = doc.number("link", "e_det_sps")) c.e_det_sps = *v;
  if (auto v = doc.number("link", "e_det_wcp")) c.e_det_wcp = *v;
  if (auto v = doc.number("link", "rep_rate")) c.link.rep_rate = *v;
  if (auto v = doc.number("link", "channel_loss")) c.channel_loss_db = *v;
  if (auto v = doc.number("protocol", "sift_factor")) c.link.sift_factor = *v;
  if (auto v = doc.number("protocol", "f_ec")) c.link.f_ec = *v;
  if (auto v = doc.number("protocol", "qber_sps")) c.qber_sps = *v;
  c.link.e_det = c.e_det_sps;
  auto in_range = [&](std::string_view section, std::string_view key, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) {
      throw ParseError(doc.line_of(section, key), "[" + std::string(section) + "] " + std::string(key) +
                                                      " must lie in [" + format_number(lo) + ", " + format_number(hi) + "]");
    }
  };
  in_range("link", "eta_bob", c.link.eta_bob, 0.0, 1.0);
  in_range("link", "p_dark", c.link.p_dark, 0.0, 1.0);
  in_range("link", "e_det_sps", c.e_det_sps, 0.0, 0.5);
  in_range("link", "e_det_wcp", c.e_det_wcp, 0.0, 0.5);
  in_range("protocol", "sift_factor", c.link.sift_factor, 1e-300, 1.0);
  in_range("protocol", "f_ec", c.link.f_ec, 1.0, 1e300);
  wrap(doc, "link", "", [&] {
    c.link.validate();
    rates::LinkParams w = c.link;
    w.e_det = c.e_det_wcp;
    w.validate();
    return 0;
  });
  if (c.channel_loss_db < 0.0) throw ParseError(doc.line_of("link", "channel_loss"), "channel_loss must be >= 0 db");
  if (c.qber_sps && !(*c.qber_sps >= 0.0 && *c.qber_sps <= 0.5)) {
    throw ParseError(doc.line_of("protocol", "qber_sps"), "qber_sps must lie in [0, 0.5]");
  }

  if (auto v = doc.numbers("sweep", "loss_grid")) c.loss_grid = *v;
  if (auto v = doc.flag("sweep", "loss_includes_bob")) {
    c.convention = *v ? rates::LossConvention::IncludesBob : rates::LossConvention::ChannelOnly;
  }
  if (auto v = doc.words("sweep", "models")) c.models = *v;
  // Only validate curves that can be built; missing mu_ref/nu surface later
  // when the sweep runs so that simulate/budget configs need not carry them.

  if (auto v = doc.word("simulate", "model")) c.simulate.model = *v;
  if (auto v = doc.count("simulate", "pulses")) c.simulate.pulses = *v;
  if (auto v = doc.count("simulate", "seed")) c.simulate.seed = *v;
  if (auto v = doc.count("simulate", "workers")) c.simulate.workers = static_cast<unsigned>(*v);
  if (auto v = doc.number("simulate", "basis_split")) c.simulate.basis_split = *v;
  if (auto v = doc.word("simulate", "alice_sequence")) {
    c.simulate.sequence = detail::parse_sequence(*v, doc.line_of("simulate", "alice_sequence"));
  }
  if (c.simulate.model != "sps" && c.simulate.model != "wcp" && c.simulate.model != "wcp_decoy") {
    throw ParseError(doc.line_of("simulate", "model"), "model must be sps, wcp or wcp_decoy");
  }
  if (c.simulate.pulses < 1) throw ParseError(doc.line_of("simulate", "pulses"), "pulses must be >= 1");
  if (c.simulate.workers < 1) throw ParseError(doc.line_of("simulate", "workers"), "workers must be >= 1");
  if (!(c.simulate.basis_split > 0.0 && c.simulate.basis_split < 1.0)) {
    throw ParseError(doc.line_of("simulate", "basis_split"), "basis_split must lie in (0, 1)");
  }

  const bool has_budget = std::any_of(std::begin(kSchema), std::end(kSchema),
                                      [&](const KeySpec& k) { return k.section == "budget" && doc.has("budget", k.key); });
  if (has_budget) c.budget = load_budget(doc);
  return c;
}

inline RunConfig load_file(const std::string& path) { return load(Document::parse_file(path)); }
inline RunConfig load_string(const std::string& text) { return load(Document::parse_string(text)); }

}  // namespace qkdlink::config
