#pragma once

// Scenario configuration and its key-value text format.
//
// Format: one `key = value` pair per line, `#` starts a comment, lists are
// comma separated. Keys are exactly the SystemConfig member names. Numbers
// are parsed and printed locale-independently.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace cfmimo {

enum class ChannelModel { iid_rayleigh, corr_rayleigh, urban_3gpp };
enum class ClusteringMode { all_serve_all, dcc };
enum class PilotKind { dft, random_qam };

/// Which AP mean is subtracted in the CPU feedback step.
/// `extrinsic` removes x_{A,l}^ext (message-passing form), `literal` removes x_{A,l}^post.
enum class FeedbackForm { extrinsic, literal };

struct SystemConfig {
  int L = 8;                         // APs
  int N = 8;                         // antennas per AP
  int K = 32;                        // single-antenna users
  std::vector<double> p = {1.0};     // transmit power per user (linear); one entry applies to all
  double sigma2 = 1.0;               // noise variance (linear)
  int T = 5;                         // EP iterations
  int R = 1;                         // JCD rounds
  int M = 4;                         // QAM order
  int tau_p = 32;                    // pilot length
  int tau_c = 200;                   // coherence block length
  std::vector<double> snr_grid = {-10.0, -8.0, -6.0, -4.0, -2.0, 0.0};
  std::uint64_t seed = 1;
  ChannelModel channel_model = ChannelModel::iid_rayleigh;
  ClusteringMode clustering = ClusteringMode::all_serve_all;
  PilotKind pilot_kind = PilotKind::dft;

  double damping = 0.0;              // convex damping on the CPU feedback, in [0,1)
  double dcc_threshold_db = 40.0;    // DCC admission window below an AP's strongest user
  double area_side_m = 1000.0;       // square deployment area side
  double ap_height_m = 10.0;         // vertical AP-user offset
  double angular_std_deg = 15.0;     // local scattering angular spread
  double pilot_power = 1.0;
  FeedbackForm feedback = FeedbackForm::extrinsic;
  bool early_stop = false;

  int tau_d() const { return tau_c - tau_p; }

  double power(int k) const { return p.size() == 1 ? p.front() : p.at(static_cast<std::size_t>(k)); }

  double mean_power() const {
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += power(k);
    return s / K;
  }

  void validate() const {
    auto need = [](bool ok, const char* msg) {
      if (!ok) throw std::invalid_argument(std::string("invalid config: ") + msg);
    };
    need(L >= 1 && N >= 1 && K >= 1, "L, N, K must be >= 1");
    need(T >= 1 && R >= 1, "T and R must be >= 1");
    int m = M;
    while (m > 1 && m % 4 == 0) m /= 4;
    need(M >= 4 && m == 1, "M must be a power of 4 (4, 16, 64, ...)");
    need(tau_p >= 1 && tau_p <= tau_c, "need 1 <= tau_p <= tau_c");
    need(sigma2 > 0.0, "sigma2 must be positive");
    need(p.size() == 1 || static_cast<int>(p.size()) == K, "p must have 1 or K entries");
    need(std::all_of(p.begin(), p.end(), [](double v) { return v > 0.0; }), "p_k must be positive");
    need(damping >= 0.0 && damping < 1.0, "damping must lie in [0,1)");
    need(area_side_m > 0.0 && angular_std_deg >= 0.0, "geometry parameters out of range");
    need(pilot_power > 0.0, "pilot_power must be positive");
    need(!snr_grid.empty(), "snr_grid must not be empty");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s, const std::string& key) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("scenario: bad number for '" + key + "': '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s, const std::string& key) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("scenario: bad integer for '" + key + "': '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s, const std::string& key) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("scenario: bad unsigned integer for '" + key + "': '" + std::string(s) + "'");
  return v;
}

inline std::vector<double> parse_list(std::string_view s, const std::string& key) {
  std::vector<double> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_double(s.substr(0, comma), key));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline bool parse_bool(std::string_view s, const std::string& key) {
  s = trim(s);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("scenario: bad boolean for '" + key + "'");
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s;
}

}  // namespace detail

inline const char* to_string(ChannelModel m) {
  switch (m) {
    case ChannelModel::iid_rayleigh: return "iid_rayleigh";
    case ChannelModel::corr_rayleigh: return "corr_rayleigh";
    case ChannelModel::urban_3gpp: return "urban_3gpp";
  }
  return "?";
}
inline const char* to_string(ClusteringMode m) { return m == ClusteringMode::dcc ? "dcc" : "all_serve_all"; }
inline const char* to_string(PilotKind k) { return k == PilotKind::dft ? "dft" : "random_qam"; }
inline const char* to_string(FeedbackForm f) { return f == FeedbackForm::literal ? "literal" : "extrinsic"; }

/// "start:step:stop" (inclusive) as a list of SNR points.
inline std::vector<double> parse_snr_range(std::string_view spec) {
  const auto c1 = spec.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : spec.find(':', c1 + 1);
  if (c2 == std::string_view::npos) throw std::invalid_argument("snr range must be start:step:stop");
  const double start = detail::parse_double(spec.substr(0, c1), "snr");
  const double step = detail::parse_double(spec.substr(c1 + 1, c2 - c1 - 1), "snr");
  const double stop = detail::parse_double(spec.substr(c2 + 1), "snr");
  if (step == 0.0 || (stop - start) / step < -1e-9) throw std::invalid_argument("snr range: step does not lead from start to stop");
  const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9)) + 1;
  if (n > 100000) throw std::invalid_argument("snr range: too many points");
  std::vector<double> out;
  for (long long i = 0; i < n; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

inline SystemConfig parse_scenario(std::istream& in) {
  SystemConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v(line);
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = detail::trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(detail::trim(v.substr(0, eq)));
    const std::string_view val = detail::trim(v.substr(eq + 1));
    auto as_int = [&] { return static_cast<int>(detail::parse_int(val, key)); };
    auto as_double = [&] { return detail::parse_double(val, key); };
    auto bad_enum = [&] { return std::invalid_argument("scenario: unknown value '" + std::string(val) + "' for " + key); };

    if (key == "L") c.L = as_int();
    else if (key == "N") c.N = as_int();
    else if (key == "K") c.K = as_int();
    else if (key == "p") c.p = detail::parse_list(val, key);
    else if (key == "sigma2") c.sigma2 = as_double();
    else if (key == "T") c.T = as_int();
    else if (key == "R") c.R = as_int();
    else if (key == "M") c.M = as_int();
    else if (key == "tau_p") c.tau_p = as_int();
    else if (key == "tau_c") c.tau_c = as_int();
    else if (key == "snr_grid") c.snr_grid = detail::parse_list(val, key);
    else if (key == "seed") c.seed = detail::parse_uint(val, key);
    else if (key == "channel_model") {
      if (val == "iid_rayleigh") c.channel_model = ChannelModel::iid_rayleigh;
      else if (val == "corr_rayleigh") c.channel_model = ChannelModel::corr_rayleigh;
      else if (val == "urban_3gpp") c.channel_model = ChannelModel::urban_3gpp;
      else throw bad_enum();
    } else if (key == "clustering") {
      if (val == "all_serve_all") c.clustering = ClusteringMode::all_serve_all;
      else if (val == "dcc") c.clustering = ClusteringMode::dcc;
      else throw bad_enum();
    } else if (key == "pilot_kind") {
      if (val == "dft") c.pilot_kind = PilotKind::dft;
      else if (val == "random_qam") c.pilot_kind = PilotKind::random_qam;
      else throw bad_enum();
    } else if (key == "damping") c.damping = as_double();
    else if (key == "dcc_threshold_db") c.dcc_threshold_db = as_double();
    else if (key == "area_side_m") c.area_side_m = as_double();
    else if (key == "ap_height_m") c.ap_height_m = as_double();
    else if (key == "angular_std_deg") c.angular_std_deg = as_double();
    else if (key == "pilot_power") c.pilot_power = as_double();
    else if (key == "feedback") {
      if (val == "extrinsic") c.feedback = FeedbackForm::extrinsic;
      else if (val == "literal") c.feedback = FeedbackForm::literal;
      else throw bad_enum();
    } else if (key == "early_stop") c.early_stop = detail::parse_bool(val, key);
    else throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

inline SystemConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  return parse_scenario(in);
}

inline std::string to_scenario_text(const SystemConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "L = " << c.L << '\n'
    << "N = " << c.N << '\n'
    << "K = " << c.K << '\n'
    << "p = " << detail::format_list(c.p) << '\n'
    << "sigma2 = " << format_double(c.sigma2) << '\n'
    << "T = " << c.T << '\n'
    << "R = " << c.R << '\n'
    << "M = " << c.M << '\n'
    << "tau_p = " << c.tau_p << '\n'
    << "tau_c = " << c.tau_c << '\n'
    << "snr_grid = " << detail::format_list(c.snr_grid) << '\n'
    << "seed = " << c.seed << '\n'
    << "channel_model = " << to_string(c.channel_model) << '\n'
    << "clustering = " << to_string(c.clustering) << '\n'
    << "pilot_kind = " << to_string(c.pilot_kind) << '\n'
    << "damping = " << format_double(c.damping) << '\n'
    << "dcc_threshold_db = " << format_double(c.dcc_threshold_db) << '\n'
    << "area_side_m = " << format_double(c.area_side_m) << '\n'
    << "ap_height_m = " << format_double(c.ap_height_m) << '\n'
    << "angular_std_deg = " << format_double(c.angular_std_deg) << '\n'
    << "pilot_power = " << format_double(c.pilot_power) << '\n'
    << "feedback = " << to_string(c.feedback) << '\n'
    << "early_stop = " << (c.early_stop ? "true" : "false") << '\n';
  return o.str();
}

}  // namespace cfmimo
