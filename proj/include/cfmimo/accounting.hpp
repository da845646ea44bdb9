#pragma once

// Fronthaul scalar counts per coherence block and per-node complexity classes
// of the receivers.

#include "cfmimo/config.hpp"
#include "cfmimo/sysmodel.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

enum class Receiver { distributed_ep, centralized_mmse, lsfd, average_decoding, distributed_mmse };

inline const char* to_string(Receiver r) {
  switch (r) {
    case Receiver::distributed_ep: return "distributed_ep";
    case Receiver::centralized_mmse: return "centralized_mmse";
    case Receiver::lsfd: return "lsfd";
    case Receiver::average_decoding: return "average_decoding";
    case Receiver::distributed_mmse: return "distributed_mmse";
  }
  return "?";
}

struct FronthaulCount {
  long long per_block = 0;   // complex scalars per coherence block
  long long statistics = 0;  // channel statistics, sent once
  long long total() const { return per_block + statistics; }
};

namespace detail {

inline std::vector<long long> served_counts(const SystemConfig& cfg, const Clustering* c) {
  std::vector<long long> d(static_cast<std::size_t>(cfg.L), cfg.K);
  if (c) {
    if (c->num_aps() != cfg.L) throw std::invalid_argument("accounting: clustering does not match L");
    for (int l = 0; l < cfg.L; ++l) d[l] = static_cast<long long>(c->serve_sets[l].size());
  }
  return d;
}

}  // namespace detail

/// Complex scalars sent from the APs to the CPU. Without a clustering every AP
/// serves all K users. For the linear receivers with a clustering, K L in the
/// per-block term becomes sum_l |D_l|.
inline FronthaulCount count_fronthaul(const SystemConfig& cfg, Receiver r, int T, const Clustering* c = nullptr) {
  const long long L = cfg.L, N = cfg.N, K = cfg.K, tc = cfg.tau_c, td = cfg.tau_c - cfg.tau_p;
  const auto d = detail::served_counts(cfg, c);
  long long served = 0;
  for (long long v : d) served += v;
  FronthaulCount f;
  switch (r) {
    case Receiver::distributed_ep:
      if (T < 1) throw std::invalid_argument("count_fronthaul: T must be >= 1");
      for (long long v : d) f.per_block += td * 2 * T * (v + 1);
      break;
    case Receiver::centralized_mmse:
      f.per_block = tc * N * L;
      f.statistics = K * L * N * N / 2;
      break;
    case Receiver::lsfd:
      f.per_block = td * served;
      f.statistics = K * L + (L * L * K * K + K * L) / 2;
      break;
    case Receiver::average_decoding:
      f.per_block = td * served;
      break;
    case Receiver::distributed_mmse:
      break;
  }
  return f;
}

/// Order-of-growth terms instantiated with the scenario numbers.
struct ComplexityClass {
  std::vector<double> ap;          // per AP
  std::vector<double> cpu_per_ap;  // CPU work attributable to each AP's users (empty if not applicable)
  double cpu = 0.0;                // total CPU term
  std::string ap_expr;
  std::string cpu_expr;
};

inline ComplexityClass count_flops_class(const SystemConfig& cfg, Receiver r, const Clustering* c = nullptr) {
  const auto d = detail::served_counts(cfg, c);
  const double N = cfg.N, T = cfg.T;
  ComplexityClass out;
  out.ap.assign(d.size(), 0.0);
  switch (r) {
    case Receiver::distributed_ep:
      out.ap_expr = "T|D_l|N^2";
      out.cpu_expr = "T|D_l|^2";
      for (std::size_t l = 0; l < d.size(); ++l) {
        out.ap[l] = T * static_cast<double>(d[l]) * N * N;
        out.cpu_per_ap.push_back(T * static_cast<double>(d[l]) * static_cast<double>(d[l]));
        out.cpu += out.cpu_per_ap.back();
      }
      break;
    case Receiver::centralized_mmse: {
      out.ap_expr = "0";
      out.cpu_expr = "(LN)^3";
      const double ln = static_cast<double>(cfg.L) * N;
      out.cpu = ln * ln * ln;
      break;
    }
    case Receiver::lsfd:
    case Receiver::average_decoding:
      out.ap_expr = "|D_l|N^2";
      out.cpu_expr = "|D_l|";
      for (std::size_t l = 0; l < d.size(); ++l) {
        out.ap[l] = static_cast<double>(d[l]) * N * N;
        out.cpu_per_ap.push_back(static_cast<double>(d[l]));
        out.cpu += out.cpu_per_ap.back();
      }
      break;
    case Receiver::distributed_mmse:
      out.ap_expr = "|D_l|N^2";
      out.cpu_expr = "0";
      for (std::size_t l = 0; l < d.size(); ++l) out.ap[l] = static_cast<double>(d[l]) * N * N;
      break;
  }
  return out;
}

}  // namespace cfmimo
