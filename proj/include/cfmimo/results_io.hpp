#pragma once

// Sweep result records and their CSV / JSON serialization.

#include "cfmimo/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfmimo {

struct ResultRecord {
  double snr_db = 0.0;
  std::string detector;
  double ber = 0.0;
  double ser = 0.0;
  long long trials = 0;
  long long symbols = 0;
  long long fronthaul = 0;
  long long clamps = 0;
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;

  // Not serialized to CSV.
  long long bit_errors = 0;
  long long symbol_errors = 0;
  std::vector<double> v_ext_trace;  // mean combined extrinsic variance per iteration

  bool operator==(const ResultRecord& o) const {
    return snr_db == o.snr_db && detector == o.detector && ber == o.ber && ser == o.ser && trials == o.trials &&
           symbols == o.symbols && fronthaul == o.fronthaul && clamps == o.clamps && wall_time_s == o.wall_time_s &&
           seed == o.seed;
  }
};

inline constexpr const char* kCsvHeader = "snr_db,detector,ber,ser,trials,symbols,fronthaul,clamps,wall_time_s,seed";

inline void write_csv(std::ostream& out, const std::vector<ResultRecord>& records) {
  using detail::format_double;
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    if (r.detector.find_first_of(",\"\n") != std::string::npos)
      throw std::invalid_argument("write_csv: detector tag contains a reserved character");
    out << format_double(r.snr_db) << ',' << r.detector << ',' << format_double(r.ber) << ',' << format_double(r.ser) << ','
        << r.trials << ',' << r.symbols << ',' << r.fronthaul << ',' << r.clamps << ',' << format_double(r.wall_time_s) << ','
        << r.seed << '\n';
  }
}

inline std::vector<ResultRecord> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kCsvHeader) throw std::invalid_argument("parse_csv: missing or wrong header");
  std::vector<ResultRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw std::invalid_argument("parse_csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    ResultRecord r;
    r.snr_db = detail::parse_double(f[0], "snr_db");
    r.detector = std::string(detail::trim(f[1]));
    r.ber = detail::parse_double(f[2], "ber");
    r.ser = detail::parse_double(f[3], "ser");
    r.trials = detail::parse_int(f[4], "trials");
    r.symbols = detail::parse_int(f[5], "symbols");
    r.fronthaul = detail::parse_int(f[6], "fronthaul");
    r.clamps = detail::parse_int(f[7], "clamps");
    r.wall_time_s = detail::parse_double(f[8], "wall_time_s");
    r.seed = detail::parse_uint(f[9], "seed");
    out.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::json to_json(const ResultRecord& r) {
  return {{"snr_db", r.snr_db},       {"detector", r.detector},   {"ber", r.ber},
          {"ser", r.ser},             {"trials", r.trials},       {"symbols", r.symbols},
          {"fronthaul", r.fronthaul}, {"clamps", r.clamps},       {"wall_time_s", r.wall_time_s},
          {"seed", r.seed},           {"v_ext_trace", r.v_ext_trace}};
}

inline ResultRecord record_from_json(const nlohmann::json& j) {
  ResultRecord r;
  r.snr_db = j.at("snr_db").get<double>();
  r.detector = j.at("detector").get<std::string>();
  r.ber = j.at("ber").get<double>();
  r.ser = j.at("ser").get<double>();
  r.trials = j.at("trials").get<long long>();
  r.symbols = j.at("symbols").get<long long>();
  r.fronthaul = j.at("fronthaul").get<long long>();
  r.clamps = j.at("clamps").get<long long>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("v_ext_trace")) r.v_ext_trace = j.at("v_ext_trace").get<std::vector<double>>();
  return r;
}

/// {"metadata": {...}, "records": [...]}
inline void write_json(std::ostream& out, const std::vector<ResultRecord>& records, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json doc;
  doc["metadata"] = metadata;
  doc["records"] = nlohmann::json::array();
  for (const auto& r : records) doc["records"].push_back(to_json(r));
  out << doc.dump(2) << '\n';
}

inline std::vector<ResultRecord> parse_json(std::istream& in) {
  const nlohmann::json doc = nlohmann::json::parse(in);
  std::vector<ResultRecord> out;
  for (const auto& j : doc.at("records")) out.push_back(record_from_json(j));
  return out;
}

enum class OutputFormat { csv, json };

inline void emit_results(const std::vector<ResultRecord>& records, const std::string& path, OutputFormat fmt,
                         const nlohmann::json& metadata = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  if (fmt == OutputFormat::csv) write_csv(out, records);
  else write_json(out, records, metadata);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace cfmimo
