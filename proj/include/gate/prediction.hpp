#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"

namespace gate {

enum class CurveAxis { minutes, turns };

constexpr std::string_view to_string(CurveAxis a) { return a == CurveAxis::minutes ? "minutes" : "turns"; }

inline CurveAxis parse_curve_axis(std::string_view s) {
  if (s == "minutes") return CurveAxis::minutes;
  if (s == "turns") return CurveAxis::turns;
  throw Error(Errc::invalid_argument, "unknown curve axis \"" + std::string(s) + "\"");
}

/// Identifies the transcript prefix a prediction was conditioned on: a user
/// time in milliseconds (minutes axis) or a number of answered turns.
struct Cutoff {
  CurveAxis axis = CurveAxis::minutes;
  std::int64_t value = 0;

  static Cutoff minutes(std::int64_t m) { return {CurveAxis::minutes, m * 60'000}; }
  static Cutoff user_time(Duration d) { return {CurveAxis::minutes, d.count()}; }
  static Cutoff turns(std::int64_t n) { return {CurveAxis::turns, n}; }

  /// Position on the curve's x axis (minutes or turns).
  double coordinate() const {
    return axis == CurveAxis::minutes ? static_cast<double>(value) / 60'000.0 : static_cast<double>(value);
  }

  bool operator==(const Cutoff&) const = default;
  auto operator<=>(const Cutoff&) const = default;
};

struct PredictionRecord {
  std::string session_id;
  std::string item_id;
  Cutoff cutoff;
  double prob_yes = 0.5;
  std::string raw_response;
  bool operator==(const PredictionRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const PredictionRecord& r) {
  j = {{"session_id", r.session_id},
       {"item_id", r.item_id},
       {"cutoff_axis", to_string(r.cutoff.axis)},
       {"cutoff", r.cutoff.value},
       {"prob_yes", r.prob_yes},
       {"raw_response", r.raw_response}};
}

inline void from_json(const nlohmann::json& j, PredictionRecord& r) {
  r.session_id = j.at("session_id").get<std::string>();
  r.item_id = j.at("item_id").get<std::string>();
  r.cutoff = {parse_curve_axis(j.at("cutoff_axis").get<std::string>()), j.at("cutoff").get<std::int64_t>()};
  r.prob_yes = j.at("prob_yes").get<double>();
  r.raw_response = j.at("raw_response").get<std::string>();
  if (!(r.prob_yes >= 0.0 && r.prob_yes <= 1.0)) throw Error(Errc::corrupt_record, "prob_yes outside [0, 1]");
}

inline void write_predictions_jsonl(std::ostream& out, const std::vector<PredictionRecord>& records) {
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

inline std::vector<PredictionRecord> read_predictions_jsonl(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim_view(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<PredictionRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::corrupt_record, "predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gate
