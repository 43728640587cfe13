#pragma once

// The transcript-conditioned predictor: decision prompts, probability
// parsing, and prediction over a test set at a series of cutoffs.

#include <cctype>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "gate/core.hpp"
#include "gate/domains.hpp"
#include "gate/lm.hpp"
#include "gate/log.hpp"
#include "gate/prediction.hpp"

namespace gate {

inline std::string build_decision_prompt(const DomainSpec& d, std::string_view transcript_text, const TestItem& item) {
  return detail::fill_slots(d.decision_preamble_text, {{kTranscriptSlot, transcript_text}, {kTestCaseSlot, item.body}});
}

struct ParsedProbability {
  double value = 0.0;
  bool clamped = false;
};

/// First decimal numeral in `raw` (an immediately preceding '-' is kept, a
/// trailing '%' divides by 100), clamped to [0, 1].
inline ParsedProbability parse_probability_detailed(std::string_view raw) {
  auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const bool starts = digit(raw[i]) || (raw[i] == '.' && i + 1 < raw.size() && digit(raw[i + 1]));
    if (!starts) continue;
    std::size_t begin = (i > 0 && raw[i - 1] == '-') ? i - 1 : i;
    std::size_t end = i;
    while (end < raw.size() && digit(raw[end])) ++end;
    if (end < raw.size() && raw[end] == '.' && end + 1 < raw.size() && digit(raw[end + 1])) {
      ++end;
      while (end < raw.size() && digit(raw[end])) ++end;
    } else if (raw[i] == '.') {
      ++end;
      while (end < raw.size() && digit(raw[end])) ++end;
    }
    double v = std::strtod(std::string(raw.substr(begin, end - begin)).c_str(), nullptr);
    if (end < raw.size() && raw[end] == '%') v /= 100.0;
    ParsedProbability out{std::clamp(v, 0.0, 1.0), false};
    out.clamped = out.value != v;
    return out;
  }
  throw Error(Errc::no_numeral, "no number in \"" + std::string(raw.substr(0, 80)) + "\"");
}

inline double parse_probability(std::string_view raw) {
  const auto parsed = parse_probability_detailed(raw);
  if (parsed.clamped) log(LogLevel::warning, "clamped out-of-range probability in \"" + std::string(raw.substr(0, 80)) + "\"");
  return parsed.value;
}

/// One decision call; one re-ask if the reply has no number.
inline PredictionRecord predict(LMGateway& gateway, const DomainSpec& d, std::string_view specification,
                                const TestItem& item, const std::string& session_id = {}, Cutoff cutoff = {}) {
  const std::string prompt = build_decision_prompt(d, specification, item);
  for (int attempt = 0;; ++attempt) {
    const auto response = gateway.complete(prompt);
    try {
      return {session_id, item.id, cutoff, parse_probability(response.content), response.content};
    } catch (const Error& e) {
      if (e.code() != Errc::no_numeral) throw;
      if (attempt >= 1) throw Error(Errc::parse_failure, "no probability after re-ask for item \"" + item.id + "\"");
      log(LogLevel::warning, "re-asking: " + std::string(e.what()));
    }
  }
}

/// Specification text a session had produced by the given cutoff.
inline std::string specification_at(const Session& s, Cutoff cutoff) {
  const Transcript prefix = cutoff.axis == CurveAxis::minutes
                                ? transcript_at(s, Duration(cutoff.value))
                                : transcript_at_turn(s, static_cast<std::size_t>(std::max<std::int64_t>(cutoff.value, 0)));
  return specification_text(s, prefix);
}

/// Every (cutoff, item) pair, cutoff-major, items in the given order.
inline std::vector<PredictionRecord> predict_test_set(LMGateway& gateway, const DomainSpec& d, const Session& session,
                                                      std::span<const Cutoff> cutoffs, std::span<const TestItem> items) {
  if (items.empty()) throw Error(Errc::insufficient_data, "test set is empty");
  for (std::size_t i = 1; i < cutoffs.size(); ++i)
    if (!(cutoffs[i - 1] < cutoffs[i])) throw Error(Errc::invalid_argument, "cutoffs must be strictly ascending");
  std::vector<PredictionRecord> out;
  out.reserve(cutoffs.size() * items.size());
  for (const auto& cutoff : cutoffs) {
    const std::string spec = specification_at(session, cutoff);
    for (const auto& item : items) out.push_back(predict(gateway, d, spec, item, session.id, cutoff));
  }
  return out;
}

inline std::vector<PredictionRecord> predict_test_set(LMGateway& gateway, const DomainSpec& d, const Session& session,
                                                      std::span<const Cutoff> cutoffs) {
  return predict_test_set(gateway, d, session, cutoffs, d.test_set);
}

/// 0..5 minutes, one per minute.
inline std::vector<Cutoff> minute_cutoffs(int minutes = 5) {
  std::vector<Cutoff> out;
  for (int m = 0; m <= minutes; ++m) out.push_back(Cutoff::minutes(m));
  return out;
}

/// 0..turns answered turns.
inline std::vector<Cutoff> turn_cutoffs(int turns = kDefaultTurnBudget) {
  std::vector<Cutoff> out;
  for (int t = 0; t <= turns; ++t) out.push_back(Cutoff::turns(t));
  return out;
}

}  // namespace gate
