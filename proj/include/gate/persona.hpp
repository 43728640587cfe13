#pragma once

// Simulated users and the end-to-end simulation runner.

#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"
#include "gate/domains.hpp"
#include "gate/elicitation.hpp"
#include "gate/lm.hpp"
#include "gate/metrics.hpp"
#include "gate/predictor.hpp"

namespace gate::sim {

enum class PersonaKind { lm_persona, rule_regex, rule_table };

constexpr std::string_view to_string(PersonaKind k) {
  switch (k) {
    case PersonaKind::lm_persona: return "lm_persona";
    case PersonaKind::rule_regex: return "rule_regex";
    case PersonaKind::rule_table: return "rule_table";
  }
  return "?";
}

inline PersonaKind parse_persona_kind(std::string_view s) {
  for (auto k : {PersonaKind::lm_persona, PersonaKind::rule_regex, PersonaKind::rule_table})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown persona kind \"" + std::string(s) + "\"");
}

struct Persona {
  PersonaKind kind = PersonaKind::lm_persona;
  std::string name;
  std::string text;
  // rule_regex: ECMAScript pattern matched against the whole candidate.
  std::string pattern;
  // rule_table: candidate -> answer, with an optional fallback.
  std::map<std::string, Answer> table;
  std::optional<Answer> default_answer;
};

inline void validate(const Persona& p) {
  switch (p.kind) {
    case PersonaKind::lm_persona:
      if (detail::trim_view(p.text).empty()) throw Error(Errc::invalid_argument, "lm_persona needs text");
      break;
    case PersonaKind::rule_regex:
      if (p.pattern.empty()) throw Error(Errc::invalid_argument, "rule_regex persona needs a pattern");
      try {
        std::regex re(p.pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error(Errc::invalid_argument, std::string("bad persona regex: ") + e.what());
      }
      break;
    case PersonaKind::rule_table:
      if (p.table.empty() && !p.default_answer) throw Error(Errc::invalid_argument, "rule_table persona has no rule");
      break;
  }
}

inline constexpr std::string_view kPersonaInstruction =
    "Answer the question in the shortest way with minimal additional explanation.";

inline std::string persona_prompt(const std::string& persona_text, const std::string& question) {
  return persona_text + " " + std::string(kPersonaInstruction) + "\n" + question;
}

/// Candidate string of a membership query: the text after the last
/// "accepted?" marker (or the other domains' edge-case markers), trimmed.
inline std::optional<std::string> extract_candidate(std::string_view question) {
  for (std::string_view marker : {"accepted?", "the following article?", "Situation:"}) {
    const auto at = question.rfind(marker);
    if (at != std::string_view::npos) return detail::trim(question.substr(at + marker.size()));
  }
  return std::nullopt;
}

inline bool rule_persona(const Persona& p) { return p.kind != PersonaKind::lm_persona; }

/// Rule personas can only answer membership queries, so they pair with the
/// edge-case generator and the pool baselines.
inline bool compatible(const Persona& p, PolicyKind k) {
  if (!rule_persona(p)) return true;
  return k == PolicyKind::gate_active_learning || uses_pool(k);
}

inline std::string persona_answer(LMGateway& gateway, const Persona& p, const std::string& question) {
  if (p.kind == PersonaKind::lm_persona) return gateway.complete(persona_prompt(p.text, question)).content;
  const auto candidate = extract_candidate(question);
  if (!candidate) throw Error(Errc::unanswerable, "rule persona cannot answer \"" + question.substr(0, 80) + "\"");
  if (p.kind == PersonaKind::rule_regex) {
    const std::regex re(p.pattern, std::regex::ECMAScript);
    return std::regex_match(*candidate, re) ? "yes" : "no";
  }
  if (auto it = p.table.find(*candidate); it != p.table.end()) return std::string(to_string(it->second));
  if (p.default_answer) return std::string(to_string(*p.default_answer));
  throw Error(Errc::unanswerable, "rule_table persona has no entry for \"" + *candidate + "\"");
}

/// The persona's own labels for a test set, asked as membership queries.
inline std::vector<Judgment> judge_test_set(LMGateway& gateway, const Persona& p, const DomainSpec& d,
                                            std::span<const TestItem> items) {
  std::vector<Judgment> out;
  for (const auto& item : items) {
    const auto reply = persona_answer(gateway, p, d.membership_query(item.body));
    out.push_back({item.id, LMGateway::is_yes(reply) ? Answer::yes : Answer::no});
  }
  return out;
}

struct SimulationResult {
  Session session;
  std::vector<PredictionRecord> records;
  metrics::DeltaCurve curve;
  double auc = 0.0;
};

struct SimulationOptions {
  std::uint64_t seed = 0;
  const PoolContext* pool = nullptr;
  // Synthetic clock: each turn takes this long to answer, then the next query
  // is issued immediately.
  Duration answer_delay = std::chrono::seconds(30);
};

/// Runs elicitation for `turn_budget` turns, has the persona label the test
/// set, predicts at cutoffs 0..turn_budget, and returns the turn-axis curve.
inline SimulationResult run_simulation(PolicySpec policy, const Persona& persona, const DomainSpec& domain,
                                       LMGateway& gateway, int turn_budget, std::span<const TestItem> test_set,
                                       const SimulationOptions& opts = {}) {
  validate(persona);
  if (turn_budget < 1) throw Error(Errc::invalid_argument, "turn_budget must be >= 1");
  if (!compatible(persona, policy.kind))
    throw Error(Errc::incompatible, std::string(to_string(persona.kind)) + " persona cannot answer " +
                                        std::string(to_string(policy.kind)) + " queries");
  if (test_set.empty()) throw Error(Errc::insufficient_data, "test set is empty");
  policy.turn_budget = turn_budget;

  const Instant start = instant_from_ms(0);
  Session s = make_session(domain.key, policy, opts.seed, 0, start);
  PoolState pool_state = PoolState::resume(s, opts.pool);
  Instant clock = start;
  while (!should_stop(s, policy, clock)) {
    Query q;
    try {
      q = next_query(policy, domain, s, gateway, pool_state, opts.pool);
    } catch (const Error& e) {
      if (e.code() == Errc::pool_exhausted) break;
      throw;
    }
    clock += q.lm_latency;
    s = issue_query(std::move(s), q.text, q.kind, q.source_item_id, clock, q.lm_latency);
    const int index = static_cast<int>(s.transcript.size()) - 1;
    std::string answer = persona_answer(gateway, persona, s.transcript.back().query_text);
    clock += opts.answer_delay;
    if (policy.kind == PolicyKind::static_prompt) {
      s = submit_free_text(std::move(s), std::move(answer), clock);
      break;
    }
    s = append_answer(std::move(s), index, std::move(answer), clock);
  }
  if (s.state == SessionState::eliciting) s = finish_elicitation(std::move(s));

  const std::vector<TestItem> items(test_set.begin(), test_set.end());
  s = submit_judgments(std::move(s), items, judge_test_set(gateway, persona, domain, items));
  s = complete_session(std::move(s));

  SimulationResult out;
  const auto cutoffs = turn_cutoffs(turn_budget);
  out.records = predict_test_set(gateway, domain, s, cutoffs, items);
  out.curve = metrics::delta_curve(out.records, s.judgments);
  out.auc = metrics::auc(out.curve, static_cast<double>(turn_budget));
  out.session = std::move(s);
  return out;
}

/// Per-method summary used to line up simulated and human results.
struct MethodMetrics {
  double auc = 0.0;
  double final_delta = 0.0;
};

struct CorrelationReport {
  double auc_correlation = 0.0;
  double final_delta_correlation = 0.0;
  // method -> (simulated, human)
  std::map<std::string, std::pair<MethodMetrics, MethodMetrics>> paired;
};

inline CorrelationReport compare_to_human(const std::map<std::string, MethodMetrics>& simulated,
                                          const std::map<std::string, MethodMetrics>& human) {
  std::map<std::string, double> sim_auc, hum_auc, sim_final, hum_final;
  CorrelationReport report;
  for (const auto& [method, m] : simulated) {
    auto it = human.find(method);
    if (it == human.end()) continue;
    sim_auc[method] = m.auc;
    hum_auc[method] = it->second.auc;
    sim_final[method] = m.final_delta;
    hum_final[method] = it->second.final_delta;
    report.paired[method] = {m, it->second};
  }
  report.auc_correlation = metrics::method_correlation(sim_auc, hum_auc);
  report.final_delta_correlation = metrics::method_correlation(sim_final, hum_final);
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline void from_json(const nlohmann::json& j, Persona& p) {
  p = Persona{};
  p.kind = parse_persona_kind(j.at("kind").get<std::string>());
  p.name = j.value("name", std::string{});
  p.text = j.value("text", std::string{});
  if (j.contains("rule") && !j["rule"].is_null()) {
    const auto& rule = j["rule"];
    if (rule.is_string()) {
      p.pattern = rule.get<std::string>();
    } else if (rule.is_object()) {
      if (rule.contains("table"))
        for (const auto& [k, v] : rule["table"].items()) p.table[k] = parse_answer(v.get<std::string>());
      if (rule.contains("default")) p.default_answer = parse_answer(rule["default"].get<std::string>());
    }
  }
  validate(p);
}

inline void to_json(nlohmann::json& j, const Persona& p) {
  j = {{"kind", to_string(p.kind)}, {"name", p.name}, {"text", p.text}};
  if (p.kind == PersonaKind::rule_regex) {
    j["rule"] = p.pattern;
  } else if (p.kind == PersonaKind::rule_table) {
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [k, v] : p.table) table[k] = to_string(v);
    j["rule"] = {{"table", table}};
    if (p.default_answer) j["rule"]["default"] = to_string(*p.default_answer);
  } else {
    j["rule"] = nullptr;
  }
}

inline void to_json(nlohmann::json& j, const MethodMetrics& m) { j = {{"auc", m.auc}, {"final_delta", m.final_delta}}; }
inline void from_json(const nlohmann::json& j, MethodMetrics& m) {
  m.auc = j.at("auc").get<double>();
  m.final_delta = j.at("final_delta").get<double>();
}

}  // namespace gate::sim
