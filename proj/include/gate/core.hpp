#pragma once

// Domain model and the session state machine.
//
// Sessions are values: every operation takes a Session and returns the next
// one, leaving the input untouched. All times are kept in integer
// milliseconds so latency bookkeeping is exact.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/detail/random.hpp"
#include "gate/detail/text.hpp"
#include "gate/error.hpp"

namespace gate {

using Duration = std::chrono::milliseconds;
using Instant = std::chrono::time_point<std::chrono::system_clock, Duration>;

inline constexpr int kSchemaVersion = 1;
inline constexpr Duration kDefaultTimeBudget = std::chrono::minutes(5);
inline constexpr int kDefaultTurnBudget = 5;

inline Instant instant_from_ms(std::int64_t ms) { return Instant(Duration(ms)); }
inline std::int64_t to_ms(Instant t) { return t.time_since_epoch().count(); }

// ---------------------------------------------------------------------------
// Enumerations

enum class Answer { yes, no };

enum class PolicyKind {
  gate_active_learning,
  gate_yesno,
  gate_open,
  pool_random,
  pool_diversity,
  pool_uncertainty,
  supervised_random,
  static_prompt,
};

enum class QueryKind { edge_case, yesno_question, open_question, pool_item, free_text_request };

enum class SessionState { eliciting, judging, surveying, complete };

inline constexpr std::array kAllPolicyKinds = {
    PolicyKind::gate_active_learning, PolicyKind::gate_yesno,     PolicyKind::gate_open,
    PolicyKind::pool_random,          PolicyKind::pool_diversity, PolicyKind::pool_uncertainty,
    PolicyKind::supervised_random,    PolicyKind::static_prompt,
};

constexpr std::string_view to_string(Answer a) { return a == Answer::yes ? "yes" : "no"; }

constexpr std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::gate_active_learning: return "gate_active_learning";
    case PolicyKind::gate_yesno: return "gate_yesno";
    case PolicyKind::gate_open: return "gate_open";
    case PolicyKind::pool_random: return "pool_random";
    case PolicyKind::pool_diversity: return "pool_diversity";
    case PolicyKind::pool_uncertainty: return "pool_uncertainty";
    case PolicyKind::supervised_random: return "supervised_random";
    case PolicyKind::static_prompt: return "static_prompt";
  }
  return "?";
}

constexpr std::string_view to_string(QueryKind k) {
  switch (k) {
    case QueryKind::edge_case: return "edge_case";
    case QueryKind::yesno_question: return "yesno_question";
    case QueryKind::open_question: return "open_question";
    case QueryKind::pool_item: return "pool_item";
    case QueryKind::free_text_request: return "free_text_request";
  }
  return "?";
}

constexpr std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::eliciting: return "eliciting";
    case SessionState::judging: return "judging";
    case SessionState::surveying: return "surveying";
    case SessionState::complete: return "complete";
  }
  return "?";
}

inline Answer parse_answer(std::string_view s) {
  if (s == "yes") return Answer::yes;
  if (s == "no") return Answer::no;
  throw Error(Errc::invalid_argument, "answer must be \"yes\" or \"no\", got \"" + std::string(s) + "\"");
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  for (auto k : kAllPolicyKinds)
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_policy, "unknown policy kind \"" + std::string(s) + "\"");
}

inline QueryKind parse_query_kind(std::string_view s) {
  for (auto k : {QueryKind::edge_case, QueryKind::yesno_question, QueryKind::open_question, QueryKind::pool_item,
                 QueryKind::free_text_request})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown query kind \"" + std::string(s) + "\"");
}

inline SessionState parse_session_state(std::string_view s) {
  for (auto k : {SessionState::eliciting, SessionState::judging, SessionState::surveying, SessionState::complete})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown session state \"" + std::string(s) + "\"");
}

constexpr bool is_gate(PolicyKind k) {
  return k == PolicyKind::gate_active_learning || k == PolicyKind::gate_yesno || k == PolicyKind::gate_open;
}

constexpr bool uses_pool(PolicyKind k) {
  return k == PolicyKind::pool_random || k == PolicyKind::pool_diversity || k == PolicyKind::pool_uncertainty ||
         k == PolicyKind::supervised_random;
}

// ---------------------------------------------------------------------------
// Value types

struct TestItem {
  std::string id;
  std::string body;
  bool operator==(const TestItem&) const = default;
};

struct Judgment {
  std::string item_id;
  Answer answer = Answer::no;
  bool operator==(const Judgment&) const = default;
};

struct TranscriptTurn {
  int index = 0;
  std::string query_text;
  QueryKind query_kind = QueryKind::open_question;
  std::optional<std::string> source_item_id;
  std::string answer_text;
  Instant query_issued_at{};
  std::optional<Instant> answer_received_at;
  Duration lm_latency{0};

  bool answered() const { return answer_received_at.has_value(); }
  bool operator==(const TranscriptTurn&) const = default;
};

using Transcript = std::vector<TranscriptTurn>;

struct PolicySpec {
  PolicyKind kind = PolicyKind::gate_open;
  Duration time_budget = kDefaultTimeBudget;
  // When set, the turn budget is the stopping rule; otherwise the time budget is.
  std::optional<int> turn_budget;
  std::optional<std::string> pool_ref;

  bool turn_mode() const { return turn_budget.has_value(); }
  bool operator==(const PolicySpec&) const = default;
};

using SurveyValue = std::variant<int, std::string>;

struct SurveyAnswer {
  std::string question_id;
  SurveyValue value;
  bool operator==(const SurveyAnswer&) const = default;
};

struct Session {
  std::string id;
  std::string domain;
  PolicySpec policy;
  std::uint64_t seed = 0;
  Transcript transcript;
  std::optional<std::string> free_text_spec;
  std::vector<Judgment> judgments;
  std::vector<SurveyAnswer> survey;
  SessionState state = SessionState::eliciting;
  Instant created_at{};

  bool operator==(const Session&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate(const PolicySpec& p) {
  if (uses_pool(p.kind) && !p.pool_ref)
    throw Error(Errc::invalid_policy, std::string(to_string(p.kind)) + " requires a pool_ref");
  if (!uses_pool(p.kind) && p.pool_ref)
    throw Error(Errc::invalid_policy, std::string(to_string(p.kind)) + " does not take a pool_ref");
  if (p.time_budget < Duration::zero()) throw Error(Errc::invalid_policy, "time_budget must be nonnegative");
  if (p.turn_budget && *p.turn_budget < 1) throw Error(Errc::invalid_policy, "turn_budget must be at least 1");
}

/// Checks every structural invariant of a session; throws on the first breach.
inline void validate(const Session& s) {
  validate(s.policy);
  for (std::size_t i = 0; i < s.transcript.size(); ++i) {
    const auto& t = s.transcript[i];
    if (t.index != static_cast<int>(i)) throw Error(Errc::corrupt_record, "transcript indices not contiguous");
    if (t.lm_latency < Duration::zero()) throw Error(Errc::corrupt_record, "negative lm_latency");
    if (t.answer_received_at && *t.answer_received_at < t.query_issued_at)
      throw Error(Errc::corrupt_record, "answer precedes its query");
    if (!t.answered() && i + 1 != s.transcript.size())
      throw Error(Errc::corrupt_record, "unanswered turn is not the last turn");
    if (i > 0) {
      const auto& prev = s.transcript[i - 1];
      if (t.query_issued_at < prev.query_issued_at || (prev.answer_received_at && t.query_issued_at < *prev.answer_received_at))
        throw Error(Errc::corrupt_record, "timestamps decrease along the transcript");
    }
    if ((t.query_kind == QueryKind::pool_item) != t.source_item_id.has_value())
      throw Error(Errc::corrupt_record, "source_item_id present iff the query is a pool item");
  }
  if (s.free_text_spec && s.policy.kind != PolicyKind::static_prompt)
    throw Error(Errc::corrupt_record, "free_text_spec on a non static_prompt session");
  if (!s.judgments.empty() && s.state == SessionState::eliciting)
    throw Error(Errc::corrupt_record, "judgments recorded while eliciting");
  std::vector<std::string> ids;
  for (const auto& j : s.judgments) ids.push_back(j.item_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(Errc::corrupt_record, "duplicate judgment for one item");
}

// ---------------------------------------------------------------------------
// Operations

/// Session ids are a pure function of (seed, ordinal), where ordinal is the
/// creation order within one factory.
inline std::string derive_session_id(std::uint64_t seed, std::uint64_t ordinal) {
  return "s-" + detail::to_hex(detail::mix(seed, ordinal));
}

inline Session make_session(std::string domain, PolicySpec policy, std::uint64_t seed, std::uint64_t ordinal,
                            Instant created_at) {
  validate(policy);
  Session s;
  s.id = derive_session_id(seed, ordinal);
  s.domain = std::move(domain);
  s.policy = std::move(policy);
  s.seed = seed;
  s.created_at = created_at;
  return s;
}

inline const TranscriptTurn* pending_turn(const Session& s) {
  if (s.transcript.empty() || s.transcript.back().answered()) return nullptr;
  return &s.transcript.back();
}

inline std::size_t answered_turns(const Transcript& t) {
  return static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](const auto& x) { return x.answered(); }));
}

/// Appends a new, unanswered query to the transcript.
inline Session issue_query(Session s, std::string text, QueryKind kind, std::optional<std::string> source_item_id,
                           Instant issued_at, Duration lm_latency) {
  if (s.state != SessionState::eliciting) throw Error(Errc::state_violation, "session is not eliciting");
  if (pending_turn(s)) throw Error(Errc::out_of_order, "previous query has not been answered");
  if (lm_latency < Duration::zero()) throw Error(Errc::invalid_argument, "lm_latency must be nonnegative");
  if (issued_at < s.created_at) throw Error(Errc::out_of_order, "query issued before session start");
  if (!s.transcript.empty() && issued_at < *s.transcript.back().answer_received_at)
    throw Error(Errc::out_of_order, "query issued before the previous answer");
  if ((kind == QueryKind::pool_item) != source_item_id.has_value())
    throw Error(Errc::invalid_argument, "source_item_id present iff kind is pool_item");
  TranscriptTurn turn;
  turn.index = static_cast<int>(s.transcript.size());
  turn.query_text = std::move(text);
  turn.query_kind = kind;
  turn.source_item_id = std::move(source_item_id);
  turn.query_issued_at = issued_at;
  turn.lm_latency = lm_latency;
  s.transcript.push_back(std::move(turn));
  return s;
}

inline Session append_answer(Session s, int turn_index, std::string answer_text, Instant at) {
  if (s.state != SessionState::eliciting) throw Error(Errc::state_violation, "session is not eliciting");
  if (turn_index < 0 || turn_index >= static_cast<int>(s.transcript.size()))
    throw Error(Errc::out_of_order, "turn " + std::to_string(turn_index) + " has not been issued");
  auto& turn = s.transcript[static_cast<std::size_t>(turn_index)];
  if (turn.answered()) throw Error(Errc::already_answered, "turn " + std::to_string(turn_index) + " already answered");
  if (at < turn.query_issued_at) throw Error(Errc::out_of_order, "answer timestamp precedes the query");
  turn.answer_text = std::move(answer_text);
  turn.answer_received_at = at;
  return s;
}

/// Wall time since session start minus LM latency of every turn issued by
/// `now`, clamped at zero.
inline Duration elapsed_user_time(const Transcript& transcript, Instant now, Instant session_start) {
  Duration latency{0};
  for (const auto& t : transcript)
    if (t.query_issued_at <= now) latency += t.lm_latency;
  const Duration user = (now - session_start) - latency;
  return std::max(user, Duration::zero());
}

/// Latency-subtracted time at which `turn_index` was answered.
inline std::optional<Duration> answer_user_time(const Transcript& transcript, std::size_t turn_index,
                                                Instant session_start) {
  const auto& turn = transcript.at(turn_index);
  if (!turn.answer_received_at) return std::nullopt;
  Duration latency{0};
  for (std::size_t i = 0; i <= turn_index; ++i) latency += transcript[i].lm_latency;
  return std::max((*turn.answer_received_at - session_start) - latency, Duration::zero());
}

/// Longest prefix of answered turns whose user-time answer stamps are within
/// the cutoff. A zero cutoff is the no-elicitation baseline.
inline Transcript transcript_at(const Session& s, Duration user_time_cutoff) {
  Transcript out;
  if (user_time_cutoff <= Duration::zero()) return out;
  for (std::size_t i = 0; i < s.transcript.size(); ++i) {
    const auto t = answer_user_time(s.transcript, i, s.created_at);
    if (!t || *t > user_time_cutoff) break;
    out.push_back(s.transcript[i]);
  }
  return out;
}

/// Turn-count variant used by simulations: the first `turns` answered turns.
inline Transcript transcript_at_turn(const Session& s, std::size_t turns) {
  Transcript out;
  for (const auto& t : s.transcript) {
    if (out.size() >= turns || !t.answered()) break;
    out.push_back(t);
  }
  return out;
}

enum class TranscriptStyle { qa_lines };

inline std::string render_transcript(const Transcript& prefix, TranscriptStyle = TranscriptStyle::qa_lines) {
  std::string out;
  for (const auto& t : prefix) {
    out += "Q: ";
    out += t.query_text;
    out += "\nA: ";
    out += t.answer_text;
    out += "\n";
  }
  return out;
}

/// Text that conditions the predictor for a given transcript prefix. The
/// user-written prompt baseline conditions on the raw paragraph instead of a
/// Q/A rendering.
inline std::string specification_text(const Session& s, const Transcript& prefix) {
  if (s.policy.kind == PolicyKind::static_prompt) {
    if (prefix.empty() || !s.free_text_spec) return {};
    return *s.free_text_spec;
  }
  return render_transcript(prefix);
}

/// Records the user-written specification and closes elicitation.
inline Session submit_free_text(Session s, std::string text, Instant at) {
  if (s.policy.kind != PolicyKind::static_prompt)
    throw Error(Errc::state_violation, "free-text specification only applies to static_prompt sessions");
  if (s.state != SessionState::eliciting) throw Error(Errc::state_violation, "session is not eliciting");
  if (detail::trim_view(text).empty()) throw Error(Errc::invalid_argument, "specification text is empty");
  if (s.transcript.empty()) s = issue_query(std::move(s), "", QueryKind::free_text_request, std::nullopt, at, Duration{0});
  s = append_answer(std::move(s), 0, text, std::max(at, s.transcript[0].query_issued_at));
  s.free_text_spec = std::move(text);
  s.state = SessionState::judging;
  return s;
}

/// Moves an eliciting session to judging. Refused while a query is in flight.
inline Session finish_elicitation(Session s) {
  if (s.state != SessionState::eliciting) throw Error(Errc::state_violation, "session is not eliciting");
  if (pending_turn(s)) throw Error(Errc::state_violation, "a query is still awaiting its answer");
  if (s.policy.kind == PolicyKind::static_prompt && !s.free_text_spec)
    throw Error(Errc::state_violation, "static_prompt session has no specification yet");
  s.state = SessionState::judging;
  return s;
}

/// Stores a complete set of judgments atomically and moves to surveying.
inline Session submit_judgments(Session s, const std::vector<TestItem>& test_set, std::vector<Judgment> judgments) {
  if (s.state != SessionState::judging) throw Error(Errc::state_violation, "session is not judging");
  std::vector<std::string> seen;
  for (const auto& j : judgments) {
    const bool known = std::any_of(test_set.begin(), test_set.end(), [&](const auto& it) { return it.id == j.item_id; });
    if (!known) throw Error(Errc::invalid_argument, "unknown test item \"" + j.item_id + "\"");
    if (std::find(seen.begin(), seen.end(), j.item_id) != seen.end())
      throw Error(Errc::invalid_argument, "duplicate judgment for \"" + j.item_id + "\"");
    seen.push_back(j.item_id);
  }
  s.judgments = std::move(judgments);
  s.state = SessionState::surveying;
  return s;
}

inline Session complete_session(Session s) {
  if (s.state != SessionState::surveying) throw Error(Errc::state_violation, "session is not surveying");
  s.state = SessionState::complete;
  return s;
}

/// Presentation order of the test set; a pure function of the session seed.
inline std::vector<TestItem> shuffled_test_set(std::vector<TestItem> items, std::uint64_t seed) {
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  detail::Rng rng(detail::mix(seed, 0x7e57'5e7ULL));
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
  return items;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const TestItem& t) { j = {{"id", t.id}, {"body", t.body}}; }
inline void from_json(const nlohmann::json& j, TestItem& t) {
  t.id = j.at("id").get<std::string>();
  t.body = j.at("body").get<std::string>();
}

inline void to_json(nlohmann::json& j, const Judgment& v) {
  j = {{"item_id", v.item_id}, {"answer", to_string(v.answer)}};
}
inline void from_json(const nlohmann::json& j, Judgment& v) {
  v.item_id = j.at("item_id").get<std::string>();
  v.answer = parse_answer(j.at("answer").get<std::string>());
}

inline void to_json(nlohmann::json& j, const PolicySpec& p) {
  j = {{"kind", to_string(p.kind)}, {"time_budget_ms", p.time_budget.count()}};
  j["turn_budget"] = p.turn_budget ? nlohmann::json(*p.turn_budget) : nlohmann::json(nullptr);
  j["pool_ref"] = p.pool_ref ? nlohmann::json(*p.pool_ref) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, PolicySpec& p) {
  p.kind = parse_policy_kind(j.at("kind").get<std::string>());
  p.time_budget = Duration(j.value("time_budget_ms", kDefaultTimeBudget.count()));
  p.turn_budget.reset();
  p.pool_ref.reset();
  if (j.contains("turn_budget") && !j["turn_budget"].is_null()) p.turn_budget = j["turn_budget"].get<int>();
  if (j.contains("pool_ref") && !j["pool_ref"].is_null()) p.pool_ref = j["pool_ref"].get<std::string>();
}

inline void to_json(nlohmann::json& j, const TranscriptTurn& t) {
  j = {{"index", t.index},
       {"query_text", t.query_text},
       {"query_kind", to_string(t.query_kind)},
       {"answer_text", t.answer_text},
       {"query_issued_at_ms", to_ms(t.query_issued_at)},
       {"lm_latency_ms", t.lm_latency.count()}};
  j["source_item_id"] = t.source_item_id ? nlohmann::json(*t.source_item_id) : nlohmann::json(nullptr);
  j["answer_received_at_ms"] =
      t.answer_received_at ? nlohmann::json(to_ms(*t.answer_received_at)) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, TranscriptTurn& t) {
  t.index = j.at("index").get<int>();
  t.query_text = j.at("query_text").get<std::string>();
  t.query_kind = parse_query_kind(j.at("query_kind").get<std::string>());
  t.answer_text = j.at("answer_text").get<std::string>();
  t.query_issued_at = instant_from_ms(j.at("query_issued_at_ms").get<std::int64_t>());
  t.lm_latency = Duration(j.at("lm_latency_ms").get<std::int64_t>());
  t.source_item_id.reset();
  t.answer_received_at.reset();
  if (j.contains("source_item_id") && !j["source_item_id"].is_null())
    t.source_item_id = j["source_item_id"].get<std::string>();
  if (j.contains("answer_received_at_ms") && !j["answer_received_at_ms"].is_null())
    t.answer_received_at = instant_from_ms(j["answer_received_at_ms"].get<std::int64_t>());
}

inline void to_json(nlohmann::json& j, const SurveyAnswer& a) {
  j = {{"question_id", a.question_id}};
  std::visit([&](const auto& v) { j["value"] = v; }, a.value);
}
inline void from_json(const nlohmann::json& j, SurveyAnswer& a) {
  a.question_id = j.at("question_id").get<std::string>();
  const auto& v = j.at("value");
  if (v.is_number_integer())
    a.value = v.get<int>();
  else if (v.is_string())
    a.value = v.get<std::string>();
  else
    throw Error(Errc::invalid_argument, "survey value must be an integer or a string");
}

inline void to_json(nlohmann::json& j, const Session& s) {
  j = {{"schema_version", kSchemaVersion},
       {"id", s.id},
       {"domain", s.domain},
       {"policy", s.policy},
       // Seeds are full 64-bit; keep them as strings so JSON readers that use
       // doubles do not round them.
       {"seed", std::to_string(s.seed)},
       {"transcript", s.transcript},
       {"judgments", s.judgments},
       {"survey", s.survey},
       {"state", to_string(s.state)},
       {"created_at_ms", to_ms(s.created_at)}};
  j["free_text_spec"] = s.free_text_spec ? nlohmann::json(*s.free_text_spec) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Session& s) {
  s.id = j.at("id").get<std::string>();
  s.domain = j.at("domain").get<std::string>();
  s.policy = j.at("policy").get<PolicySpec>();
  s.seed = std::stoull(j.at("seed").get<std::string>());
  s.transcript = j.at("transcript").get<Transcript>();
  s.judgments = j.at("judgments").get<std::vector<Judgment>>();
  s.survey = j.at("survey").get<std::vector<SurveyAnswer>>();
  s.state = parse_session_state(j.at("state").get<std::string>());
  s.created_at = instant_from_ms(j.at("created_at_ms").get<std::int64_t>());
  s.free_text_spec.reset();
  if (j.contains("free_text_spec") && !j["free_text_spec"].is_null())
    s.free_text_spec = j["free_text_spec"].get<std::string>();
}

/// Decodes a session document, checking the schema version and invariants.
inline Session session_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw Error(Errc::corrupt_record, "session document lacks schema_version");
  const int version = j["schema_version"].get<int>();
  if (version != kSchemaVersion)
    throw Error(Errc::version_mismatch, "unsupported schema_version " + std::to_string(version));
  Session s;
  try {
    s = j.get<Session>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::corrupt_record, e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(Errc::corrupt_record, e.what());
  } catch (const std::out_of_range& e) {
    throw Error(Errc::corrupt_record, e.what());
  }
  validate(s);
  return s;
}

}  // namespace gate
