#pragma once

// Transport-independent session API. `Service::handle` takes a method, a
// path and a JSON body and returns a status and a JSON body; the CLI binds it
// to an HTTP server.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"
#include "gate/domains.hpp"
#include "gate/elicitation.hpp"
#include "gate/lm.hpp"
#include "gate/metrics.hpp"
#include "gate/predictor.hpp"
#include "gate/store.hpp"
#include "gate/survey.hpp"

namespace gate {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline int http_status(Errc c) {
  switch (c) {
    case Errc::not_found:
    case Errc::unknown_domain: return 404;
    case Errc::state_violation:
    case Errc::out_of_order:
    case Errc::already_answered:
    case Errc::pool_exhausted:
    case Errc::insufficient_data: return 409;
    case Errc::invalid_policy: return 400;
    case Errc::invalid_argument:
    case Errc::corrupt_record:
    case Errc::parse_failure: return 422;
    case Errc::transport:
    case Errc::timeout:
    case Errc::empty_response:
    case Errc::no_numeral:
    case Errc::script_exhausted: return 502;
    default: return 500;
  }
}

class Service {
 public:
  using Clock = std::function<Instant()>;

  Service(const DomainRegistry& domains, LMGateway& gateway, Clock clock, FileStore* store = nullptr,
          std::uint64_t id_seed = 0)
      : domains_(domains), gateway_(gateway), clock_(std::move(clock)), store_(store), id_seed_(id_seed) {}

  /// Makes `pool` available to sessions whose policy names `ref`.
  void add_pool(const std::string& ref, PoolContext pool) {
    std::unique_lock lock(mu_);
    pools_[ref] = std::make_shared<const PoolContext>(std::move(pool));
  }

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body = {}) {
    try {
      return route(method, split_path(path), body);
    } catch (const Error& e) {
      return error_response(http_status(e.code()), e);
    } catch (const nlohmann::json::exception& e) {
      return {422, {{"error", "invalid_argument"}, {"message", e.what()}}};
    }
  }

  /// Snapshot of a session, for tests and tools.
  Session session(const std::string& id) {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return entry->session;
  }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
    std::optional<nlohmann::json> results;
  };

  static ApiResponse error_response(int status, const Error& e) {
    return {status, {{"error", to_string(e.code())}, {"message", e.what()}}};
  }

  static std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path.substr(0, path.find('?'))) {
      if (c == '/') {
        if (!cur.empty()) parts.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
  }

  static nlohmann::json parse_body(const std::string& body) {
    if (detail::trim_view(body).empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::invalid_argument, std::string("malformed JSON: ") + e.what());
    }
  }

  ApiResponse route(const std::string& method, const std::vector<std::string>& p, const std::string& body) {
    if (p.empty()) throw Error(Errc::not_found, "no such endpoint");
    if (p[0] == "domains" && p.size() == 1 && method == "GET") return {200, domains_.keys()};
    if (p[0] == "survey" && p.size() == 1 && method == "GET") return {200, survey_instrument()};
    if (p[0] != "sessions") throw Error(Errc::not_found, "no such endpoint");
    if (p.size() == 1 && method == "POST") return create(parse_body(body));
    if (p.size() < 2) throw Error(Errc::not_found, "no such endpoint");

    auto entry = find(p[1]);
    std::lock_guard lock(entry->mu);
    Session& s = entry->session;
    const std::string action = p.size() > 2 ? p[2] : "";
    if (p.size() > 3) throw Error(Errc::not_found, "no such endpoint");

    if (method == "GET" && action.empty()) return {200, summary(s)};
    if (method == "GET" && action == "next") return next(*entry);
    if (method == "GET" && action == "testset") return {200, test_set(s)};
    if (method == "GET" && action == "results") return results(*entry);
    if (method == "POST" && action == "answer") return answer(*entry, parse_body(body));
    if (method == "POST" && action == "spec") return spec(*entry, parse_body(body));
    if (method == "POST" && action == "judgments") return judgments(*entry, parse_body(body));
    if (method == "POST" && action == "survey") return survey(*entry, parse_body(body));
    throw Error(Errc::not_found, "no such endpoint");
  }

  std::shared_ptr<Entry> find(const std::string& id) {
    {
      std::shared_lock lock(mu_);
      if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    }
    if (!store_ || !store_->contains(std::string(kSessionKind), id))
      throw Error(Errc::not_found, "unknown session \"" + id + "\"");
    auto entry = std::make_shared<Entry>();
    entry->session = load_session(*store_, id);
    std::unique_lock lock(mu_);
    return sessions_.emplace(id, entry).first->second;
  }

  std::shared_ptr<const PoolContext> pool_for(const PolicySpec& policy) const {
    if (!policy.pool_ref) return nullptr;
    std::shared_lock lock(mu_);
    auto it = pools_.find(*policy.pool_ref);
    return it == pools_.end() ? nullptr : it->second;
  }

  void commit(Entry& e, Session next) {
    validate(next);
    if (store_) save_session(*store_, next);
    e.session = std::move(next);
  }

  ApiResponse create(const nlohmann::json& req) {
    const std::string domain = req.at("domain").get<std::string>();
    PolicySpec policy;
    try {
      policy = req.at("policy").get<PolicySpec>();
    } catch (const Error& e) {
      throw Error(Errc::invalid_policy, e.what());
    }
    validate(policy);
    const std::uint64_t seed = req.contains("seed") ? req["seed"].get<std::uint64_t>() : id_seed_;
    if (!domains_.contains(domain)) throw Error(Errc::unknown_domain, "unknown domain \"" + domain + "\"");
    if (policy.pool_ref && !pool_for(policy))
      throw Error(Errc::invalid_policy, "no pool registered as \"" + *policy.pool_ref + "\"");

    std::unique_lock lock(mu_);
    Session s;
    do {
      s = make_session(domain, policy, seed, ordinal_++, clock_());
    } while (sessions_.count(s.id) || (store_ && store_->contains(std::string(kSessionKind), s.id)));
    if (store_) save_session(*store_, s);
    auto entry = std::make_shared<Entry>();
    entry->session = s;
    sessions_.emplace(s.id, entry);
    return {201, {{"session_id", s.id}, {"session", summary(s)}}};
  }

  nlohmann::json summary(const Session& s) const {
    const auto& d = domains_.get(s.domain);
    nlohmann::json j = s;
    j["elapsed_user_time_ms"] = elapsed_user_time(s.transcript, clock_(), s.created_at).count();
    j["instructions"] = elicitation_instructions(d, s.policy.kind);
    j["labeling_instructions"] = d.labeling_instructions;
    return j;
  }

  static nlohmann::json query_json(const TranscriptTurn& t) {
    nlohmann::json j = {{"done", false},
                        {"turn_index", t.index},
                        {"text", t.query_text},
                        {"kind", to_string(t.query_kind)},
                        {"lm_latency_ms", t.lm_latency.count()}};
    j["source_item_id"] = t.source_item_id ? nlohmann::json(*t.source_item_id) : nlohmann::json(nullptr);
    return j;
  }

  ApiResponse next(Entry& e) {
    const Session& s = e.session;
    if (s.state != SessionState::eliciting) return {200, {{"done", true}, {"state", to_string(s.state)}}};
    const Instant now = clock_();
    const bool stop = should_stop(s, s.policy, now);
    if (const auto* pending = pending_turn(s)) {
      // An issued query can still be answered after the budget trips, but no
      // further query is shown.
      if (stop) return {200, {{"done", true}, {"state", to_string(s.state)}, {"pending_turn", pending->index}}};
      return {200, query_json(*pending)};
    }
    if (stop && s.policy.kind == PolicyKind::static_prompt)
      return {200, {{"done", true}, {"state", to_string(s.state)}}};
    if (s.policy.kind == PolicyKind::static_prompt) {
      if (!s.transcript.empty()) return {200, query_json(s.transcript.front())};
    } else if (stop) {
      commit(e, finish_elicitation(s));
      return {200, {{"done", true}, {"state", to_string(e.session.state)}}};
    }

    const auto pool = pool_for(s.policy);
    PoolState pool_state = PoolState::resume(s, pool.get());
    Query q;
    try {
      q = next_query(s.policy, domains_.get(s.domain), s, gateway_, pool_state, pool.get());
    } catch (const Error& err) {
      if (err.code() != Errc::pool_exhausted) throw;
      commit(e, finish_elicitation(s));
      return {200, {{"done", true}, {"state", to_string(e.session.state)}}};
    }
    // The query is stamped when it reaches the user, after generation.
    commit(e, issue_query(s, q.text, q.kind, q.source_item_id, clock_(), q.lm_latency));
    return {200, query_json(e.session.transcript.back())};
  }

  ApiResponse answer(Entry& e, const nlohmann::json& req) {
    const int index = req.at("turn_index").get<int>();
    std::string text = req.at("text").get<std::string>();
    if (e.session.policy.kind == PolicyKind::static_prompt)
      throw Error(Errc::state_violation, "static_prompt sessions submit through /spec");
    Session s = append_answer(e.session, index, std::move(text), clock_());
    commit(e, std::move(s));
    return {200, {{"turn_index", index}, {"state", to_string(e.session.state)}}};
  }

  ApiResponse spec(Entry& e, const nlohmann::json& req) {
    std::string text = req.at("text").get<std::string>();
    Session s = e.session;
    const Instant now = clock_();
    if (s.transcript.empty())
      s = issue_query(std::move(s), elicitation_instructions(domains_.get(s.domain), PolicyKind::static_prompt),
                      QueryKind::free_text_request, std::nullopt, now, Duration{0});
    commit(e, submit_free_text(std::move(s), std::move(text), now));
    return {200, {{"state", to_string(e.session.state)}}};
  }

  nlohmann::json test_set(const Session& s) const {
    return shuffled_test_set(domains_.get(s.domain).test_set, s.seed);
  }

  ApiResponse judgments(Entry& e, const nlohmann::json& req) {
    const nlohmann::json& list = req.is_array() ? req : req.at("judgments");
    std::vector<Judgment> js;
    try {
      js = list.get<std::vector<Judgment>>();
    } catch (const Error& err) {
      throw Error(Errc::invalid_argument, err.what());
    }
    commit(e, submit_judgments(e.session, domains_.get(e.session.domain).test_set, std::move(js)));
    return {200, {{"state", to_string(e.session.state)}}};
  }

  ApiResponse survey(Entry& e, const nlohmann::json& req) {
    const nlohmann::json& list = req.is_array() ? req : req.at("answers");
    std::vector<SurveyAnswer> answers;
    try {
      answers = list.get<std::vector<SurveyAnswer>>();
    } catch (const Error& err) {
      throw Error(Errc::invalid_argument, err.what());
    }
    commit(e, record_survey(e.session, answers));
    return {200, {{"state", to_string(e.session.state)}}};
  }

  ApiResponse results(Entry& e) {
    const Session& s = e.session;
    if (s.state != SessionState::complete) throw Error(Errc::state_violation, "results are available once complete");
    if (e.results) return {200, *e.results};

    const auto& d = domains_.get(s.domain);
    std::vector<PredictionRecord> records;
    if (store_ && store_->contains(std::string(kPredictionKind), s.id)) {
      records = load_predictions(*store_, s.id);
    } else {
      const auto cutoffs = s.policy.turn_mode() ? turn_cutoffs(*s.policy.turn_budget)
                                                : minute_cutoffs(static_cast<int>(
                                                      std::chrono::ceil<std::chrono::minutes>(s.policy.time_budget).count()));
      records = predict_test_set(gateway_, d, s, cutoffs);
      if (store_) save_predictions(*store_, s.id, records);
    }
    nlohmann::json out = {{"session_id", s.id}, {"records", records}};
    if (s.judgments.empty()) {
      out["curve"] = nullptr;
      out["auc"] = nullptr;
    } else {
      const auto curve = metrics::delta_curve(records, s.judgments);
      const double horizon = curve.points.back().coordinate;
      out["curve"] = curve;
      out["auc"] = metrics::auc(curve, horizon);
      try {
        out["auroc_curve"] = metrics::delta_auroc_curve(records, s.judgments);
      } catch (const Error& err) {
        if (err.code() != Errc::single_class) throw;
        out["auroc_curve"] = nullptr;
      }
    }
    e.results = out;
    return {200, out};
  }

  const DomainRegistry& domains_;
  LMGateway& gateway_;
  Clock clock_;
  FileStore* store_;
  std::uint64_t id_seed_;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::shared_ptr<const PoolContext>> pools_;
  std::uint64_t ordinal_ = 0;
};

}  // namespace gate
