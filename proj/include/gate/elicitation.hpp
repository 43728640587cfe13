#pragma once

// Elicitation policies: the three prompt-driven generators and the pool,
// supervised, and user-written-prompt baselines.

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gate/core.hpp"
#include "gate/domains.hpp"
#include "gate/lm.hpp"
#include "gate/metrics.hpp"
#include "gate/pool.hpp"

namespace gate {

struct Query {
  std::string text;
  QueryKind kind = QueryKind::open_question;
  std::optional<std::string> source_item_id;
  // Time spent waiting on the LM to produce this query.
  Duration lm_latency{0};
};

struct PromptTemplate {
  PolicyKind method = PolicyKind::gate_open;
  std::string domain;
  std::string body;  // contains kTranscriptSlot exactly once
};

namespace prompts {

inline constexpr std::string_view kEdgeCaseBody =
    "Your task is to [ goal ].\n"
    "\n"
    "Come up with a potential edge case to learn as much information as you can about what their desired behavior "
    "should be under different circumstances.\n"
    "Make sure the edge case addresses different aspects of the system than the edge cases that have already been "
    "considered.\n"
    "\n"
    "An example edge case is: [ example ]\n"
    "\n"
    "Current cases:\n"
    "[ Elicitation transcript ]\n"
    "\n"
    "Generate the most informative edge case that, when answered, will reveal the most about the desired behavior "
    "beyond what has already been queried for above. Generate the edge case in the following format, and nothing "
    "else: \"[ format ]\"";

inline constexpr std::string_view kQuestionBody =
    "Your task is to [ goal ].\n"
    "\n"
    "Previous questions:\n"
    "[ Elicitation transcript ]\n"
    "\n"
    "Generate the most informative [ question type ] that, when answered, will reveal the most about the desired "
    "behavior beyond what has already been queried for above. Make sure your question addresses different aspects "
    "of the implementation than the questions that have already been asked. At the same time however, the question "
    "should be bite-sized, and not ask for too much at once. Phrase your question in a way that is understandable "
    "to non-expert humans; do not use any jargon without explanation. Generate the [ question type ] and nothing "
    "else:";

}  // namespace prompts

/// Template for a (GATE method, domain) pair with the domain text filled in
/// and the transcript slot left open.
inline PromptTemplate elicitation_template(PolicyKind method, const DomainSpec& d) {
  if (!is_gate(method))
    throw Error(Errc::invalid_argument, std::string(to_string(method)) + " has no elicitation prompt");
  std::string body;
  if (method == PolicyKind::gate_active_learning) {
    body = detail::fill_slots(prompts::kEdgeCaseBody, {{"[ goal ]", d.elicitation_goal_text},
                                                       {"[ example ]", d.example_edge_case},
                                                       {"[ format ]", d.edge_case_format}});
  } else {
    const std::string_view question_type = method == PolicyKind::gate_yesno ? "yes/no question" : "open-ended question";
    body = detail::fill_slots(prompts::kQuestionBody,
                              {{"[ goal ]", d.elicitation_goal_text}, {"[ question type ]", question_type}});
  }
  return {method, d.key, std::move(body)};
}

inline std::string build_elicitation_prompt(PolicyKind method, const DomainSpec& d, std::string_view transcript_text) {
  return detail::fill_slots(elicitation_template(method, d).body, {{kTranscriptSlot, transcript_text}});
}

inline std::string build_elicitation_prompt(PolicyKind method, const DomainRegistry& registry,
                                            const std::string& domain, std::string_view transcript_text) {
  return build_elicitation_prompt(method, registry.get(domain), transcript_text);
}

/// Whitespace, then one layer of matching surrounding quotes, then whitespace.
inline std::string clean_generated_query(std::string_view raw) {
  std::string_view s = detail::trim_view(raw);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    s = detail::trim_view(s.substr(1, s.size() - 2));
  return std::string(s);
}

constexpr QueryKind query_kind_for(PolicyKind k) {
  switch (k) {
    case PolicyKind::gate_active_learning: return QueryKind::edge_case;
    case PolicyKind::gate_yesno: return QueryKind::yesno_question;
    case PolicyKind::gate_open: return QueryKind::open_question;
    case PolicyKind::static_prompt: return QueryKind::free_text_request;
    default: return QueryKind::pool_item;
  }
}

/// Items available to the pool-based policies of one session.
struct PoolContext {
  std::vector<pool::PoolItem> items;
  std::optional<pool::ClusterModel> clusters;

  const pool::PoolItem& item(const std::string& id) const {
    for (const auto& it : items)
      if (it.id == id) return it;
    throw Error(Errc::not_found, "pool item \"" + id + "\" not found");
  }
};

/// Per-session scheduling state for pool policies.
struct PoolState {
  pool::RoundRobinState round_robin;
  std::set<std::string> used;

  static PoolState resume(const Session& s, const PoolContext* ctx) {
    PoolState st;
    std::vector<std::string> issued;
    for (const auto& t : s.transcript)
      if (t.source_item_id) issued.push_back(*t.source_item_id);
    st.used.insert(issued.begin(), issued.end());
    if (ctx && ctx->clusters) st.round_robin = pool::RoundRobinState::resume(*ctx->clusters, issued);
    return st;
  }
};

/// True once the active budget is spent. Only the issuing of new queries is
/// gated; an already-issued query can still be answered.
inline bool should_stop(const Session& s, const PolicySpec& policy, Instant now) {
  if (policy.turn_mode()) return answered_turns(s.transcript) >= static_cast<std::size_t>(*policy.turn_budget);
  return elapsed_user_time(s.transcript, now, s.created_at) >= policy.time_budget;
}

namespace detail {

inline std::vector<const pool::PoolItem*> unused_items(const PoolContext& ctx, const std::set<std::string>& used) {
  std::vector<const pool::PoolItem*> out;
  for (const auto& it : ctx.items)
    if (!used.count(it.id)) out.push_back(&it);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

inline Query pool_query(const DomainSpec& d, const pool::PoolItem& item) {
  return {d.membership_query(item.body), QueryKind::pool_item, item.id, Duration{0}};
}

}  // namespace detail

/// Produces the next query for `session` under `policy`. GATE kinds make one
/// gateway call on the built prompt (re-asked once if the reply comes back
/// empty); pool kinds never issue the same item twice.
inline Query next_query(const PolicySpec& policy, const DomainSpec& d, const Session& session, LMGateway& gateway,
                        PoolState& state, const PoolContext* pool_ctx = nullptr) {
  if (session.state != SessionState::eliciting) throw Error(Errc::state_violation, "session is not eliciting");
  if (pending_turn(session)) throw Error(Errc::out_of_order, "previous query has not been answered");
  for (const auto& t : session.transcript)
    if (t.source_item_id) state.used.insert(*t.source_item_id);

  if (is_gate(policy.kind)) {
    const std::string prompt = build_elicitation_prompt(policy.kind, d, render_transcript(session.transcript));
    Duration latency{0};
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        auto response = gateway.complete(prompt);
        latency += response.latency;
        std::string text = clean_generated_query(response.content);
        if (text.empty()) throw Error(Errc::empty_response, "generated query is empty");
        return {std::move(text), query_kind_for(policy.kind), std::nullopt, latency};
      } catch (const Error& e) {
        if (e.code() != Errc::empty_response || attempt == 1) throw;
      }
    }
  }

  if (policy.kind == PolicyKind::static_prompt) {
    if (!session.transcript.empty()) throw Error(Errc::state_violation, "static_prompt asks for its specification once");
    return {elicitation_instructions(d, PolicyKind::static_prompt), QueryKind::free_text_request, std::nullopt,
            Duration{0}};
  }

  if (!pool_ctx) throw Error(Errc::invalid_policy, std::string(to_string(policy.kind)) + " needs a pool");
  const auto unused = detail::unused_items(*pool_ctx, state.used);
  if (unused.empty()) throw Error(Errc::pool_exhausted, "every pool item has been used");

  switch (policy.kind) {
    case PolicyKind::pool_random:
    case PolicyKind::supervised_random: {
      gate::detail::Rng rng(gate::detail::mix(session.seed, session.transcript.size()));
      const auto* item = unused[rng.below(unused.size())];
      state.used.insert(item->id);
      return detail::pool_query(d, *item);
    }
    case PolicyKind::pool_diversity: {
      if (!pool_ctx->clusters) throw Error(Errc::invalid_policy, "pool_diversity needs a cluster model");
      state.round_robin.used.insert(state.used.begin(), state.used.end());
      const std::string id = pool::next_diverse(state.round_robin, *pool_ctx->clusters);
      state.used.insert(id);
      return detail::pool_query(d, pool_ctx->item(id));
    }
    case PolicyKind::pool_uncertainty: {
      const std::string context = render_transcript(session.transcript);
      const pool::PoolItem* best = nullptr;
      double best_entropy = -1.0;
      for (const auto* item : unused) {
        const double p = gateway.yes_probability(d.membership_query(item->body), context);
        const double h = metrics::question_entropy(p);
        if (h > best_entropy) {
          best_entropy = h;
          best = item;
        }
      }
      state.used.insert(best->id);
      return detail::pool_query(d, *best);
    }
    default: break;
  }
  throw Error(Errc::invalid_policy, "unhandled policy kind");
}

}  // namespace gate
