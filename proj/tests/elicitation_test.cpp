#include <gtest/gtest.h>

#include <random>
#include <set>

#include "gate/elicitation.hpp"
#include "gate/persona.hpp"
#include "gate/predictor.hpp"
#include "support.hpp"

namespace gate {
namespace {

using testing::at_s;

const std::string kGoldenTranscript = "Q: Do you read news about sports?\nA: Only football.";

PolicySpec policy(PolicyKind k, std::optional<std::string> pool = std::nullopt) {
  PolicySpec p;
  p.kind = k;
  p.pool_ref = std::move(pool);
  return p;
}

class PromptGolden : public ::testing::TestWithParam<std::tuple<PolicyKind, std::string>> {};

TEST_P(PromptGolden, MatchesFixture) {
  const auto [method, domain] = GetParam();
  DomainRegistry reg;
  const std::string name = std::string(to_string(method)) + "__" + domain + ".txt";
  const std::string expected = testing::read_text(testing::fixture("prompts/" + name));
  ASSERT_FALSE(expected.empty()) << name;
  EXPECT_EQ(build_elicitation_prompt(method, reg, domain, kGoldenTranscript), expected);
}

INSTANTIATE_TEST_SUITE_P(
    AllGateMethods, PromptGolden,
    ::testing::Combine(::testing::Values(PolicyKind::gate_active_learning, PolicyKind::gate_yesno, PolicyKind::gate_open),
                       ::testing::Values("content_recommendation", "moral_reasoning", "email_validation")),
    [](const auto& info) {
      return std::string(to_string(std::get<0>(info.param))) + "_" + std::get<1>(info.param);
    });

TEST(BuildPrompt, Examples) {
  DomainRegistry reg;
  EXPECT_NE(build_elicitation_prompt(PolicyKind::gate_active_learning, reg, "email_validation", "")
                .find("Should the following email be accepted? username@example.com"),
            std::string::npos);
  const auto yesno = build_elicitation_prompt(PolicyKind::gate_yesno, reg, "content_recommendation", "");
  EXPECT_NE(yesno.find("Generate the most informative yes/no question"), std::string::npos);
  EXPECT_NE(yesno.find("Generate the yes/no question and nothing else:"), std::string::npos);
  const std::string t = "Q: Is it ever fine?\nA: Sometimes, [ goal ] aside.\n";
  const auto open = build_elicitation_prompt(PolicyKind::gate_open, reg, "moral_reasoning", t);
  EXPECT_NE(open.find("Previous questions:\n" + t), std::string::npos);
  EXPECT_THROW(build_elicitation_prompt(PolicyKind::pool_random, reg, "moral_reasoning", ""), Error);
  EXPECT_THROW(build_elicitation_prompt(PolicyKind::gate_open, reg, "cooking", ""), Error);
}

TEST(CleanQuery, StripsWhitespaceAndOneLayerOfQuotes) {
  EXPECT_EQ(clean_generated_query("  \"Situation: x\"\n"), "Situation: x");
  EXPECT_EQ(clean_generated_query("'a'"), "a");
  EXPECT_EQ(clean_generated_query("\"\"nested\"\""), "\"nested\"");
  EXPECT_EQ(clean_generated_query("\"unbalanced"), "\"unbalanced");
}

TEST(NextQuery, GatePassesScriptedTextThrough) {
  DomainRegistry reg;
  const auto d = reg.get("content_recommendation");
  std::shared_ptr<ScriptedBackend> backend;
  auto gw = testing::scripted_gateway({"Do you enjoy health articles?"}, &backend);
  Session s = make_session(d.key, policy(PolicyKind::gate_yesno), 1, 0, at_s(0));
  PoolState st;
  const Query q = next_query(s.policy, d, s, gw, st);
  EXPECT_EQ(q.text, "Do you enjoy health articles?");
  EXPECT_EQ(q.kind, QueryKind::yesno_question);
  EXPECT_FALSE(q.source_item_id);
  EXPECT_EQ(backend->requests().at(0).messages.at(0).content,
            build_elicitation_prompt(PolicyKind::gate_yesno, d, ""));
}

TEST(NextQuery, ReasksOnceOnEmptyThenFails) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  Session s = make_session(d.key, policy(PolicyKind::gate_open), 1, 0, at_s(0));
  PoolState st;
  auto ok = testing::scripted_gateway({"\"\"", "What about dots?"});
  EXPECT_EQ(next_query(s.policy, d, s, ok, st).text, "What about dots?");
  auto bad = testing::scripted_gateway({"\"\"", "''"});
  try {
    next_query(s.policy, d, s, bad, st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_response);
  }
}

TEST(NextQuery, PromptGrowsWithTranscript) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  std::shared_ptr<ScriptedBackend> backend;
  auto gw = testing::scripted_gateway({"q0", "q1", "q2"}, &backend);
  Session s = make_session(d.key, policy(PolicyKind::gate_open), 1, 0, at_s(0));
  PoolState st;
  for (int i = 0; i < 3; ++i) {
    const auto q = next_query(s.policy, d, s, gw, st);
    s = issue_query(std::move(s), q.text, q.kind, q.source_item_id, at_s(i * 10), q.lm_latency);
    s = append_answer(std::move(s), i, "a" + std::to_string(i), at_s(i * 10 + 5));
  }
  const auto reqs = backend->requests();
  for (std::size_t k = 1; k < reqs.size(); ++k)
    EXPECT_NE(reqs[k].messages[0].content.find(render_transcript(transcript_at_turn(s, k))), std::string::npos);
}

TEST(NextQuery, StaticPromptAsksOnce) {
  DomainRegistry reg;
  const auto d = reg.get("moral_reasoning");
  auto gw = testing::seeded_gateway();
  Session s = make_session(d.key, policy(PolicyKind::static_prompt), 1, 0, at_s(0));
  PoolState st;
  const auto q = next_query(s.policy, d, s, gw, st);
  EXPECT_EQ(q.kind, QueryKind::free_text_request);
  EXPECT_EQ(q.text, elicitation_instructions(d, PolicyKind::static_prompt));
  s = issue_query(std::move(s), q.text, q.kind, q.source_item_id, at_s(0), q.lm_latency);
  s = append_answer(std::move(s), 0, "answer", at_s(1));
  try {
    next_query(s.policy, d, s, gw, st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::state_violation);
  }
}

PoolContext abc_pool() {
  PoolContext ctx;
  ctx.items = {{"x1", "one@a.com"}, {"x2", "two@a.com"}, {"x3", "three@a.com"}};
  pool::ClusterModel m;
  m.k = 3;
  m.members = {{"x1", "x2"}, {"x3"}, {}};
  m.assignment = {{"x1", 0}, {"x2", 0}, {"x3", 1}};
  m.centroids = {{0.0}, {1.0}, {}};
  ctx.clusters = m;
  return ctx;
}

Session run_pool(PolicyKind kind, const PoolContext& ctx, LMGateway& gw, int turns, std::vector<std::string>* ids) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  Session s = make_session(d.key, policy(kind, "p"), 42, 0, at_s(0));
  PoolState st = PoolState::resume(s, &ctx);
  for (int i = 0; i < turns; ++i) {
    const auto q = next_query(s.policy, d, s, gw, st, &ctx);
    EXPECT_EQ(q.kind, QueryKind::pool_item);
    EXPECT_EQ(q.text, d.membership_query(ctx.item(*q.source_item_id).body));
    ids->push_back(*q.source_item_id);
    s = issue_query(std::move(s), q.text, q.kind, q.source_item_id, at_s(i * 10), q.lm_latency);
    s = append_answer(std::move(s), i, "yes", at_s(i * 10 + 1));
  }
  return s;
}

TEST(NextQuery, DiversityFollowsRoundRobin) {
  const auto ctx = abc_pool();
  auto gw = testing::seeded_gateway();
  std::vector<std::string> ids;
  Session s = run_pool(PolicyKind::pool_diversity, ctx, gw, 3, &ids);
  EXPECT_EQ(ids, (std::vector<std::string>{"x1", "x3", "x2"}));
  DomainRegistry reg;
  PoolState st = PoolState::resume(s, &ctx);
  try {
    next_query(s.policy, reg.get("email_validation"), s, gw, st, &ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::pool_exhausted);
  }
}

TEST(NextQuery, DiversityResumesAfterReload) {
  const auto ctx = abc_pool();
  auto gw = testing::seeded_gateway();
  std::vector<std::string> first;
  Session s = run_pool(PolicyKind::pool_diversity, ctx, gw, 2, &first);
  DomainRegistry reg;
  PoolState fresh = PoolState::resume(s, &ctx);
  EXPECT_EQ(*next_query(s.policy, reg.get("email_validation"), s, gw, fresh, &ctx).source_item_id, "x2");
}

TEST(NextQuery, UncertaintyPicksMaximumEntropy) {
  const auto ctx = abc_pool();
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  auto backend = std::make_shared<SeededBackend>(1);
  backend->set_probability(d.membership_query("one@a.com"), 0.9);
  backend->set_probability(d.membership_query("two@a.com"), 0.5);
  backend->set_probability(d.membership_query("three@a.com"), 0.1);
  LMGateway gw(LMProfile{}, backend, [](Duration) {});
  std::vector<std::string> ids;
  run_pool(PolicyKind::pool_uncertainty, ctx, gw, 1, &ids);
  EXPECT_EQ(ids, (std::vector<std::string>{"x2"}));
}

TEST(NextQuery, UncertaintyTiesGoToLowestId) {
  const auto ctx = abc_pool();
  LMGateway gw(LMProfile{}, std::make_shared<SeededBackend>(1, 0.3), [](Duration) {});
  std::vector<std::string> ids;
  run_pool(PolicyKind::pool_uncertainty, ctx, gw, 3, &ids);
  EXPECT_EQ(ids, (std::vector<std::string>{"x1", "x2", "x3"}));
}

TEST(NextQuery, PoolPoliciesNeverRepeatAndAreSeedDeterministic) {
  PoolContext ctx;
  for (int i = 0; i < 30; ++i) ctx.items.push_back({"item" + std::to_string(i), "body " + std::to_string(i)});
  auto embedder = pool::HashingEmbedder(16);
  ctx.clusters = pool::cluster(pool::embed_pool(ctx.items, embedder), 4, 1);
  for (auto kind : {PolicyKind::pool_random, PolicyKind::supervised_random, PolicyKind::pool_diversity,
                    PolicyKind::pool_uncertainty}) {
    auto gw = testing::seeded_gateway(3);
    std::vector<std::string> a, b;
    run_pool(kind, ctx, gw, 30, &a);
    run_pool(kind, ctx, gw, 30, &b);
    EXPECT_EQ(a, b) << to_string(kind);
    EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 30u) << to_string(kind);
  }
}

TEST(NextQuery, PoolPolicyNeedsPool) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  auto gw = testing::seeded_gateway();
  Session s = make_session(d.key, policy(PolicyKind::pool_random, "p"), 1, 0, at_s(0));
  PoolState st;
  EXPECT_THROW(next_query(s.policy, d, s, gw, st, nullptr), Error);
}

TEST(ShouldStop, TimeAndTurnModes) {
  PolicySpec time_mode = policy(PolicyKind::gate_open);
  const auto s = testing::timed_session({0}, {0}, {10});
  EXPECT_FALSE(should_stop(s, time_mode, at_s(299)));
  EXPECT_TRUE(should_stop(s, time_mode, at_s(300)));

  PolicySpec turn_mode = policy(PolicyKind::gate_open);
  turn_mode.turn_budget = 5;
  const auto four = testing::timed_session({0, 1, 2, 3}, {0, 0, 0, 0}, {0.5, 1.5, 2.5, 3.5});
  const auto five = testing::timed_session({0, 1, 2, 3, 4}, {0, 0, 0, 0, 0}, {0.5, 1.5, 2.5, 3.5, 4.5});
  EXPECT_FALSE(should_stop(four, turn_mode, at_s(10'000)));
  EXPECT_TRUE(should_stop(five, turn_mode, at_s(5)));
}

TEST(ShouldStop, LatencyDoesNotCountAgainstBudget) {
  PolicySpec time_mode = policy(PolicyKind::gate_open);
  // 320 s of wall time, 30 s of it spent generating the query.
  const auto s = testing::timed_session({30}, {30}, {-1});
  EXPECT_FALSE(should_stop(s, time_mode, at_s(320)));
  EXPECT_TRUE(should_stop(s, time_mode, at_s(330)));
}

TEST(PersonaPrompt, MatchesFixture) {
  EXPECT_EQ(sim::persona_prompt("You subscribe to a Kantian code of ethics.",
                                "Situation: Is it ethical to steal bread to feed a stray dog?"),
            testing::read_text(testing::fixture("prompts/persona.txt")));
}

class DecisionGolden : public ::testing::TestWithParam<std::string> {};

TEST_P(DecisionGolden, MatchesFixture) {
  DomainRegistry reg;
  const auto d = reg.get(GetParam());
  EXPECT_EQ(build_decision_prompt(d, kGoldenTranscript, {"t", "Title: Local team wins the cup"}),
            testing::read_text(testing::fixture("prompts/decision__" + GetParam() + ".txt")));
}

INSTANTIATE_TEST_SUITE_P(AllDomains, DecisionGolden,
                         ::testing::Values("content_recommendation", "moral_reasoning", "email_validation"));

}  // namespace
}  // namespace gate
