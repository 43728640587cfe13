#include <gtest/gtest.h>

#include <regex>

#include "gate/persona.hpp"
#include "support.hpp"

namespace gate::sim {
namespace {

Persona regex_persona(std::string pattern) {
  Persona p;
  p.kind = PersonaKind::rule_regex;
  p.name = "regex";
  p.pattern = std::move(pattern);
  return p;
}

Persona lm_persona(std::string text) {
  Persona p;
  p.kind = PersonaKind::lm_persona;
  p.text = std::move(text);
  return p;
}

PolicySpec policy(PolicyKind k, std::optional<std::string> pool = std::nullopt) {
  PolicySpec p;
  p.kind = k;
  p.pool_ref = std::move(pool);
  return p;
}

const char* kSimpleEmail = R"([A-Za-z0-9._]+@[A-Za-z0-9]+\.[a-z]+)";

std::vector<TestItem> email_items() {
  return {{"e0", "user@domain.com"}, {"e1", "a b@c.com"},     {"e2", "first.last@site.org"}, {"e3", "@nouser.com"},
          {"e4", "x@y"},             {"e5", "UPPER@CASE.io"}, {"e6", "two@@ats.com"},        {"e7", "ok_1@host.net"},
          {"e8", "trailing@dot."},   {"e9", "plain"}};
}

TEST(PersonaAnswer, RegexExamples) {
  auto gw = testing::seeded_gateway();
  const auto p = regex_persona(kSimpleEmail);
  EXPECT_EQ(persona_answer(gw, p, "Should the following be accepted? user@domain.com"), "yes");
  EXPECT_EQ(persona_answer(gw, p, "Should the following be accepted? a b@c.com"), "no");
  try {
    persona_answer(gw, p, "What do you think makes an email valid?");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unanswerable);
  }
}

TEST(PersonaAnswer, LmPassthroughUsesPersonaPrompt) {
  std::shared_ptr<ScriptedBackend> backend;
  auto gw = testing::scripted_gateway({"Kantian: no"}, &backend);
  const auto p = lm_persona("You subscribe to a Kantian code of ethics.");
  EXPECT_EQ(persona_answer(gw, p, "Situation: stealing for fun"), "Kantian: no");
  EXPECT_EQ(backend->requests().at(0).messages.at(0).content,
            "You subscribe to a Kantian code of ethics. Answer the question in the shortest way with minimal "
            "additional explanation.\nSituation: stealing for fun");
}

TEST(PersonaAnswer, TableLookupAndDefault) {
  auto gw = testing::seeded_gateway();
  Persona p;
  p.kind = PersonaKind::rule_table;
  p.table = {{"You are starving.", Answer::yes}};
  EXPECT_EQ(persona_answer(gw, p, "Situation: You are starving."), "yes");
  EXPECT_THROW(persona_answer(gw, p, "Situation: You are bored."), Error);
  p.default_answer = Answer::no;
  EXPECT_EQ(persona_answer(gw, p, "Situation: You are bored."), "no");
}

TEST(PersonaAnswer, RulePersonasArePure) {
  auto gw = testing::seeded_gateway();
  const auto p = regex_persona(kSimpleEmail);
  for (const auto& item : email_items()) {
    const auto q = builtin::email_validation().membership_query(item.body);
    const auto first = persona_answer(gw, p, q);
    EXPECT_EQ(persona_answer(gw, p, q), first);
    EXPECT_EQ(first == "yes", std::regex_match(item.body, std::regex(kSimpleEmail)));
  }
}

TEST(Persona, Validation) {
  EXPECT_THROW(validate(lm_persona("  ")), Error);
  EXPECT_THROW(validate(regex_persona("")), Error);
  EXPECT_THROW(validate(regex_persona("([")), Error);
  Persona empty_table;
  empty_table.kind = PersonaKind::rule_table;
  EXPECT_THROW(validate(empty_table), Error);
}

TEST(Persona, JsonForms) {
  const auto r = nlohmann::json::parse(R"({"kind":"rule_regex","name":"simple","text":"","rule":"[a-z]+@[a-z]+\\.com"})")
                     .get<Persona>();
  EXPECT_EQ(r.pattern, "[a-z]+@[a-z]+\\.com");
  const auto t = nlohmann::json::parse(R"({"kind":"rule_table","rule":{"table":{"a":"yes"},"default":"no"}})").get<Persona>();
  EXPECT_EQ(t.table.at("a"), Answer::yes);
  EXPECT_EQ(*t.default_answer, Answer::no);
  EXPECT_EQ(nlohmann::json(t).get<Persona>().table, t.table);
  EXPECT_THROW(nlohmann::json::parse(R"({"kind":"lm_persona","text":""})").get<Persona>(), Error);
}

TEST(Compatibility, RulePersonasOnlyWithMembershipQueries) {
  const auto p = regex_persona(kSimpleEmail);
  EXPECT_TRUE(compatible(p, PolicyKind::gate_active_learning));
  EXPECT_TRUE(compatible(p, PolicyKind::pool_random));
  EXPECT_FALSE(compatible(p, PolicyKind::gate_open));
  EXPECT_FALSE(compatible(p, PolicyKind::static_prompt));
  EXPECT_TRUE(compatible(lm_persona("x"), PolicyKind::gate_open));

  Persona table;
  table.kind = PersonaKind::rule_table;
  table.default_answer = Answer::no;
  auto gw = testing::seeded_gateway();
  DomainRegistry reg;
  const auto items = email_items();
  try {
    run_simulation(policy(PolicyKind::gate_open), table, reg.get("email_validation"), gw, 5, items);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::incompatible);
  }
}

TEST(RunSimulation, CardinalityAndDeterminism) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  const auto items = email_items();
  const auto persona = regex_persona(kSimpleEmail);
  auto run = [&] {
    auto gw = testing::seeded_gateway(77);
    return run_simulation(policy(PolicyKind::gate_active_learning), persona, d, gw, 5, items, {.seed = 9});
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.records.size(), 60u);
  EXPECT_EQ(a.session, b.session);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.curve, b.curve);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.session.state, SessionState::complete);
  EXPECT_EQ(a.session.transcript.size(), 5u);
  EXPECT_EQ(a.curve.axis, CurveAxis::turns);
  EXPECT_EQ(a.curve.points.size(), 6u);
  EXPECT_NO_THROW(metrics::validate(a.curve));
  for (const auto& j : a.session.judgments) {
    const auto& body = std::find_if(items.begin(), items.end(), [&](auto& i) { return i.id == j.item_id; })->body;
    EXPECT_EQ(j.answer == Answer::yes, std::regex_match(body, std::regex(kSimpleEmail))) << body;
  }
}

TEST(RunSimulation, EveryCompatiblePolicyRuns) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  PoolContext ctx;
  for (int i = 0; i < 12; ++i) ctx.items.push_back({"p" + std::to_string(i), "name" + std::to_string(i) + "@mail.com"});
  pool::HashingEmbedder e;
  ctx.clusters = pool::cluster(pool::embed_pool(ctx.items, e), 3, 1);
  const auto items = email_items();
  for (auto kind : kAllPolicyKinds) {
    const auto persona = uses_pool(kind) || kind == PolicyKind::gate_active_learning ? regex_persona(kSimpleEmail)
                                                                                      : lm_persona("You like dots.");
    auto gw = testing::seeded_gateway(5);
    const auto pol = uses_pool(kind) ? policy(kind, "p") : policy(kind);
    const auto r = run_simulation(pol, persona, d, gw, 3, items, {.seed = 1, .pool = &ctx});
    EXPECT_EQ(r.records.size(), 40u) << to_string(kind);
    EXPECT_EQ(r.session.transcript.size(), kind == PolicyKind::static_prompt ? 1u : 3u) << to_string(kind);
  }
}

TEST(RunSimulation, StopsWhenPoolRunsOut) {
  DomainRegistry reg;
  PoolContext ctx;
  ctx.items = {{"p0", "a@b.com"}, {"p1", "c d"}};
  auto gw = testing::seeded_gateway(5);
  const auto r = run_simulation(policy(PolicyKind::pool_random, "p"), regex_persona(kSimpleEmail),
                                reg.get("email_validation"), gw, 5, email_items(), {.seed = 1, .pool = &ctx});
  EXPECT_EQ(r.session.transcript.size(), 2u);
  EXPECT_EQ(r.records.size(), 60u);
}

TEST(CompareToHuman, Examples) {
  const std::map<std::string, MethodMetrics> sim = {{"a", {0.1, 0.01}}, {"b", {0.2, 0.03}}, {"c", {0.3, 0.02}}};
  const auto same = compare_to_human(sim, sim);
  EXPECT_NEAR(same.auc_correlation, 1.0, 1e-12);
  EXPECT_NEAR(same.final_delta_correlation, 1.0, 1e-12);
  const std::map<std::string, MethodMetrics> human = {{"a", {0.2, 0.02}}, {"b", {0.4, 0.06}}, {"c", {0.6, 0.04}}};
  EXPECT_NEAR(compare_to_human(sim, human).auc_correlation, 1.0, 1e-12);
  EXPECT_EQ(compare_to_human(sim, human).paired.size(), 3u);
  EXPECT_THROW(compare_to_human(sim, {{"a", {0.2, 0.02}}}), Error);
}

}  // namespace
}  // namespace gate::sim
