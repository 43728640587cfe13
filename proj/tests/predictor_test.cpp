#include <gtest/gtest.h>

#include <sstream>

#include "gate/predictor.hpp"
#include "support.hpp"

namespace gate {
namespace {

using testing::at_s;

TEST(DecisionPrompt, Examples) {
  DomainRegistry reg;
  const auto content = build_decision_prompt(reg.get("content_recommendation"), "", {"a", "Title: X"});
  EXPECT_EQ(content.rfind("A user has a particular set of preferences over what articles", 0), 0u);
  EXPECT_NE(content.find("below:\n\n\nBased"), std::string::npos);
  const auto email = build_decision_prompt(reg.get("email_validation"), "Q: q\nA: a\n", {"e", "user@domain.edu"});
  EXPECT_NE(email.find("does the following email adhere to the user's desired format?"), std::string::npos);
  EXPECT_TRUE(email.ends_with("make your best guess.\nuser@domain.edu"));
}

TEST(DecisionPrompt, LongerPrefixContainsShorter) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  const auto s = testing::timed_session({0, 10, 20}, {0, 0, 0}, {5, 15, 25});
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto shorter = render_transcript(transcript_at_turn(s, k - 1));
    const auto longer = build_decision_prompt(d, render_transcript(transcript_at_turn(s, k)), {"i", "x"});
    EXPECT_NE(longer.find(shorter), std::string::npos);
  }
}

TEST(ParseProbability, Examples) {
  EXPECT_DOUBLE_EQ(parse_probability("0.8"), 0.8);
  EXPECT_DOUBLE_EQ(parse_probability("The probability is 0.85"), 0.85);
  EXPECT_DOUBLE_EQ(parse_probability(".5"), 0.5);
  EXPECT_DOUBLE_EQ(parse_probability("1"), 1.0);
  EXPECT_DOUBLE_EQ(parse_probability("I'd say 70%"), 0.7);
  EXPECT_DOUBLE_EQ(parse_probability("1.7"), 1.0);
  EXPECT_DOUBLE_EQ(parse_probability("-0.2"), 0.0);
  EXPECT_TRUE(parse_probability_detailed("1.7").clamped);
  try {
    parse_probability("yes");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_numeral);
  }
}

TEST(Predict, ScriptedReplies) {
  DomainRegistry reg;
  const auto d = reg.get("email_validation");
  auto one = testing::scripted_gateway({"0.7"});
  EXPECT_DOUBLE_EQ(predict(one, d, "", {"i", "a@b"}).prob_yes, 0.7);

  std::shared_ptr<ScriptedBackend> backend;
  auto reask = testing::scripted_gateway({"n/a", "0.3"}, &backend);
  const auto r = predict(reask, d, "", {"i", "a@b"}, "s1", Cutoff::turns(2));
  EXPECT_DOUBLE_EQ(r.prob_yes, 0.3);
  EXPECT_EQ(r.raw_response, "0.3");
  EXPECT_EQ(r.session_id, "s1");
  EXPECT_EQ(r.cutoff, Cutoff::turns(2));
  EXPECT_EQ(backend->consumed(), 2u);

  auto fail = testing::scripted_gateway({"n/a", "n/a"});
  try {
    predict(fail, d, "", {"i", "a@b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse_failure);
  }
}

Session minute_session() {
  // Answers at user times 30 s, 90 s and 150 s.
  auto s = testing::timed_session({0, 40, 100}, {0, 0, 0}, {30, 90, 150});
  s = finish_elicitation(std::move(s));
  return s;
}

TEST(PredictTestSet, CardinalityAndOrder) {
  DomainRegistry reg;
  auto d = reg.get("email_validation");
  d.test_set = {{"a", "a@b.com"}, {"b", "b@@c"}, {"c", "c d@e"}};
  auto gw = testing::seeded_gateway(3);
  const auto s = minute_session();
  const auto records = predict_test_set(gw, d, s, minute_cutoffs());
  ASSERT_EQ(records.size(), 18u);
  EXPECT_EQ(records[0].cutoff, Cutoff::minutes(0));
  EXPECT_EQ(records[0].item_id, "a");
  EXPECT_EQ(records[3].cutoff, Cutoff::minutes(1));
  for (const auto& r : records) {
    EXPECT_GE(r.prob_yes, 0.0);
    EXPECT_LE(r.prob_yes, 1.0);
  }
  // Cutoff 0 is the empty-transcript prediction.
  EXPECT_EQ(records[0].prob_yes, predict(gw, d, "", d.test_set[0]).prob_yes);
  // Nothing is answered between minutes 3 and 5, so those predictions agree.
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(records[9 + i].prob_yes, records[15 + i].prob_yes);
    EXPECT_EQ(records[12 + i].prob_yes, records[15 + i].prob_yes);
  }
  EXPECT_THROW(predict_test_set(gw, d, s, std::vector<Cutoff>{Cutoff::minutes(2), Cutoff::minutes(1)}), Error);
}

TEST(PredictTestSet, StaticPromptUsesFreeText) {
  DomainRegistry reg;
  const auto d = reg.get("moral_reasoning");
  PolicySpec p;
  p.kind = PolicyKind::static_prompt;
  Session s = make_session(d.key, p, 1, 0, at_s(0));
  s = submit_free_text(std::move(s), "Only when starving.", at_s(120));
  EXPECT_EQ(specification_at(s, Cutoff::minutes(1)), "");
  EXPECT_EQ(specification_at(s, Cutoff::minutes(2)), "Only when starving.");
  EXPECT_EQ(specification_at(s, Cutoff::turns(1)), "Only when starving.");
  EXPECT_EQ(specification_at(s, Cutoff::turns(0)), "");
}

TEST(PredictionRecords, JsonlRoundTrip) {
  const std::vector<PredictionRecord> rs = {{"s", "a", Cutoff::minutes(3), 0.25, "0.25"},
                                            {"s", "b", Cutoff::turns(2), 1.0, "1"}};
  std::stringstream io;
  write_predictions_jsonl(io, rs);
  EXPECT_EQ(read_predictions_jsonl(io), rs);
  std::stringstream bad("{\"session_id\":\"s\",\"item_id\":\"a\",\"cutoff_axis\":\"turns\",\"cutoff\":1,"
                        "\"prob_yes\":1.5,\"raw_response\":\"\"}\n");
  EXPECT_THROW(read_predictions_jsonl(bad), Error);
}

}  // namespace
}  // namespace gate
