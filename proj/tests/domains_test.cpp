#include <gtest/gtest.h>

#include <sstream>

#include "gate/domains.hpp"
#include "gate/jsonl.hpp"

namespace gate {
namespace {

TEST(Builtins, AreValidAndComplete) {
  DomainRegistry reg;
  EXPECT_EQ(reg.keys(), (std::vector<std::string>{"content_recommendation", "email_validation", "moral_reasoning"}));
  for (const auto& key : reg.keys()) {
    const auto d = reg.get(key);
    EXPECT_NO_THROW(validate(d)) << key;
    EXPECT_NE(d.decision_preamble_text.find(std::string(kTranscriptSlot)), std::string::npos);
    EXPECT_NE(d.decision_preamble_text.find(std::string(kTestCaseSlot)), std::string::npos);
    EXPECT_NE(d.edge_case_format.find(std::string(kEdgeCaseSlot)), std::string::npos);
  }
  EXPECT_THROW(reg.get("cooking"), Error);
}

TEST(Builtins, MembershipQueryPhrasing) {
  EXPECT_EQ(builtin::email_validation().membership_query("a@b.com"), "Should the following be accepted? a@b.com");
  EXPECT_EQ(builtin::moral_reasoning().membership_query("You are hungry."), "Situation: You are hungry.");
  EXPECT_EQ(builtin::content_recommendation().membership_query("Title: X"),
            "Are you interested in the following article? Title: X");
}

TEST(Instructions, PerFlow) {
  const auto d = builtin::email_validation();
  const auto gate_text = elicitation_instructions(d, PolicyKind::gate_open);
  EXPECT_NE(gate_text.find("This chatbot will ask you a series of questions about your intuition of what makes email "
                           "addresses look like email addresses."),
            std::string::npos);
  EXPECT_NE(gate_text.find("The chatbot will stop asking questions after 5 minutes"), std::string::npos);
  const auto prompt_text = elicitation_instructions(d, PolicyKind::static_prompt);
  EXPECT_NE(prompt_text.find("You will have up to 5 minutes"), std::string::npos);
  EXPECT_EQ(prompt_text.find("chatbot will ask"), std::string::npos);
  const auto pool_text = elicitation_instructions(d, PolicyKind::pool_random);
  EXPECT_EQ(pool_text.find("series of questions"), std::string::npos);
  EXPECT_NE(pool_text.find("test set of email addresses"), std::string::npos);
}

TEST(Registry, RejectsInvalidDomainsAndDuplicateItems) {
  DomainRegistry reg;
  DomainSpec d = builtin::email_validation();
  d.key = "custom_email";
  d.elicitation_goal_text.clear();
  EXPECT_THROW(reg.add(d), Error);
  EXPECT_THROW(reg.set_test_set("email_validation", {{"a", "x"}, {"a", "y"}}), Error);
  reg.set_test_set("email_validation", {{"a", "x"}, {"b", "y"}});
  EXPECT_EQ(reg.get("email_validation").test_set.size(), 2u);
}

TEST(Registry, JsonRoundTrip) {
  DomainSpec d = builtin::moral_reasoning();
  d.test_set = {{"m1", "Situation one"}};
  const nlohmann::json j = d;
  const auto back = j.get<DomainSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Jsonl, ReadsItemsAndRejectsDuplicates) {
  std::istringstream in("{\"id\":\"a\",\"body\":\"x\"}\n\n{\"id\":\"b\",\"body\":\"y\"}\n");
  const auto items = read_items_jsonl(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[1].body, "y");
  std::istringstream dup("{\"id\":\"a\",\"body\":\"x\"}\n{\"id\":\"a\",\"body\":\"y\"}\n");
  EXPECT_THROW(read_items_jsonl(dup), Error);
  std::istringstream bad("{\"id\":\"a\"\n");
  try {
    read_items_jsonl(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::corrupt_record);
  }
  std::ostringstream out;
  write_items_jsonl(out, items);
  std::istringstream again(out.str());
  EXPECT_EQ(read_items_jsonl(again), items);
}

TEST(Jsonl, ReadsMindNews) {
  std::istringstream full("N1\tsports\tsoccer\tCup final tonight\tThe final kicks off at 8.\turl\t[]\t[]\n"
                          "N2\tnews\tworld\tElection results\t\turl\t[]\t[]\n");
  const auto items = read_mind_tsv(full);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "N1");
  EXPECT_EQ(items[0].body, "Cup final tonight\nThe final kicks off at 8.");
  EXPECT_EQ(items[1].body, "Election results");
  std::istringstream short_form("N3\tsports\tShort title\tShort abstract\n");
  EXPECT_EQ(read_mind_tsv(short_form).at(0).body, "Short title\nShort abstract");
}

}  // namespace
}  // namespace gate
