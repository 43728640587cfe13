#pragma once

// Built-in task domains and the text each one contributes to prompts and to
// participant-facing instructions.

#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gate/core.hpp"

namespace gate {

enum class DomainKind { content_recommendation, moral_reasoning, email_validation, custom };

constexpr std::string_view to_string(DomainKind k) {
  switch (k) {
    case DomainKind::content_recommendation: return "content_recommendation";
    case DomainKind::moral_reasoning: return "moral_reasoning";
    case DomainKind::email_validation: return "email_validation";
    case DomainKind::custom: return "custom";
  }
  return "?";
}

inline constexpr std::string_view kTranscriptSlot = "[ Elicitation transcript ]";
inline constexpr std::string_view kTestCaseSlot = "[ Test case sample ]";
inline constexpr std::string_view kEdgeCaseSlot = "[edge case]";

struct DomainSpec {
  std::string key;
  DomainKind kind = DomainKind::custom;
  // Completes "Your task is to ...".
  std::string elicitation_goal_text;
  std::string example_edge_case;
  // Output format requested from the edge-case generator; contains "[edge case]".
  std::string edge_case_format;
  // Decision template with the transcript and test-case slots.
  std::string decision_preamble_text;
  // Top-level domain instructions shown before elicitation.
  std::string ui_instructions;
  // Phrase completing "a series of questions about ..." / "explain all details about ...".
  std::string instruction_topic;
  std::string test_set_noun;
  std::string learned_noun;
  std::string labeling_instructions;
  std::vector<TestItem> test_set;

  /// The edge-case format with its slot removed, used to phrase membership
  /// queries ("Should the following be accepted? <candidate>").
  std::string membership_prefix() const {
    const auto pos = edge_case_format.find(kEdgeCaseSlot);
    std::string prefix = pos == std::string::npos ? edge_case_format : edge_case_format.substr(0, pos);
    return detail::trim(prefix);
  }

  std::string membership_query(std::string_view candidate) const {
    return membership_prefix() + " " + std::string(candidate);
  }
};

inline void validate(const DomainSpec& d) {
  auto need = [&](const std::string& v, const char* field) {
    if (detail::trim_view(v).empty())
      throw Error(Errc::invalid_argument, "domain \"" + d.key + "\": field " + field + " is empty");
  };
  need(d.key, "key");
  need(d.elicitation_goal_text, "elicitation_goal_text");
  need(d.example_edge_case, "example_edge_case");
  need(d.edge_case_format, "edge_case_format");
  need(d.decision_preamble_text, "decision_preamble_text");
  need(d.ui_instructions, "ui_instructions");
  need(d.instruction_topic, "instruction_topic");
  need(d.test_set_noun, "test_set_noun");
  need(d.learned_noun, "learned_noun");
  need(d.labeling_instructions, "labeling_instructions");
  if (d.decision_preamble_text.find(kTranscriptSlot) == std::string::npos ||
      d.decision_preamble_text.find(kTestCaseSlot) == std::string::npos)
    throw Error(Errc::invalid_argument, "domain \"" + d.key + "\": decision template is missing a slot");
  std::vector<std::string> ids;
  for (const auto& t : d.test_set) ids.push_back(t.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(Errc::invalid_argument, "domain \"" + d.key + "\": duplicate test item id");
}

namespace builtin {

inline DomainSpec content_recommendation() {
  DomainSpec d;
  d.key = "content_recommendation";
  d.kind = DomainKind::content_recommendation;
  d.elicitation_goal_text =
      "learn what topics a user is interested in reading online article about. People's interests are broad, so "
      "you should seek to understand their interests across many topics; in other words, go for breadth rather "
      "than depth. Do not assume a user has given a complete answer to any question, so make sure to keep probing "
      "different types of interests";
  d.example_edge_case =
      "Are you interested in the following article? Website Name: TechTalkDaily\n"
      "Title: 10 Must-Have Gadgets for 2023: A Comprehensive Guide\n"
      "Description: Discover the top 10 gadgets that will revolutionize your daily life in 2023. From smart home "
      "devices to the latest wearables, we've got you covered with our comprehensive guide.";
  d.edge_case_format = "Are you interested in the following article? [edge case]";
  d.decision_preamble_text =
      "A user has a particular set of preferences over what articles they would like to read. They have specified "
      "their preferences below:\n"
      "[ Elicitation transcript ]\n"
      "\n"
      "Based on these preferences, would the user be interested in reading the following article? Answer with a "
      "probability between 0 and 1, where 0 means \"definitely not interested\" and 1 means \"definitely "
      "interested\". Only output the probability and nothing else. If uncertain, make your best guess.\n"
      "[ Test case sample ]";
  d.ui_instructions =
      "We are testing a system for understanding people's interest in reading different kinds of online "
      "articles.\n"
      "\n"
      "For example, you might be interested in articles about some topics, but not about others.";
  d.instruction_topic = "your preferences of what kinds of online articles you would like to read";
  d.test_set_noun = "article headline and descriptions";
  d.learned_noun = "what you like and dislike";
  d.labeling_instructions =
      "Please indicate whether you would like to read the following articles: \"yes\" if you would, \"no\" if you "
      "would not.";
  return d;
}

inline DomainSpec moral_reasoning() {
  DomainSpec d;
  d.key = "moral_reasoning";
  d.kind = DomainKind::moral_reasoning;
  d.elicitation_goal_text =
      "learn under what conditions the user would believe it is or is not ethical to steal a loaf of bread";
  d.example_edge_case =
      "Situation: Is it ethical to steal a loaf of bread if you are starving to death and the bread would "
      "otherwise go to waste?";
  d.edge_case_format = "Situation: [edge case]";
  // The stray opening quote before "Based" is part of the published prompt.
  d.decision_preamble_text =
      "A user has a particular ethical code they follow. The following response(s) represent when this user would "
      "believe it is ethical to steal a loaf of bread.\n"
      "[ Elicitation transcript ]\n"
      "\n"
      "\"Based on these response(s), would the user believe it is ethical to steal a loaf of bread in the following "
      "situation? Answer with a probability between 0 and 1, where 0 means \"definitely not\" and 1 means "
      "\"definitely yes\". Only output the probability and nothing else. If uncertain, make your best guess.\n"
      "[ Test case sample ]";
  d.ui_instructions =
      "We are testing a system for understanding people's fuzzy intuitions and preferences.\n"
      "\n"
      "In this experiment, we'll be capturing your moral intuitions about the act of stealing a loaf of bread, and "
      "whether there are certain cases where stealing may be morally permissible.";
  d.instruction_topic = "your belief of when it is moral to steal a loaf of bread";
  d.test_set_noun = "moral situations";
  d.learned_noun = "your moral preferences";
  d.labeling_instructions =
      "Please indicate whether you think the following situations are morally permissible or not: \"yes\" if they "
      "are, \"no\" if they aren't.";
  return d;
}

inline DomainSpec email_validation() {
  DomainSpec d;
  d.key = "email_validation";
  d.kind = DomainKind::email_validation;
  d.elicitation_goal_text =
      "learn what rules a user believes a valid email address format must adhere to (e.g. for developing a regex "
      "format checker)";
  d.example_edge_case = "Should the following email be accepted? username@example.com";
  d.edge_case_format = "Should the following be accepted? [edge case]";
  d.decision_preamble_text =
      "A user has a particular format of emails that they believe to be valid. The following answer(s) represent "
      "this user's preferences of whether these emails adhere to their desired format.\n"
      "[ Elicitation transcript ]\n"
      "\n"
      "Based on the user's preferences, does the following email adhere to the user's desired format? Answer with "
      "a probability between 0 and 1, where 0 means \"definitely not\" and 1 means \"definitely yes\". Only output "
      "the probability and nothing else. If uncertain, make your best guess.\n"
      "[ Test case sample ]";
  d.ui_instructions =
      "We are testing a system for understanding people's fuzzy intuitions and preferences.\n"
      "\n"
      "In this activity, we're going to be looking at different strings of text and you'll be deciding if they "
      "look like they could be an email address or not. For example, most people would agree that "
      "\"username@domain.com\" looks like an email address, while \"n12z5lFEN4\" does not. However, the rules for "
      "what can be an email address can be very unusual, so what we're really interested in is your intuition on "
      "what an email address could look like.\n"
      "\n"
      "Important: We are not asking you to determine the rules for a *good* email address, or a *real (non-spam)* "
      "email address. We are simply asking about your intuition as to why certain strings look like email "
      "addresses and certain strings do not.\n"
      "\n"
      "Tip: in an email such as username@cs.stanford.edu, \"username\" is called the local-part of the email, "
      "while \"cs.stanford.edu\" is the domain. Furthermore, \"cs\" is a subdomain, and \"edu\" is a top-level "
      "domain.";
  d.instruction_topic = "your intuition of what makes email addresses look like email addresses";
  d.test_set_noun = "email addresses";
  d.learned_noun = "your email preferences";
  d.labeling_instructions =
      "Please indicate whether you think the following strings look like reasonably well-formatted email "
      "addresses or not: \"yes\" if they do, \"no\" if they don't.";
  return d;
}

}  // namespace builtin

/// Participant instructions for the elicitation phase of a given policy.
inline std::string elicitation_instructions(const DomainSpec& d, PolicyKind kind) {
  static constexpr std::string_view kAnswerGuidance =
      "Try to answer in a way that accurately and comprehensively conveys your preferences, such that someone "
      "reading your responses can understand and make judgments as close to your own as possible. Feel free to "
      "respond naturally (you can use commas, short phrases, etc), and press [enter] to send your response. Note "
      "that the chatbot technology is imperfect, and you are free to avoid answering any questions that are overly "
      "broad or uncomfortable. When interacting with the chatbot, please avoid asking follow-up questions or "
      "engaging in open-ended dialogue as the chatbot is unable to respond to you.";
  static constexpr std::string_view kChatNote =
      "Note: The chatbot will stop asking questions after 5 minutes, after which you can send your last response "
      "and you will be taken to the final part of the study.";

  std::string out = d.ui_instructions + "\n\n";
  if (kind == PolicyKind::static_prompt) {
    out += "To the best of your ability, please explain all details about " + d.instruction_topic +
           ", such that someone reading your responses can understand and make judgments as close to your own as "
           "possible. Try to be as detailed as possible. For example, if you were writing a regex that accepts only "
           "email-address-like strings, what might that regex look like? What are permissible / non-permissible "
           "symbols and characters, and in what positions?\n\n"
           "Note: You will have up to 5 minutes to articulate your preferences. Please try to submit your response "
           "within that time. After you submit, you will be taken to the final part of the study.";
  } else if (is_gate(kind)) {
    out += "This chatbot will ask you a series of questions about " + d.instruction_topic + ". ";
    out += kAnswerGuidance;
    out += "\n\n";
    out += kChatNote;
  } else {
    out += kAnswerGuidance;
    out += "\n\n";
    out += kChatNote;
  }
  out += "\n\nIn the final part of the study, you will give feedback on a test set of " + d.test_set_noun +
         ", which will enable us to see how well a chatbot reading your responses has learned " + d.learned_noun +
         ".";
  return out;
}

/// Thread-safe registry of domains, seeded with the three built-ins.
class DomainRegistry {
 public:
  DomainRegistry() {
    for (auto d : {builtin::content_recommendation(), builtin::moral_reasoning(), builtin::email_validation()})
      domains_.emplace(d.key, std::move(d));
  }

  void add(DomainSpec d) {
    validate(d);
    std::unique_lock lock(mu_);
    domains_[d.key] = std::move(d);
  }

  void set_test_set(const std::string& key, std::vector<TestItem> items) {
    std::unique_lock lock(mu_);
    auto it = domains_.find(key);
    if (it == domains_.end()) throw Error(Errc::unknown_domain, key);
    DomainSpec updated = it->second;
    updated.test_set = std::move(items);
    validate(updated);
    it->second = std::move(updated);
  }

  bool contains(const std::string& key) const {
    std::shared_lock lock(mu_);
    return domains_.count(key) != 0;
  }

  DomainSpec get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = domains_.find(key);
    if (it == domains_.end()) throw Error(Errc::unknown_domain, "unknown domain \"" + key + "\"");
    return it->second;
  }

  std::vector<std::string> keys() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, _] : domains_) out.push_back(k);
    return out;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, DomainSpec> domains_;
};

/// Creates sessions with ids derived from (seed, creation order).
class SessionFactory {
 public:
  explicit SessionFactory(const DomainRegistry& registry) : registry_(registry) {}

  Session create(const std::string& domain, PolicySpec policy, std::uint64_t seed, Instant created_at) {
    if (!registry_.contains(domain)) throw Error(Errc::unknown_domain, "unknown domain \"" + domain + "\"");
    std::lock_guard lock(mu_);
    return make_session(domain, std::move(policy), seed, ordinal_++, created_at);
  }

 private:
  const DomainRegistry& registry_;
  std::mutex mu_;
  std::uint64_t ordinal_ = 0;
};

inline void to_json(nlohmann::json& j, const DomainSpec& d) {
  j = {{"key", d.key},
       {"kind", to_string(d.kind)},
       {"elicitation_goal_text", d.elicitation_goal_text},
       {"example_edge_case", d.example_edge_case},
       {"edge_case_format", d.edge_case_format},
       {"decision_preamble_text", d.decision_preamble_text},
       {"ui_instructions", d.ui_instructions},
       {"instruction_topic", d.instruction_topic},
       {"test_set_noun", d.test_set_noun},
       {"learned_noun", d.learned_noun},
       {"labeling_instructions", d.labeling_instructions},
       {"test_set", d.test_set}};
}

inline void from_json(const nlohmann::json& j, DomainSpec& d) {
  d.key = j.at("key").get<std::string>();
  d.kind = DomainKind::custom;
  const std::string kind = j.value("kind", std::string("custom"));
  for (auto k : {DomainKind::content_recommendation, DomainKind::moral_reasoning, DomainKind::email_validation})
    if (to_string(k) == kind) d.kind = k;
  d.elicitation_goal_text = j.at("elicitation_goal_text").get<std::string>();
  d.example_edge_case = j.at("example_edge_case").get<std::string>();
  d.edge_case_format = j.at("edge_case_format").get<std::string>();
  d.decision_preamble_text = j.at("decision_preamble_text").get<std::string>();
  d.ui_instructions = j.at("ui_instructions").get<std::string>();
  d.instruction_topic = j.at("instruction_topic").get<std::string>();
  d.test_set_noun = j.at("test_set_noun").get<std::string>();
  d.learned_noun = j.at("learned_noun").get<std::string>();
  d.labeling_instructions = j.at("labeling_instructions").get<std::string>();
  d.test_set = j.value("test_set", std::vector<TestItem>{});
}

}  // namespace gate
