#pragma once

// Usability questionnaire administered after elicitation and after labeling.

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"

namespace gate {

enum class SurveyScale { likert_1_7, free_text };
enum class SurveyPhase { post_elicitation, post_judgment };

struct SurveyInstrument {
  std::string question_id;
  std::string text;
  SurveyScale scale = SurveyScale::likert_1_7;
  SurveyPhase phase = SurveyPhase::post_elicitation;
};

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 7;

/// Questions q1..q7. The user-written prompt baseline is asked about writing
/// its answer rather than about the chatbot in q1.
inline std::vector<SurveyInstrument> survey_instrument(PolicyKind kind = PolicyKind::gate_open) {
  using enum SurveyScale;
  using enum SurveyPhase;
  return {
      {"q1",
       kind == PolicyKind::static_prompt ? "How mentally demanding was writing your answer?"
                                         : "How mentally demanding was interacting with the chatbot?",
       likert_1_7, post_elicitation},
      {"q2",
       "To what extent did the chatbot raise issues or aspects about your preferences that you hadn't previously "
       "considered?",
       likert_1_7, post_elicitation},
      {"q3", "How comprehensively do you feel the chatbot's questions characterized your preferences about the task?",
       likert_1_7, post_elicitation},
      {"q4",
       "After seeing the examples in the second part of the task, how well do you feel the answer you wrote (in the "
       "first part of the task) covered the important issues or aspects of these examples?",
       likert_1_7, post_judgment},
      {"q5",
       "When performing the second part of the task, to what extent did you refer back to your conversation history "
       "from the first part of the task?",
       likert_1_7, post_judgment},
      {"q6",
       "How much experience have you had (if any) with interacting with language models (e.g. ChatGPT, GPT4, etc.)?",
       likert_1_7, post_judgment},
      {"q7", "Do you have any other feedback about the task?", free_text, post_judgment},
  };
}

inline const SurveyInstrument* find_question(const std::vector<SurveyInstrument>& instrument, const std::string& id) {
  auto it = std::find_if(instrument.begin(), instrument.end(), [&](const auto& q) { return q.question_id == id; });
  return it == instrument.end() ? nullptr : &*it;
}

/// True when every rated question has an answer; free text is optional.
inline bool survey_complete(const std::vector<SurveyInstrument>& instrument, const std::vector<SurveyAnswer>& answers) {
  return std::all_of(instrument.begin(), instrument.end(), [&](const auto& q) {
    return q.scale == SurveyScale::free_text ||
           std::any_of(answers.begin(), answers.end(), [&](const auto& a) { return a.question_id == q.question_id; });
  });
}

/// Mean rating per (method, question) over completed sessions.
inline std::map<std::string, std::map<std::string, double>> mean_ratings(std::span<const Session> sessions) {
  std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
  for (const auto& s : sessions)
    for (const auto& a : s.survey)
      if (const int* v = std::get_if<int>(&a.value)) {
        auto& cell = acc[std::string(to_string(s.policy.kind))][a.question_id];
        cell.first += *v;
        ++cell.second;
      }
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [method, qs] : acc)
    for (const auto& [q, cell] : qs) out[method][q] = cell.first / cell.second;
  return out;
}

/// Checks each answer against its question's scale.
inline void validate_survey_answers(const std::vector<SurveyInstrument>& instrument,
                                    const std::vector<SurveyAnswer>& answers) {
  for (const auto& a : answers) {
    const auto* q = find_question(instrument, a.question_id);
    if (!q) throw Error(Errc::invalid_argument, "unknown survey question \"" + a.question_id + "\"");
    if (q->scale == SurveyScale::likert_1_7) {
      const int* rating = std::get_if<int>(&a.value);
      if (!rating || *rating < kLikertMin || *rating > kLikertMax)
        throw Error(Errc::invalid_argument, "question " + a.question_id + " takes a rating from 1 to 7");
    } else if (!std::holds_alternative<std::string>(a.value)) {
      throw Error(Errc::invalid_argument, "question " + a.question_id + " takes free text");
    }
  }
}

/// Records survey answers. Post-elicitation questions may be answered while
/// judging; the session completes once it is surveying and every rated
/// question has an answer.
inline Session record_survey(Session s, const std::vector<SurveyAnswer>& answers) {
  if (s.state != SessionState::judging && s.state != SessionState::surveying)
    throw Error(Errc::state_violation, "session is not taking survey answers");
  const auto instrument = survey_instrument(s.policy.kind);
  validate_survey_answers(instrument, answers);
  for (const auto& a : answers) {
    const auto* q = find_question(instrument, a.question_id);
    if (s.state == SessionState::judging && q->phase != SurveyPhase::post_elicitation)
      throw Error(Errc::state_violation, "question " + a.question_id + " comes after labeling");
    const bool dup = std::any_of(s.survey.begin(), s.survey.end(),
                                 [&](const auto& x) { return x.question_id == a.question_id; });
    const bool dup_in_batch = std::count_if(answers.begin(), answers.end(),
                                            [&](const auto& x) { return x.question_id == a.question_id; }) > 1;
    if (dup || dup_in_batch) throw Error(Errc::invalid_argument, "question " + a.question_id + " answered twice");
  }
  s.survey.insert(s.survey.end(), answers.begin(), answers.end());
  if (s.state == SessionState::surveying && survey_complete(instrument, s.survey)) s = complete_session(std::move(s));
  return s;
}

inline void to_json(nlohmann::json& j, const SurveyInstrument& q) {
  j = {{"question_id", q.question_id},
       {"text", q.text},
       {"scale", q.scale == SurveyScale::likert_1_7 ? "likert_1_7" : "free_text"},
       {"phase", q.phase == SurveyPhase::post_elicitation ? "post_elicitation" : "post_judgment"}};
}

}  // namespace gate
