#pragma once

// Chat-completion gateway: one interface over live and mock backends, with
// client-side latency measurement, bounded retries, an in-flight limit, and
// probability-of-yes estimation.

#include <chrono>
#include <condition_variable>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"

namespace gate {

enum class BackendKind { http_chat, mock_scripted, mock_seeded };

constexpr std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::http_chat: return "http_chat";
    case BackendKind::mock_scripted: return "mock_scripted";
    case BackendKind::mock_seeded: return "mock_seeded";
  }
  return "?";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  for (auto k : {BackendKind::http_chat, BackendKind::mock_scripted, BackendKind::mock_seeded})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown backend \"" + std::string(s) + "\"");
}

struct LMProfile {
  BackendKind backend = BackendKind::mock_seeded;
  std::string model_id = "gpt-4-0613";
  double temperature = 0.0;
  int max_retries = 3;
  Duration timeout = std::chrono::seconds(60);
  // Samples drawn at temperature 1 to estimate p(yes) when the backend has no
  // token likelihoods; 0 means a single temperature-0 call mapped to {0, 1}.
  int probability_samples = 10;
  int max_in_flight = 4;
  std::uint64_t seed = 0;
  std::string base_url;
  std::string api_key;

  /// Fills base_url and api_key from GATE_LM_BASE_URL / GATE_LM_API_KEY.
  static LMProfile from_env() { return from_env(LMProfile()); }
  static LMProfile from_env(LMProfile p) {
    if (const char* url = std::getenv("GATE_LM_BASE_URL")) p.base_url = url;
    if (const char* key = std::getenv("GATE_LM_API_KEY")) p.api_key = key;
    return p;
  }
};

inline void validate(const LMProfile& p) {
  if (p.max_retries < 0) throw Error(Errc::invalid_argument, "max_retries must be >= 0");
  if (p.temperature < 0.0) throw Error(Errc::invalid_argument, "temperature must be >= 0");
  if (p.max_in_flight < 1) throw Error(Errc::invalid_argument, "max_in_flight must be >= 1");
  if (p.probability_samples < 0) throw Error(Errc::invalid_argument, "probability_samples must be >= 0");
  if (p.timeout <= Duration::zero()) throw Error(Errc::invalid_argument, "timeout must be positive");
}

inline void from_json(const nlohmann::json& j, LMProfile& p) {
  p = LMProfile{};
  if (j.contains("backend")) p.backend = parse_backend_kind(j["backend"].get<std::string>());
  p.model_id = j.value("model_id", p.model_id);
  p.temperature = j.value("temperature", p.temperature);
  p.max_retries = j.value("max_retries", p.max_retries);
  p.timeout = Duration(j.value("timeout_ms", p.timeout.count()));
  p.probability_samples = j.value("probability_samples", p.probability_samples);
  p.max_in_flight = j.value("max_in_flight", p.max_in_flight);
  p.seed = j.value("seed", p.seed);
  p.base_url = j.value("base_url", p.base_url);
}

enum class Role { system, user, assistant };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  // Overrides the profile temperature when set (probability sampling).
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;

  static ChatRequest user(std::string content) { return {{{Role::user, std::move(content)}}, std::nullopt, std::nullopt}; }
};

struct ChatResponse {
  std::string content;
  Duration latency{0};
  nlohmann::json metadata = nlohmann::json::object();
};

/// What a backend hands back for one attempt. Mocks report their own latency
/// (zero) so transcripts replay byte-for-byte.
struct BackendReply {
  std::string content;
  std::optional<Duration> reported_latency;
  nlohmann::json metadata = nlohmann::json::object();
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// One attempt. Throws Error(transport | timeout) for retryable failures.
  virtual BackendReply send(const ChatRequest& request, const LMProfile& profile) = 0;

  /// Direct p(yes) estimate when the backend exposes likelihoods.
  virtual std::optional<double> token_yes_probability(const std::string& /*prompt*/) { return std::nullopt; }

  virtual bool supports_sampling() const { return true; }
  virtual BackendKind kind() const = 0;
};

/// Replays a fixed list of responses in call order and records every request.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> script) : script_(std::move(script)) {}

  BackendReply send(const ChatRequest& request, const LMProfile&) override {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (cursor_ >= script_.size())
      throw Error(Errc::script_exhausted, "scripted backend ran out after " + std::to_string(script_.size()) + " responses");
    return {script_[cursor_++], Duration{0}, {{"backend", "mock_scripted"}, {"cursor", cursor_ - 1}}};
  }

  BackendKind kind() const override { return BackendKind::mock_scripted; }

  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t consumed() const {
    std::lock_guard lock(mu_);
    return cursor_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> script_;
  std::size_t cursor_ = 0;
  std::vector<ChatRequest> requests_;
};

/// Pure function of (seed, request bytes). Produces a probability numeral
/// for decision prompts, a formatted edge case for edge-case prompts, yes/no
/// for yes/no prompts, and an opaque question otherwise.
class SeededBackend final : public ChatBackend {
 public:
  explicit SeededBackend(std::uint64_t seed, std::optional<double> fixed_probability = std::nullopt)
      : seed_(seed), fixed_probability_(fixed_probability) {}

  /// Pins p(yes) for prompts containing `question`.
  void set_probability(std::string question, double p) { table_[std::move(question)] = p; }

  BackendReply send(const ChatRequest& request, const LMProfile&) override {
    const std::uint64_t h = hash(request);
    const std::string& prompt = request.messages.back().content;
    std::string out;
    if (prompt.find("Answer with a probability between 0 and 1") != std::string::npos) {
      out = format_probability(static_cast<double>(h % 101) / 100.0);
    } else if (auto fmt = requested_format(prompt)) {
      out = detail::fill_slots(*fmt, {{"[edge case]", "mock-" + detail::to_hex(h, 8)}});
    } else if (prompt.find("Answer with yes or no") != std::string::npos ||
               prompt.find("Answer the question in the shortest way") != std::string::npos) {
      out = (h & 1) ? "yes" : "no";
    } else {
      out = "Mock question " + detail::to_hex(h, 8) + "?";
    }
    return {out, Duration{0}, {{"backend", "mock_seeded"}}};
  }

  std::optional<double> token_yes_probability(const std::string& prompt) override {
    for (const auto& [question, p] : table_)
      if (prompt.find(question) != std::string::npos) return p;
    if (fixed_probability_) return fixed_probability_;
    return static_cast<double>(detail::mix(seed_, detail::fnv1a(prompt)) % 1001) / 1000.0;
  }

  BackendKind kind() const override { return BackendKind::mock_seeded; }

  static std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", p);
    return buf;
  }

 private:
  std::uint64_t hash(const ChatRequest& request) const {
    std::uint64_t h = detail::fnv1a("", seed_ ^ 0xcbf29ce484222325ULL);
    for (const auto& m : request.messages) {
      h = detail::fnv1a(to_string(m.role), h);
      h = detail::fnv1a(m.content, h);
    }
    if (request.seed) h = detail::mix(h, *request.seed);
    return detail::splitmix64(h);
  }

  static std::optional<std::string> requested_format(const std::string& prompt) {
    static constexpr std::string_view marker = "in the following format, and nothing else: \"";
    const auto at = prompt.rfind(marker);
    if (at == std::string::npos) return std::nullopt;
    const auto start = at + marker.size();
    const auto end = prompt.rfind('"');
    if (end == std::string::npos || end <= start) return std::nullopt;
    return prompt.substr(start, end - start);
  }

  std::uint64_t seed_;
  std::optional<double> fixed_probability_;
  std::map<std::string, double> table_;
};

/// Blocks while `limit` calls are already in flight.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : available_(limit) {}

  class Permit {
   public:
    explicit Permit(InFlightLimiter& l) : l_(&l) { l_->acquire(); }
    ~Permit() { l_->release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    InFlightLimiter* l_;
  };

 private:
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

inline std::string yes_probability_prompt(const std::string& question, const std::string& context) {
  std::string prompt;
  if (!context.empty()) prompt = context + "\n";
  prompt += question + "\nAnswer with yes or no only.";
  return prompt;
}

class LMGateway {
 public:
  using Sleeper = std::function<void(Duration)>;

  LMGateway(LMProfile profile, std::shared_ptr<ChatBackend> backend, Sleeper sleeper = default_sleeper())
      : profile_(std::move(profile)),
        backend_(std::move(backend)),
        sleeper_(std::move(sleeper)),
        limiter_(std::make_unique<InFlightLimiter>(profile_.max_in_flight)) {
    validate(profile_);
    if (!backend_) throw Error(Errc::invalid_argument, "gateway needs a backend");
  }

  static Sleeper default_sleeper() {
    return [](Duration d) { std::this_thread::sleep_for(d); };
  }

  const LMProfile& profile() const { return profile_; }
  ChatBackend& backend() { return *backend_; }

  /// Retries transport failures and timeouts up to max_retries times, waiting
  /// 1 s, 2 s, 4 s, ... between attempts.
  ChatResponse complete(const ChatRequest& request) {
    if (request.messages.empty()) throw Error(Errc::invalid_argument, "chat request has no messages");
    InFlightLimiter::Permit permit(*limiter_);
    const auto start = std::chrono::steady_clock::now();
    Duration backoff = std::chrono::seconds(1);
    for (int attempt = 0;; ++attempt) {
      try {
        BackendReply reply = backend_->send(request, profile_);
        if (detail::trim_view(reply.content).empty()) throw Error(Errc::empty_response, "backend returned no text");
        ChatResponse out;
        out.content = std::move(reply.content);
        out.latency = reply.reported_latency
                          ? *reply.reported_latency
                          : std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start);
        out.metadata = std::move(reply.metadata);
        out.metadata["attempts"] = attempt + 1;
        return out;
      } catch (const Error& e) {
        const bool retryable = e.code() == Errc::transport || e.code() == Errc::timeout;
        if (!retryable || attempt >= profile_.max_retries) throw;
        sleeper_(backoff);
        backoff *= 2;
      }
    }
  }

  ChatResponse complete(const std::string& user_prompt) { return complete(ChatRequest::user(user_prompt)); }

  /// p(answer is "yes"). Uses backend likelihoods when present, otherwise the
  /// frequency of "yes" over probability_samples draws at temperature 1, or a
  /// single temperature-0 call when probability_samples is 0.
  double yes_probability(const std::string& question, const std::string& context) {
    const std::string prompt = yes_probability_prompt(question, context);
    if (auto p = backend_->token_yes_probability(prompt)) {
      if (!std::isfinite(*p)) throw Error(Errc::degenerate, "backend returned a non-finite probability");
      return std::clamp(*p, 0.0, 1.0);
    }
    if (!backend_->supports_sampling())
      throw Error(Errc::backend_incapable, "backend offers neither likelihoods nor sampling");
    if (profile_.probability_samples == 0) {
      ChatRequest r = ChatRequest::user(prompt);
      r.temperature = 0.0;
      return is_yes(complete(r).content) ? 1.0 : 0.0;
    }
    int yes = 0;
    for (int i = 0; i < profile_.probability_samples; ++i) {
      ChatRequest r = ChatRequest::user(prompt);
      r.temperature = 1.0;
      r.seed = detail::mix(profile_.seed, static_cast<std::uint64_t>(i));
      if (is_yes(complete(r).content)) ++yes;
    }
    return static_cast<double>(yes) / static_cast<double>(profile_.probability_samples);
  }

  static bool is_yes(std::string_view text) { return detail::starts_with_icase(detail::trim_view(text), "yes"); }

 private:
  LMProfile profile_;
  std::shared_ptr<ChatBackend> backend_;
  Sleeper sleeper_;
  std::unique_ptr<InFlightLimiter> limiter_;
};

}  // namespace gate
