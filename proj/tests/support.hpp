#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "gate/core.hpp"
#include "gate/lm.hpp"
#include "gate/pool.hpp"

namespace gate::testing {

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(GATE_FIXTURE_DIR) / rel; }

inline Instant at_s(double seconds) { return instant_from_ms(static_cast<std::int64_t>(seconds * 1000)); }
inline Duration secs(std::int64_t s) { return std::chrono::seconds(s); }

/// Manually advanced clock for the service.
struct ManualClock {
  std::shared_ptr<Instant> now = std::make_shared<Instant>(instant_from_ms(1'000'000));
  Instant operator()() const { return *now; }
  void advance(Duration d) const { *now += d; }
};

/// Embeds a decimal number as a 1-D vector.
class LineEmbedder final : public pool::Embedder {
 public:
  pool::Vector embed(std::string_view text) override { return {std::stod(std::string(text))}; }
};

inline LMGateway seeded_gateway(std::uint64_t seed = 1) {
  LMProfile p;
  p.seed = seed;
  return LMGateway(p, std::make_shared<SeededBackend>(seed), [](Duration) {});
}

inline LMGateway scripted_gateway(std::vector<std::string> script, std::shared_ptr<ScriptedBackend>* out = nullptr) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(script));
  if (out) *out = backend;
  return LMGateway(LMProfile{}, backend, [](Duration) {});
}

/// Builds a session with turns issued at `issued[i]` seconds, lm latency
/// `latency[i]`, answered at `answered[i]` (negative: left pending).
inline Session timed_session(const std::vector<double>& issued, const std::vector<double>& latency,
                             const std::vector<double>& answered) {
  PolicySpec p;
  p.kind = PolicyKind::gate_open;
  Session s = make_session("email_validation", p, 1, 0, at_s(0));
  for (std::size_t i = 0; i < issued.size(); ++i) {
    s = issue_query(std::move(s), "q" + std::to_string(i), QueryKind::open_question, std::nullopt, at_s(issued[i]),
                    std::chrono::milliseconds(static_cast<std::int64_t>(latency[i] * 1000)));
    if (answered[i] >= 0) s = append_answer(std::move(s), static_cast<int>(i), "a" + std::to_string(i), at_s(answered[i]));
  }
  return s;
}

}  // namespace gate::testing
