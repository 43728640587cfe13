#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gate {

enum class Errc {
  invalid_argument,
  unknown_domain,
  invalid_policy,
  state_violation,
  out_of_order,
  already_answered,
  not_found,
  transport,
  timeout,
  empty_response,
  no_numeral,
  parse_failure,
  pool_exhausted,
  dimension_mismatch,
  incompatible,
  unanswerable,
  single_class,
  zero_variance,
  insufficient_data,
  corrupt_record,
  version_mismatch,
  backend_incapable,
  degenerate,
  script_exhausted,
  io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::unknown_domain: return "unknown_domain";
    case Errc::invalid_policy: return "invalid_policy";
    case Errc::state_violation: return "state_violation";
    case Errc::out_of_order: return "out_of_order";
    case Errc::already_answered: return "already_answered";
    case Errc::not_found: return "not_found";
    case Errc::transport: return "transport";
    case Errc::timeout: return "timeout";
    case Errc::empty_response: return "empty_response";
    case Errc::no_numeral: return "no_numeral";
    case Errc::parse_failure: return "parse_failure";
    case Errc::pool_exhausted: return "pool_exhausted";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::incompatible: return "incompatible";
    case Errc::unanswerable: return "unanswerable";
    case Errc::single_class: return "single_class";
    case Errc::zero_variance: return "zero_variance";
    case Errc::insufficient_data: return "insufficient_data";
    case Errc::corrupt_record: return "corrupt_record";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::backend_incapable: return "backend_incapable";
    case Errc::degenerate: return "degenerate";
    case Errc::script_exhausted: return "script_exhausted";
    case Errc::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the HTTP layer in particular) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gate
