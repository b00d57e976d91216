#pragma once

#include <stdexcept>
#include <string>

namespace smartlab {

enum class Errc {
  past_event,
  singular_network,
  invalid_network,
  non_positive_dt,
  negative_setpoint,
  invalid_scale,
  invalid_device,
  duplicate_bid_id,
  unknown_bus,
  invalid_bid,
  invalid_ladder,
  empty_device_list,
  invalid_prices,
  empty_log,
  ambiguous_selectors,
  invalid_profile,
  missing_deadline,
  timeout,
  parse_error,
  io_error,
  dangling_reference,
  unknown_preset,
  unknown_override_path,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::past_event: return "PastEvent";
    case Errc::singular_network: return "SingularNetwork";
    case Errc::invalid_network: return "InvalidNetwork";
    case Errc::non_positive_dt: return "NonPositiveDt";
    case Errc::negative_setpoint: return "NegativeSetpoint";
    case Errc::invalid_scale: return "InvalidScale";
    case Errc::invalid_device: return "InvalidDevice";
    case Errc::duplicate_bid_id: return "DuplicateBidId";
    case Errc::unknown_bus: return "UnknownBus";
    case Errc::invalid_bid: return "InvalidBid";
    case Errc::invalid_ladder: return "InvalidLadder";
    case Errc::empty_device_list: return "EmptyDeviceList";
    case Errc::invalid_prices: return "InvalidPrices";
    case Errc::empty_log: return "EmptyLog";
    case Errc::ambiguous_selectors: return "AmbiguousSelectors";
    case Errc::invalid_profile: return "InvalidProfile";
    case Errc::missing_deadline: return "MissingDeadline";
    case Errc::timeout: return "Timeout";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
    case Errc::dangling_reference: return "DanglingReference";
    case Errc::unknown_preset: return "UnknownPreset";
    case Errc::unknown_override_path: return "UnknownOverridePath";
  }
  return "Unknown";
}

/// Every module reports failures through this exception; `code()` names the
/// condition so callers and tests can branch on it without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code), detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

/// Parse failure carrying the 1-based line number of the offending input line
/// (0 when the failure is not tied to a line).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(Errc::parse_error, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace smartlab
