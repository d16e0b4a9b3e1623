#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vowelmark {

/// Failure categories raised by the library. Each maps onto one of the
/// documented error names so callers (and the CLI exit-code table) can
/// branch on them without parsing messages.
enum class Errc {
  malformed_header,
  unsupported_encoding,
  file_unreadable,
  range_out_of_bounds,
  segment_too_short,
  bad_manifest,
  signal_too_short,
  degenerate_abscissa,
  no_voiced_content,
  too_few_periods,
  harmonic_out_of_range,
  registry_mismatch,
  empty_group,
  invalid_spec,
  bad_config,
  formant_dropout,
  empty_band,
  exact_with_ties,
  empty_scope,
};

constexpr std::string_view errc_name(Errc e) noexcept {
  switch (e) {
    case Errc::malformed_header: return "MalformedHeader";
    case Errc::unsupported_encoding: return "UnsupportedEncoding";
    case Errc::file_unreadable: return "FileUnreadable";
    case Errc::range_out_of_bounds: return "RangeOutOfBounds";
    case Errc::segment_too_short: return "SegmentTooShort";
    case Errc::bad_manifest: return "BadManifest";
    case Errc::signal_too_short: return "SignalTooShort";
    case Errc::degenerate_abscissa: return "DegenerateAbscissa";
    case Errc::no_voiced_content: return "NoVoicedContent";
    case Errc::too_few_periods: return "TooFewPeriods";
    case Errc::harmonic_out_of_range: return "HarmonicOutOfRange";
    case Errc::registry_mismatch: return "RegistryMismatch";
    case Errc::empty_group: return "EmptyGroup";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::bad_config: return "BadConfig";
    case Errc::formant_dropout: return "FormantDropout";
    case Errc::empty_band: return "EmptyBand";
    case Errc::exact_with_ties: return "ExactWithTies";
    case Errc::empty_scope: return "EmptyScope";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vowelmark
