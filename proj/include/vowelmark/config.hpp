#pragma once

// Flat key = value configuration. Lines starting with '#' are comments; an
// unknown key or an unparsable value is an error, so a typo in a key never
// silently leaves a default in place.

#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "vowelmark/error.hpp"
#include "vowelmark/functionals.hpp"
#include "vowelmark/stats.hpp"
#include "vowelmark/synth.hpp"

namespace vowelmark {

struct RunConfig {
  ExtractConfig extract;
  UTestOptions test;
  double threshold = 0.3;       // report features with r above this
  double boxplot_threshold = 0.4;
  FormantTable vowel_formants = default_formant_table();  // synthesized cohorts
};

namespace config {

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out))
    throw Error(Errc::bad_config, key + ": not a number: '" + v + "'");
  return out;
}

inline int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw Error(Errc::bad_config, key + ": not an integer: '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(Errc::bad_config, key + ": expected true or false, got '" + v + "'");
}

inline dsp::Window to_window(const std::string& key, const std::string& v) {
  if (v == "hann") return dsp::Window::hann;
  if (v == "hamming") return dsp::Window::hamming;
  if (v == "gaussian") return dsp::Window::gaussian;
  throw Error(Errc::bad_config, key + ": unknown window '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <class Get>
Setter real_at(Get get) {
  return [get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = to_double(k, v); };
}

template <class Get>
Setter int_at(Get get) {
  return [get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = to_int(k, v); };
}

template <class Get>
Setter window_at(Get get) {
  return [get](RunConfig& c, const std::string& k, const std::string& v) { get(c) = to_window(k, v); };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    // pitch
    t["f0.min_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.min_hz; });
    t["f0.max_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.max_hz; });
    t["f0.voicing_threshold"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.voicing_threshold; });
    t["f0.octave_ratio"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.octave_ratio; });
    t["f0.silence_threshold"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.silence_threshold; });
    t["f0.frame_len_s"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.grid.frame_len_s; });
    t["f0.hop_s"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.grid.hop_s; });
    t["f0.window"] = window_at([](RunConfig& c) -> dsp::Window& { return c.extract.pitch.grid.window; });
    t["voicing.min_frames"] = int_at([](RunConfig& c) -> int& { return c.extract.pitch.min_voiced_frames; });
    t["marks.lowpass_factor"] = real_at([](RunConfig& c) -> double& { return c.extract.pitch.lowpass_factor; });
    // spectral
    t["spectral.frame_len_s"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.grid.frame_len_s; });
    t["spectral.hop_s"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.grid.hop_s; });
    t["spectral.window"] = window_at([](RunConfig& c) -> dsp::Window& { return c.extract.spectral.grid.window; });
    t["mel.bands"] = int_at([](RunConfig& c) -> int& { return c.extract.spectral.mel_bands; });
    t["mel.lo_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.mel_lo_hz; });
    t["mel.hi_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.mel_hi_hz; });
    t["loudness.bands"] = int_at([](RunConfig& c) -> int& { return c.extract.spectral.loudness_bands; });
    t["loudness.lo_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.loudness_lo_hz; });
    t["loudness.hi_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.loudness_hi_hz; });
    t["loudness.exponent"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.loudness_exponent; });
    t["lpc.order"] = int_at([](RunConfig& c) -> int& { return c.extract.spectral.lpc_order; });
    t["lpc.pre_emphasis"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.pre_emphasis; });
    t["formant.min_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.formant_min_hz; });
    t["formant.max_hz"] = real_at([](RunConfig& c) -> double& { return c.extract.spectral.formant_max_hz; });
    t["formant.max_bandwidth_hz"] =
        real_at([](RunConfig& c) -> double& { return c.extract.spectral.formant_max_bandwidth_hz; });
    // functionals
    t["functionals.sd_norm_guard"] = real_at([](RunConfig& c) -> double& { return c.extract.functionals.sd_norm_guard; });
    t["functionals.population_sd"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.extract.functionals.population_sd = to_bool(k, v);
    };
    // statistics and reports
    t["stats.method"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      const auto m = parse_method(v);
      if (!m) throw Error(Errc::bad_config, k + ": expected approx or exact, got '" + v + "'");
      c.test.method = *m;
    };
    t["stats.continuity_correction"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.test.continuity_correction = to_bool(k, v);
    };
    t["report.threshold"] = real_at([](RunConfig& c) -> double& { return c.threshold; });
    t["report.boxplot_threshold"] = real_at([](RunConfig& c) -> double& { return c.boxplot_threshold; });
    // synthesizer formant table, "F1,F2,F3" per vowel
    for (Vowel v : kVowels) {
      t["synth.formants." + std::string(to_string(v))] = [v](RunConfig& c, const std::string& k,
                                                             const std::string& val) {
        const auto parts = detail::split_csv(val);
        if (parts.size() != 3) throw Error(Errc::bad_config, k + ": expected three frequencies");
        for (std::size_t i = 0; i < 3; ++i) c.vowel_formants[std::size_t(v)][i] = to_double(k, detail::trim(parts[i]));
      };
    }
    return t;
  }();
  return table;
}

inline void validate(const RunConfig& c) {
  auto bad = [](const std::string& m) { throw Error(Errc::bad_config, m); };
  const auto& p = c.extract.pitch;
  if (!(p.min_hz > 0.0 && p.min_hz < p.max_hz)) bad("f0.min_hz must be positive and below f0.max_hz");
  if (!(p.voicing_threshold > 0.0 && p.voicing_threshold < 1.0)) bad("f0.voicing_threshold must be in (0, 1)");
  if (!(p.grid.hop_s > 0.0 && p.grid.hop_s <= p.grid.frame_len_s)) bad("f0 grid needs 0 < hop <= frame length");
  if (p.min_voiced_frames < 1) bad("voicing.min_frames must be at least 1");
  const auto& s = c.extract.spectral;
  if (!(s.grid.hop_s > 0.0 && s.grid.hop_s <= s.grid.frame_len_s)) bad("spectral grid needs 0 < hop <= frame length");
  if (s.mel_bands < 4) bad("mel.bands must be at least 4");
  if (s.loudness_bands < 1) bad("loudness.bands must be at least 1");
  if (s.lpc_order < 6) bad("lpc.order must be at least 6");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) bad("report.threshold must be in [0, 1]");
}

}  // namespace config

inline void apply_config_line(RunConfig& c, std::string_view raw, const std::string& where) {
  const std::string line = detail::trim(raw);
  if (line.empty() || line[0] == '#') return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw Error(Errc::bad_config, where + ": expected key = value");
  const std::string key = detail::trim(std::string_view(line).substr(0, eq));
  const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
  const auto& table = config::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw Error(Errc::bad_config, where + ": unknown key '" + key + "'");
  it->second(c, key, value);
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
  RunConfig c;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) apply_config_line(c, line, source + ":" + std::to_string(n));
  config::validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open config " + path.string());
  return parse_config(in, path.string());
}

/// Defaults, overridden by the file named in VOWELMARK_CONFIG when set.
inline RunConfig config_from_environment() {
  const char* path = std::getenv("VOWELMARK_CONFIG");
  if (!path || !*path) return RunConfig{};
  return load_config(path);
}

}  // namespace vowelmark
