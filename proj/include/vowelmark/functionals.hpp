#pragma once

// Per-recording aggregation: low-level tracks -> the 88 named descriptors.
// The registry file (name, lld, functional, scope) drives the assembly, so
// names and order live in exactly one place.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vowelmark/audio.hpp"
#include "vowelmark/error.hpp"
#include "vowelmark/pitch.hpp"
#include "vowelmark/spectral.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

inline constexpr std::size_t kFeatureCount = 88;

enum class Scope { all_frames, voiced_only, unvoiced_only, global };

constexpr std::string_view to_string(Scope s) noexcept {
  switch (s) {
    case Scope::all_frames: return "all_frames";
    case Scope::voiced_only: return "voiced_only";
    case Scope::unvoiced_only: return "unvoiced_only";
    case Scope::global: return "global";
  }
  return "?";
}

inline std::optional<Scope> parse_scope(std::string_view s) {
  for (Scope v : {Scope::all_frames, Scope::voiced_only, Scope::unvoiced_only, Scope::global})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

struct RegistryEntry {
  std::string name;
  std::string lld;
  std::string functional;
  Scope scope = Scope::all_frames;
};

class FeatureRegistry {
 public:
  FeatureRegistry() = default;

  /// Lines starting with '#' are comments; "# ... version N" sets version().
  static FeatureRegistry parse(std::istream& in) {
    FeatureRegistry reg;
    std::string line;
    bool header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = detail::trim(line);
      if (t.empty()) continue;
      if (t.front() == '#') {
        if (const auto pos = t.find("version"); pos != std::string::npos) reg.version_ = detail::trim(t.substr(pos + 7));
        continue;
      }
      const auto f = detail::split_csv(t);
      if (!header) {
        if (f != std::vector<std::string>{"name", "lld", "functional", "scope"})
          throw Error(Errc::registry_mismatch, "registry header must be name,lld,functional,scope");
        header = true;
        continue;
      }
      if (f.size() != 4) throw Error(Errc::registry_mismatch, "registry line " + std::to_string(lineno) + ": expected 4 fields");
      const auto scope = parse_scope(f[3]);
      if (!scope) throw Error(Errc::registry_mismatch, "registry line " + std::to_string(lineno) + ": unknown scope " + f[3]);
      if (reg.index_.contains(f[0])) throw Error(Errc::registry_mismatch, "duplicate registry name: " + f[0]);
      reg.index_.emplace(f[0], reg.entries_.size());
      reg.entries_.push_back({f[0], f[1], f[2], *scope});
    }
    if (reg.entries_.size() != kFeatureCount)
      throw Error(Errc::registry_mismatch,
                  "registry has " + std::to_string(reg.entries_.size()) + " entries, expected " + std::to_string(kFeatureCount));
    return reg;
  }

  static FeatureRegistry load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::file_unreadable, "cannot open registry " + path.string());
    return parse(in);
  }

  const std::vector<RegistryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::string& version() const { return version_; }
  const RegistryEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

 private:
  std::vector<RegistryEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string version_;
};

inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("VOWELMARK_DATA_DIR")) return env;
#ifdef VOWELMARK_DATA_DIR
  return VOWELMARK_DATA_DIR;
#else
  return "data";
#endif
}

/// The shipped registry, loaded once.
inline const FeatureRegistry& default_registry() {
  static const FeatureRegistry reg = FeatureRegistry::load(data_dir() / "feature_registry.csv");
  return reg;
}

/// Maps a feature label in LaTeX table notation onto registry spelling:
/// \textsubscript{x} becomes _x, en-dashes (--) become '-', whitespace is
/// collapsed.
inline std::string normalize_feature_name(std::string_view label) {
  std::string s(label);
  constexpr std::string_view sub = "\\textsubscript{";
  for (std::size_t pos; (pos = s.find(sub)) != std::string::npos;) {
    const auto close = s.find('}', pos);
    if (close == std::string::npos) break;
    s = s.substr(0, pos) + "_" + s.substr(pos + sub.size(), close - pos - sub.size()) + s.substr(close + 1);
  }
  for (std::size_t pos; (pos = s.find("--")) != std::string::npos;) s.replace(pos, 2, "-");
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Functionals

struct FunctionalOptions {
  double sd_norm_guard = 1e-8;  // |mean| below this: report SD instead of SD/|mean|
  bool population_sd = true;
};

inline double func_mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double func_sd(std::span<const double> v, bool population = true) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  // A constant contour has no spread; the rounded mean would leave ~1e-16.
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return 0.0;
  const double m = func_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(population ? n : n - 1));
}

/// SD / |mean|. When |mean| is below the guard the plain SD is returned and
/// *guarded is set.
inline double func_sd_norm(std::span<const double> v, const FunctionalOptions& opt = {}, bool* guarded = nullptr) {
  if (guarded) *guarded = false;
  if (v.size() < 2) return 0.0;
  const double m = func_mean(v);
  const double sd = func_sd(v, opt.population_sd);
  if (std::abs(m) < opt.sd_norm_guard) {
    if (guarded) *guarded = true;
    return sd;
  }
  return sd / std::abs(m);
}

/// Linear interpolation at rank (n-1)q on the sorted values.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double rank = (double(v.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - double(lo)) * (v[hi] - v[lo]);
}

struct Percentiles {
  double p20 = 0.0, p50 = 0.0, p80 = 0.0, range_20_80 = 0.0;
};

inline Percentiles func_percentiles(std::span<const double> v) {
  if (v.empty()) return {};
  const std::vector<double> c(v.begin(), v.end());
  Percentiles p{percentile(c, 0.2), percentile(c, 0.5), percentile(c, 0.8), 0.0};
  p.range_20_80 = p.p80 - p.p20;
  return p;
}

struct SlopeStats {
  double mean_rising = 0.0, sd_rising = 0.0;
  double mean_falling = 0.0, sd_falling = 0.0;
};

/// Each contour is cut at its local extrema into maximal strictly rising or
/// strictly falling runs; a run's slope is (end - start) / duration. Flat
/// steps end a run and belong to none.
inline SlopeStats func_slopes(std::span<const std::vector<double>> contours, double hop_s) {
  std::vector<double> up, down;
  for (const auto& c : contours) {
    std::size_t i = 0;
    while (i + 1 < c.size()) {
      const double d = c[i + 1] - c[i];
      if (d == 0.0) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j + 1 < c.size() && (c[j + 1] - c[j]) * d > 0.0) ++j;
      const double slope = (c[j] - c[i]) / (double(j - i) * hop_s);
      (d > 0.0 ? up : down).push_back(slope);
      i = j;
    }
  }
  return {func_mean(up), func_sd(up), func_mean(down), func_sd(down)};
}

inline SlopeStats func_slopes(std::span<const double> contour, double hop_s) {
  const std::vector<std::vector<double>> one{std::vector<double>(contour.begin(), contour.end())};
  return func_slopes(one, hop_s);
}

/// Local maxima that rise at least 25% of the track range above the lowest
/// point on each side before a higher point is reached, per second.
inline double func_peaks_per_second(std::span<const double> v, double duration_s) {
  if (v.size() < 3 || duration_s <= 0.0) return 0.0;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double need = 0.25 * (*mx - *mn);
  if (!(need > 0.0)) return 0.0;
  std::size_t count = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) continue;
    std::size_t plateau_end = i;
    while (plateau_end + 1 < v.size() && v[plateau_end + 1] == v[i]) ++plateau_end;
    if (plateau_end + 1 >= v.size() || !(v[plateau_end + 1] < v[i])) continue;
    double left = v[i], right = v[i];
    for (std::size_t j = i; j-- > 0 && v[j] <= v[i];) left = std::min(left, v[j]);
    for (std::size_t j = plateau_end + 1; j < v.size() && v[j] <= v[i]; ++j) right = std::min(right, v[j]);
    if (v[i] - left >= need && v[i] - right >= need) ++count;
    i = plateau_end;
  }
  return double(count) / duration_s;
}

// ---------------------------------------------------------------------------
// Per-recording analysis

struct ExtractConfig {
  PitchConfig pitch;
  SpectralConfig spectral;
  FunctionalOptions functionals;
};

inline constexpr double kLevelFloorDb = -100.0;

/// All low-level tracks of one recording.
struct RecordingAnalysis {
  double duration_s = 0.0;
  F0Track f0;
  SpectralTracks spectral;
  std::vector<bool> spectral_voiced;
  VoiceQualityTracks voice_quality;
  VoicedSegmentStats voiced_segments;
  UnvoicedSegmentStats unvoiced_segments;
  std::optional<PerturbationMeasures> perturbation;
  std::vector<std::size_t> perturbation_frames;  // pitch frames with a per-frame value
  std::vector<double> jitter_frames, shimmer_frames;
  HnrTrack hnr;
  std::vector<std::string> diagnostics;
};

namespace functionals {

/// Local jitter and shimmer of the cycles whose marks both fall inside each
/// voiced pitch frame (at least two consecutive periods of one segment).
inline void frame_perturbation(RecordingAnalysis& a, std::span<const PitchMark> marks) {
  const auto& t = a.f0;
  std::size_t first = 0;
  for (std::size_t f = 0; f < t.size(); ++f) {
    if (!t.voiced[f]) continue;
    const double lo = double(f) * t.hop_s, hi = lo + t.frame_len_s;
    while (first < marks.size() && marks[first].time_s < lo) ++first;
    double dj = 0.0, ds = 0.0, sp = 0.0, sa = 0.0;
    std::size_t nd = 0, np = 0;
    for (std::size_t k = first; k + 1 < marks.size() && marks[k + 1].time_s <= hi; ++k) {
      if (marks[k].segment != marks[k + 1].segment) continue;
      const double period = marks[k + 1].time_s - marks[k].time_s;
      sp += period;
      sa += marks[k].amplitude;
      ++np;
      if (k > first && marks[k - 1].segment == marks[k].segment) {
        dj += std::abs(period - (marks[k].time_s - marks[k - 1].time_s));
        ds += std::abs(marks[k].amplitude - marks[k - 1].amplitude);
        ++nd;
      }
    }
    if (nd == 0 || sp <= 0.0 || sa <= 0.0) continue;
    a.perturbation_frames.push_back(f);
    a.jitter_frames.push_back(dj / double(nd) / (sp / double(np)));
    a.shimmer_frames.push_back(ds / double(nd) / (sa / double(np)));
  }
}

}  // namespace functionals

inline RecordingAnalysis analyze(const AudioBuffer& buf, const ExtractConfig& cfg = {}) {
  RecordingAnalysis a;
  a.duration_s = buf.duration();
  a.f0 = estimate_f0(buf, cfg.pitch);
  a.spectral = spectral_tracks(buf, cfg.spectral);
  a.spectral_voiced = spectral_voicing(a.spectral.size(), a.f0, cfg.spectral, buf.sample_rate);
  a.voice_quality = voice_quality_tracks(buf, a.f0, cfg.spectral, cfg.pitch);
  a.voiced_segments = voiced_segment_stats(a.f0, a.duration_s, cfg.pitch.min_voiced_frames);
  a.unvoiced_segments = unvoiced_segment_stats(a.f0, cfg.pitch.min_voiced_frames);
  if (a.spectral.empty_band_frames > 0)
    a.diagnostics.push_back("EmptyBand on " + std::to_string(a.spectral.empty_band_frames) + " frames (clamped)");
  if (a.voice_quality.formants.dropouts > 0)
    a.diagnostics.push_back("FormantDropout on " + std::to_string(a.voice_quality.formants.dropouts) + " voiced frames");
  try {
    const auto marks = pitch_marks(buf, a.f0, cfg.pitch);
    functionals::frame_perturbation(a, marks);
    a.perturbation = perturbation(marks);
  } catch (const Error& e) {
    a.diagnostics.emplace_back(e.what());
  }
  try {
    a.hnr = a.f0.periodicity.size() == a.f0.size() ? hnr(a.f0) : hnr(buf, a.f0, cfg.pitch);
  } catch (const Error& e) {
    a.diagnostics.emplace_back(e.what());
  }
  return a;
}

// ---------------------------------------------------------------------------
// Assembly

struct FeatureVector {
  std::string participant_id;
  Group group = Group::neg;
  Vowel vowel = Vowel::a;
  std::vector<double> values;
  std::vector<std::string> diagnostics;
};

namespace functionals {

/// Values of one low-level descriptor on a scope, with the frame index of
/// each value so that runs of consecutive frames can be recovered.
struct Series {
  std::vector<double> values;
  std::vector<std::size_t> frames;
};

inline bool in_scope(Scope s, bool voiced) {
  return s == Scope::all_frames || (s == Scope::voiced_only && voiced) || (s == Scope::unvoiced_only && !voiced);
}

inline const std::vector<double>* spectral_track(const SpectralTracks& t, std::string_view lld) {
  if (lld == "loudness") return &t.loudness;
  if (lld == "spectral_flux") return &t.flux;
  if (lld == "alpha_ratio") return &t.alpha_ratio;
  if (lld == "hammarberg") return &t.hammarberg;
  if (lld == "slope_0_500") return &t.slope_0_500;
  if (lld == "slope_500_1500") return &t.slope_500_1500;
  for (std::size_t k = 0; k < 4; ++k)
    if (lld == "mfcc" + std::to_string(k + 1)) return &t.mfcc[k];
  return nullptr;
}

[[noreturn]] inline void mismatch(const RegistryEntry& e, const std::string& why) {
  throw Error(Errc::registry_mismatch, "'" + e.name + "' (" + e.lld + "/" + e.functional + "/" +
                                           std::string(to_string(e.scope)) + "): " + why);
}

inline Series series_for(const RecordingAnalysis& a, const RegistryEntry& e) {
  Series s;
  if (const auto* track = spectral_track(a.spectral, e.lld)) {
    if (e.scope == Scope::global) mismatch(e, "frame descriptor cannot have global scope");
    for (std::size_t j = 0; j < track->size(); ++j)
      if (in_scope(e.scope, a.spectral_voiced[j])) {
        s.values.push_back((*track)[j]);
        s.frames.push_back(j);
      }
    return s;
  }
  // The remaining descriptors exist on voiced frames only.
  if (e.scope != Scope::voiced_only) mismatch(e, "descriptor is defined on voiced frames only");
  if (e.lld == "f0_semitone") {
    const auto st = a.f0.f0_semitones();
    for (std::size_t i = 0; i < st.size(); ++i)
      if (a.f0.voiced[i]) {
        s.values.push_back(st[i]);
        s.frames.push_back(i);
      }
  } else if (e.lld == "hnr") {
    s.values = a.hnr.hnr_db;
    s.frames = a.hnr.frames;
  } else if (e.lld == "jitter_local" || e.lld == "shimmer_local") {
    s.values = e.lld == "jitter_local" ? a.jitter_frames : a.shimmer_frames;
    s.frames = a.perturbation_frames;
  } else if (e.lld == "h1_h2") {
    s.values = a.voice_quality.harmonics.h1_h2;
    s.frames = a.voice_quality.harmonics.frames;
  } else if (e.lld == "h1_a3") {
    s.values = a.voice_quality.harmonics.h1_a3;
    for (const auto& f : a.voice_quality.formants.frames) s.frames.push_back(f.frame);
  } else if (e.lld.size() > 3 && e.lld[0] == 'f' && e.lld[1] >= '1' && e.lld[1] <= '3' && e.lld[2] == '_') {
    const auto k = std::size_t(e.lld[1] - '1');
    const std::string_view what = std::string_view(e.lld).substr(3);
    const auto& fm = a.voice_quality.formants;
    for (std::size_t i = 0; i < fm.frames.size(); ++i) {
      double v;
      if (what == "frequency") v = fm.frames[i].freq_hz[k];
      else if (what == "bandwidth") v = fm.frames[i].bandwidth_hz[k];
      else if (what == "amplitude") v = fm.relative_db[i][k];
      else mismatch(e, "unknown formant attribute");
      s.values.push_back(v);
      s.frames.push_back(fm.frames[i].frame);
    }
  } else {
    mismatch(e, "unknown low-level descriptor");
  }
  return s;
}

inline std::vector<std::vector<double>> runs_of(const Series& s) {
  std::vector<std::vector<double>> runs;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (i == 0 || s.frames[i] != s.frames[i - 1] + 1) runs.emplace_back();
    runs.back().push_back(s.values[i]);
  }
  return runs;
}

inline double global_value(const RecordingAnalysis& a, const RegistryEntry& e) {
  if (e.lld == "voiced_segments") {
    if (e.functional == "per_second") return a.voiced_segments.segments_per_second;
    if (e.functional == "length_mean") return a.voiced_segments.mean_length_s;
    if (e.functional == "length_sd") return a.voiced_segments.length_sd_s;
  } else if (e.lld == "unvoiced_segments") {
    if (e.functional == "length_mean") return a.unvoiced_segments.mean_length_s;
    if (e.functional == "length_sd") return a.unvoiced_segments.length_sd_s;
  }
  mismatch(e, "no such global descriptor");
}

inline double evaluate(const RecordingAnalysis& a, const RegistryEntry& e, const FunctionalOptions& opt,
                       std::vector<std::string>& diag) {
  if (e.scope == Scope::global) return global_value(a, e);
  if (e.lld == "sound_level") {
    if (e.functional != "leq" || e.scope != Scope::all_frames) mismatch(e, "sound level supports leq on all frames");
    const double ms = func_mean(a.spectral.mean_square);
    return ms > 0.0 ? std::max(kLevelFloorDb, 10.0 * std::log10(ms)) : kLevelFloorDb;
  }
  if (e.functional == "cycle_pooled") {
    if (e.lld != "jitter_local" && e.lld != "shimmer_local") mismatch(e, "cycle pooling applies to jitter/shimmer");
    if (!a.perturbation) {
      diag.push_back(e.name + ": no cycles, fallback 0");
      return 0.0;
    }
    return e.lld == "jitter_local" ? a.perturbation->jitter_local : a.perturbation->shimmer_local;
  }

  const Series s = series_for(a, e);
  if (s.values.empty()) {
    diag.push_back(e.name + ": EmptyScope, fallback 0");
    return 0.0;
  }
  const auto& f = e.functional;
  if (f == "mean") return func_mean(s.values);
  if (f == "sd_norm") {
    bool guarded = false;
    const double v = func_sd_norm(s.values, opt, &guarded);
    if (guarded) diag.push_back(e.name + ": |mean| below guard, population SD reported");
    return v;
  }
  if (f == "pctl20" || f == "pctl50" || f == "pctl80" || f == "pctlrange_20_80") {
    const auto p = func_percentiles(s.values);
    if (f == "pctl20") return p.p20;
    if (f == "pctl50") return p.p50;
    if (f == "pctl80") return p.p80;
    return p.range_20_80;
  }
  if (f.starts_with("rising_slope") || f.starts_with("falling_slope")) {
    const double hop = e.lld == "f0_semitone" ? a.f0.hop_s : a.spectral.hop_s;
    const auto st = func_slopes(runs_of(s), hop);
    if (f == "rising_slope_mean") return st.mean_rising;
    if (f == "rising_slope_sd") return st.sd_rising;
    if (f == "falling_slope_mean") return st.mean_falling;
    if (f == "falling_slope_sd") return st.sd_falling;
  }
  if (f == "peaks_per_second") return func_peaks_per_second(s.values, a.duration_s);
  mismatch(e, "unknown functional");
}

}  // namespace functionals

/// One value per registry entry, in registry order. Non-finite results are
/// replaced by 0 with a diagnostic so the vector is always usable.
inline FeatureVector assemble_vector(const RecordingAnalysis& a, const FeatureRegistry& reg,
                                     const FunctionalOptions& opt = {}) {
  FeatureVector fv;
  fv.diagnostics = a.diagnostics;
  fv.values.reserve(reg.size());
  for (const auto& e : reg.entries()) {
    double v = functionals::evaluate(a, e, opt, fv.diagnostics);
    if (!std::isfinite(v)) {
      fv.diagnostics.push_back(e.name + ": non-finite, fallback 0");
      v = 0.0;
    }
    fv.values.push_back(v);
  }
  return fv;
}

inline FeatureVector extract_features(const VowelRecording& rec, const FeatureRegistry& reg = default_registry(),
                                      const ExtractConfig& cfg = {}) {
  auto fv = assemble_vector(analyze(rec.buffer, cfg), reg, cfg.functionals);
  fv.participant_id = rec.meta.participant_id;
  fv.group = rec.meta.group;
  fv.vowel = rec.meta.vowel;
  return fv;
}

// ---------------------------------------------------------------------------
// Feature matrix CSV

struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<FeatureVector> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return std::size_t(it - names.begin());
  }
};

/// General format with 9 significant digits; locale independent.
inline std::string format_sig(double v, int digits = 9) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_feature_csv(std::ostream& out, std::span<const std::string> names, std::span<const FeatureVector> rows) {
  out << "participant_id,group,vowel";
  for (const auto& n : names) out << ',' << csv_field(n);
  out << '\n';
  for (const auto& r : rows) {
    if (r.values.size() != names.size()) throw Error(Errc::registry_mismatch, "row width does not match header");
    out << csv_field(r.participant_id) << ',' << to_string(r.group) << ',' << to_string(r.vowel);
    for (double v : r.values) out << ',' << format_sig(v);
    out << '\n';
  }
}

inline double parse_number(std::string_view s, const std::string& context) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) throw Error(Errc::bad_manifest, context + ": not a number: '" + std::string(s) + "'");
  return v;
}

inline FeatureMatrix read_feature_csv(std::istream& in) {
  FeatureMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::bad_manifest, "features file is empty");
  auto head = detail::split_csv(detail::trim(line));
  if (head.size() < 3 || head[0] != "participant_id" || head[1] != "group" || head[2] != "vowel")
    throw Error(Errc::bad_manifest, "features header must start with participant_id,group,vowel");
  m.names.assign(head.begin() + 3, head.end());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_csv(t);
    const std::string ctx = "features line " + std::to_string(lineno);
    if (f.size() != head.size()) throw Error(Errc::bad_manifest, ctx + ": expected " + std::to_string(head.size()) + " fields");
    FeatureVector r;
    r.participant_id = f[0];
    const auto g = parse_group(f[1]);
    const auto v = parse_vowel(f[2]);
    if (!g) throw Error(Errc::bad_manifest, ctx + ": bad group '" + f[1] + "'");
    if (!v) throw Error(Errc::bad_manifest, ctx + ": bad vowel '" + f[2] + "'");
    r.group = *g;
    r.vowel = *v;
    for (std::size_t i = 3; i < f.size(); ++i) r.values.push_back(parse_number(f[i], ctx));
    m.rows.push_back(std::move(r));
  }
  return m;
}

}  // namespace vowelmark
