#pragma once

// Parametric source-filter vowel synthesizer. Every quantity the extractors
// estimate (F0, cycle perturbation, noise level, resonances, phonation
// breaks) is set directly here, so synthesized audio doubles as ground truth.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <boost/math/special_functions/bessel.hpp>

#include "vowelmark/error.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

struct FormantSpec {
  double center_hz = 500.0;
  double bandwidth_hz = 80.0;
};

struct BreakSpec {
  double start_s = 0.0;
  double length_s = 0.0;
};

struct SynthSpec {
  double f0_hz = 120.0;
  double duration_s = 2.0;
  double jitter_pct = 0.0;   // expected local jitter, percent
  double shimmer_pct = 0.0;  // expected local shimmer, percent
  double hnr_db = 40.0;
  std::vector<FormantSpec> formants{{500.0, 80.0}, {1500.0, 120.0}, {2500.0, 160.0}};
  std::vector<BreakSpec> breaks;
  std::uint64_t seed = 1;
  double peak = 0.5;  // output peak amplitude
  int sample_rate = kWorkingRate;
};

struct GroundTruth {
  SynthSpec spec;
  std::vector<std::pair<double, double>> voiced_intervals;  // [start, end) seconds
  int expected_segments = 0;
  double expected_segments_per_second = 0.0;
  double expected_mean_segment_s = 0.0;
  // Perturbation actually realized by the random draws, measured within
  // voiced intervals with the local (consecutive-difference) formulas.
  double realized_jitter = 0.0;
  double realized_shimmer = 0.0;
};

struct SynthParts {
  AudioBuffer harmonic;  // gated and scaled periodic component
  AudioBuffer noise;     // gated and scaled aperiodic component
};

namespace synth {

inline constexpr double kSourceCornerHz = 100.0;  // two poles: -12 dB/octave above
inline constexpr double kFadeS = 0.005;
inline constexpr int kImpulseHalfWidth = 16;

/// 64-bit generator with a fixed, documented output sequence (mt19937_64);
/// uniform and Gaussian variates are derived here rather than through
/// <random> distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(std::min<double>(hi - lo, std::floor(uniform() * (hi - lo + 1))));
  }
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// splitmix64 finalizer, used to derive independent sub-stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(seed ^ mix_seed(a)) ^ b) ^ c);
}

inline void validate(const SynthSpec& s) {
  auto fail = [](const std::string& m) { throw Error(Errc::invalid_spec, m); };
  if (!(s.f0_hz >= 55.0 && s.f0_hz <= 1000.0)) fail("f0_hz must lie in [55, 1000]");
  if (!(s.duration_s > 0.0 && s.duration_s <= 600.0)) fail("duration_s must lie in (0, 600]");
  if (!(s.jitter_pct >= 0.0 && s.jitter_pct <= 20.0)) fail("jitter_pct must lie in [0, 20]");
  if (!(s.shimmer_pct >= 0.0 && s.shimmer_pct <= 50.0)) fail("shimmer_pct must lie in [0, 50]");
  if (!std::isfinite(s.hnr_db)) fail("hnr_db must be finite");
  if (s.formants.size() > 3) fail("at most three formants");
  if (s.sample_rate <= 0) fail("sample_rate must be positive");
  for (const auto& f : s.formants)
    if (!(f.center_hz > 0.0 && f.center_hz < 0.5 * s.sample_rate && f.bandwidth_hz > 0.0))
      fail("formant centers must lie below Nyquist with positive bandwidth");
  if (!(s.peak > 0.0 && s.peak <= 1.0)) fail("peak must lie in (0, 1]");
  auto breaks = s.breaks;
  std::sort(breaks.begin(), breaks.end(), [](auto& a, auto& b) { return a.start_s < b.start_s; });
  double last_end = 0.0;
  for (const auto& b : breaks) {
    if (!(b.length_s > 0.0) || b.start_s < 0.0 || b.start_s + b.length_s > s.duration_s + 1e-9)
      fail("breaks must have positive length and lie within [0, duration]");
    if (b.start_s < last_end - 1e-12) fail("breaks overlap");
    last_end = b.start_s + b.length_s;
  }
}

inline std::vector<std::pair<double, double>> voiced_intervals(const SynthSpec& s) {
  auto breaks = s.breaks;
  std::sort(breaks.begin(), breaks.end(), [](auto& a, auto& b) { return a.start_s < b.start_s; });
  std::vector<std::pair<double, double>> out;
  double t = 0.0;
  // Pieces shorter than a nanosecond are rounding residue of abutting breaks.
  constexpr double kEps = 1e-9;
  for (const auto& b : breaks) {
    if (b.start_s > t + kEps) out.emplace_back(t, b.start_s);
    t = b.start_s + b.length_s;
  }
  if (t < s.duration_s - kEps) out.emplace_back(t, s.duration_s);
  return out;
}

/// Cascaded second-order (Klatt) resonators with unity DC gain, in place.
inline void resonate(const SynthSpec& spec, std::vector<double>& x) {
  const double fs = spec.sample_rate;
  for (const auto& fm : spec.formants) {
    const double cc = -std::exp(-2.0 * M_PI * fm.bandwidth_hz / fs);
    const double bb = 2.0 * std::exp(-M_PI * fm.bandwidth_hz / fs) * std::cos(2.0 * M_PI * fm.center_hz / fs);
    const double aa = 1.0 - bb - cc;
    double y1 = 0.0, y2 = 0.0;
    for (auto& v : x) {
      const double y = aa * v + bb * y1 + cc * y2;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
}

/// Magnitude response of the deterministic filter chain (source roll-off,
/// resonators, lip radiation) at frequency f. Harmonic k of the synthesized
/// signal has amplitude proportional to transfer_magnitude(k * f0).
inline double transfer_magnitude(const SynthSpec& s, double f) {
  const double fs = s.sample_rate;
  const std::complex<double> z1 = std::polar(1.0, -2.0 * M_PI * f / fs);  // z^-1
  const double p = std::exp(-2.0 * M_PI * kSourceCornerHz / fs);
  std::complex<double> h = (1.0 - p) / (1.0 - p * z1);
  h *= h;
  for (const auto& fm : s.formants) {
    const double c = -std::exp(-2.0 * M_PI * fm.bandwidth_hz / fs);
    const double b = 2.0 * std::exp(-M_PI * fm.bandwidth_hz / fs) * std::cos(2.0 * M_PI * fm.center_hz / fs);
    const double a = 1.0 - b - c;
    h *= a / (1.0 - b * z1 - c * z1 * z1);
  }
  h *= 1.0 - z1;
  return std::abs(h);
}

}  // namespace synth

/// Synthesizes the periodic and noise components separately (both gated by
/// the break schedule and scaled by the same output gain).
inline SynthParts synth_parts(const SynthSpec& spec, GroundTruth* truth = nullptr) {
  synth::validate(spec);
  const double fs = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * fs));
  synth::Rng rng(synth::mix_seed(spec.seed));

  const double t0 = 1.0 / spec.f0_hz;
  const double jitter = spec.jitter_pct / 100.0, shimmer = spec.shimmer_pct / 100.0;

  // Standardized i.i.d. perturbations, one per cycle. Each sequence is then
  // scaled so that the mean absolute consecutive difference over the nominal
  // cycle count equals the request exactly, instead of only in expectation
  // (about 230 cycles leave the raw estimate some 10% off at random).
  const double shortest = std::max(0.1, 1.0 - 3.0 * jitter * std::sqrt(M_PI) / 2.0);
  const auto n_draw = static_cast<std::size_t>(std::ceil(spec.duration_s / (t0 * shortest))) + 4;
  const auto n_nominal = std::clamp<std::size_t>(std::size_t(spec.duration_s / t0), 2, n_draw);
  auto draw = [&] {
    std::vector<double> z(n_draw);
    for (auto& v : z) v = std::clamp(rng.gauss(), -3.0, 3.0);
    double d = 0.0;
    for (std::size_t k = 1; k < n_nominal; ++k) d += std::abs(z[k] - z[k - 1]);
    d /= double(n_nominal - 1);
    for (auto& v : z) v /= d;
    return z;
  };
  double t = rng.uniform(0.1, 0.6) * t0;
  const auto zt = draw();
  const auto za = draw();

  std::vector<double> pulse_t, pulse_a;
  for (std::size_t k = 0; t < spec.duration_s && k < n_draw; ++k) {
    pulse_t.push_back(t);
    pulse_a.push_back(std::max(0.05, 1.0 + shimmer * za[k]));
    t += t0 * (1.0 + jitter * zt[k]);
  }

  // Band-limited impulses at fractional positions.
  std::vector<double> x(n, 0.0);
  const double beta = 8.6, cutoff = 0.45;
  const double inv_i0 = 1.0 / boost::math::cyl_bessel_i(0, beta);
  for (std::size_t k = 0; k < pulse_t.size(); ++k) {
    const double pos = pulse_t[k] * fs;
    const long c = static_cast<long>(std::floor(pos));
    for (long j = c - synth::kImpulseHalfWidth + 1; j <= c + synth::kImpulseHalfWidth; ++j) {
      if (j < 0 || j >= static_cast<long>(n)) continue;
      const double d = double(j) - pos;
      const double u = d / synth::kImpulseHalfWidth;
      if (u <= -1.0 || u >= 1.0) continue;
      const double arg = 2.0 * cutoff * d;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      x[std::size_t(j)] += pulse_a[k] * 2.0 * cutoff * sinc * boost::math::cyl_bessel_i(0, beta * std::sqrt(1.0 - u * u)) * inv_i0;
    }
  }

  // Glottal roll-off: two unity-DC-gain one-pole low-passes.
  const double p = std::exp(-2.0 * M_PI * synth::kSourceCornerHz / fs);
  for (int pass = 0; pass < 2; ++pass) {
    double y = 0.0;
    for (auto& v : x) v = y = (1.0 - p) * v + p * y;
  }
  synth::resonate(spec, x);
  // Lip radiation: first difference (+6 dB/octave, zero at DC).
  for (double prev = 0.0; auto& v : x) {
    const double y = v - prev;
    prev = v;
    v = y;
  }

  // Break gate with short raised-cosine fades on the voiced side.
  const auto intervals = synth::voiced_intervals(spec);
  std::vector<double> gate(n, 0.0);
  for (const auto& [b, e] : intervals) {
    const auto i0 = static_cast<std::size_t>(std::lround(b * fs));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::lround(e * fs)));
    const double fade = synth::kFadeS * fs;
    for (std::size_t i = i0; i < i1; ++i) {
      double g = 1.0;
      if (b > 0.0 && double(i - i0) < fade) g = 0.5 - 0.5 * std::cos(M_PI * double(i - i0) / fade);
      if (e < spec.duration_s && double(i1 - i) < fade)
        g = std::min(g, 0.5 - 0.5 * std::cos(M_PI * double(i1 - i) / fade));
      gate[i] = g;
    }
  }

  // Aspiration noise enters at the glottis and is shaped by the same tract,
  // so its spectrum follows the formant envelope instead of sitting as a
  // flat floor above the steeply falling harmonic spectrum.
  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.gauss();
  synth::resonate(spec, noise);
  double eh = 0.0, en = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= gate[i];
    noise[i] *= gate[i];
    eh += x[i] * x[i];
    en += noise[i] * noise[i];
  }
  const double noise_gain = en > 0.0 ? std::sqrt(eh / en * std::pow(10.0, -spec.hnr_db / 10.0)) : 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] *= noise_gain;
    peak = std::max(peak, std::abs(x[i] + noise[i]));
  }
  const double scale = peak > 0.0 ? spec.peak / peak : 0.0;

  SynthParts parts;
  parts.harmonic.sample_rate = parts.noise.sample_rate = spec.sample_rate;
  parts.harmonic.samples.resize(n);
  parts.noise.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    parts.harmonic.samples[i] = x[i] * scale;
    parts.noise.samples[i] = noise[i] * scale;
  }

  if (truth) {
    truth->spec = spec;
    truth->voiced_intervals = intervals;
    truth->expected_segments = static_cast<int>(intervals.size());
    double voiced = 0.0;
    for (const auto& [b, e] : intervals) voiced += e - b;
    truth->expected_segments_per_second = intervals.size() / spec.duration_s;
    truth->expected_mean_segment_s = intervals.empty() ? 0.0 : voiced / intervals.size();
    // Realized perturbation over consecutive cycles sharing one voiced interval.
    double dj = 0.0, sj = 0.0, ds = 0.0, ss = 0.0;
    std::size_t nd = 0, np = 0;
    for (const auto& [b, e] : intervals) {
      long prev = -1;
      for (std::size_t k = 0; k + 1 < pulse_t.size(); ++k) {
        if (pulse_t[k] < b || pulse_t[k + 1] >= e) continue;
        const double period = pulse_t[k + 1] - pulse_t[k];
        sj += period;
        ss += pulse_a[k];
        ++np;
        if (prev >= 0 && std::size_t(prev) + 1 == k) {
          dj += std::abs(period - (pulse_t[k] - pulse_t[k - 1]));
          ds += std::abs(pulse_a[k] - pulse_a[k - 1]);
          ++nd;
        }
        prev = static_cast<long>(k);
      }
    }
    if (nd > 0 && np > 0) {
      truth->realized_jitter = (dj / nd) / (sj / np);
      truth->realized_shimmer = (ds / nd) / (ss / np);
    }
  }
  return parts;
}

inline std::pair<AudioBuffer, GroundTruth> synth_vowel(const SynthSpec& spec) {
  GroundTruth truth;
  auto parts = synth_parts(spec, &truth);
  AudioBuffer out = std::move(parts.harmonic);
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += parts.noise.samples[i];
  return {std::move(out), std::move(truth)};
}

/// Reference formant frequencies (Hz) per vowel, F1..F3.
inline std::array<double, 3> vowel_formants(Vowel v) {
  switch (v) {
    case Vowel::a: return {730.0, 1090.0, 2440.0};
    case Vowel::i: return {270.0, 2290.0, 3010.0};
    case Vowel::u: return {300.0, 870.0, 2240.0};
    case Vowel::e: return {460.0, 1900.0, 2600.0};
    case Vowel::o: return {450.0, 880.0, 2500.0};
  }
  return {500.0, 1500.0, 2500.0};
}

inline constexpr std::array<double, 3> kTemplateBandwidths{80.0, 120.0, 160.0};

inline SynthSpec vowel_template(Vowel v, double f0_hz = 120.0, double duration_s = 2.0) {
  SynthSpec s;
  s.f0_hz = f0_hz;
  s.duration_s = duration_s;
  const auto f = vowel_formants(v);
  s.formants.clear();
  for (int k = 0; k < 3; ++k) s.formants.push_back({f[k], kTemplateBandwidths[k]});
  return s;
}

// ---------------------------------------------------------------------------
// Cohorts

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Distribution of synthesis parameters for one group. Participant-level
/// draws are shared by all five vowels of a pseudo-participant; the rest are
/// drawn per recording.
struct CohortProfile {
  Range f0_hz{110.0, 130.0};          // per participant
  Range f0_recording_factor{0.85, 1.15};
  Range formant_scale{0.97, 1.03};    // per participant
  Range formant_recording_scale{0.96, 1.04};
  Range peak{0.3, 0.8};               // per recording
  Range jitter_pct{0.2, 0.8};
  Range shimmer_pct{2.0, 6.0};
  Range hnr_db{12.0, 25.0};
  Range duration_s{2.0, 2.6};
  Range lead_s{0.1, 0.25};  // silence before and after phonation
  Range tail_s{0.1, 0.25};
  int breaks_min = 0;       // phonation breaks inside the voiced stretch
  int breaks_max = 0;
  Range break_len_s{0.1, 0.25};
  double min_voiced_piece_s = 0.15;
};

using FormantTable = std::array<std::array<double, 3>, 5>;  // indexed by Vowel

inline FormantTable default_formant_table() {
  FormantTable t{};
  for (Vowel v : kVowels) t[std::size_t(v)] = vowel_formants(v);
  return t;
}

struct CohortSpec {
  int n_per_group = 11;
  CohortProfile neg;
  CohortProfile pos;
  std::uint64_t seed = 1;
  FormantTable formants = default_formant_table();
};

/// Default cohort: groups differ only in phonation breaks (2-4 per recording
/// in the pos group).
inline CohortSpec default_cohort_spec(std::uint64_t seed = 1) {
  CohortSpec c;
  c.seed = seed;
  c.pos.breaks_min = 2;
  c.pos.breaks_max = 4;
  return c;
}

struct CohortRecording {
  VowelRecording recording;
  GroundTruth truth;
};

namespace synth {

inline SynthSpec sample_recording_spec(const CohortProfile& prof, Vowel v, const std::array<double, 3>& formants,
                                       double participant_f0, double participant_scale, Rng& rng, std::uint64_t seed) {
  SynthSpec s = vowel_template(v);
  for (std::size_t k = 0; k < 3; ++k) s.formants[k].center_hz = formants[k];
  s.seed = seed;
  s.f0_hz = std::clamp(participant_f0 * rng.uniform(prof.f0_recording_factor.lo, prof.f0_recording_factor.hi),
                       55.0, 1000.0);
  const double scale = participant_scale * rng.uniform(prof.formant_recording_scale.lo, prof.formant_recording_scale.hi);
  for (auto& f : s.formants) f.center_hz *= scale;
  s.peak = rng.uniform(prof.peak.lo, prof.peak.hi);
  s.jitter_pct = rng.uniform(prof.jitter_pct.lo, prof.jitter_pct.hi);
  s.shimmer_pct = rng.uniform(prof.shimmer_pct.lo, prof.shimmer_pct.hi);
  s.hnr_db = rng.uniform(prof.hnr_db.lo, prof.hnr_db.hi);
  s.duration_s = rng.uniform(prof.duration_s.lo, prof.duration_s.hi);

  const double lead = rng.uniform(prof.lead_s.lo, prof.lead_s.hi);
  const double tail = rng.uniform(prof.tail_s.lo, prof.tail_s.hi);
  s.breaks.clear();
  if (lead > 0.0) s.breaks.push_back({0.0, lead});

  const int k = prof.breaks_max > 0 ? rng.uniform_int(prof.breaks_min, prof.breaks_max) : 0;
  std::vector<double> lens(static_cast<std::size_t>(k));
  for (auto& l : lens) l = rng.uniform(prof.break_len_s.lo, prof.break_len_s.hi);
  double phon = s.duration_s - lead - tail;
  double total_breaks = 0.0;
  for (double l : lens) total_breaks += l;
  double slack = phon - total_breaks - (k + 1) * prof.min_voiced_piece_s;
  if (slack < 0.0) {
    // Stretch the recording rather than squeezing the voiced pieces.
    s.duration_s -= slack;
    phon -= slack;
    slack = 0.0;
  }
  // Split the slack into k+1 voiced pieces via sorted uniform cut points.
  std::vector<double> cuts(static_cast<std::size_t>(k));
  for (auto& c : cuts) c = rng.uniform();
  std::sort(cuts.begin(), cuts.end());
  double t = lead, prev_cut = 0.0;
  for (int i = 0; i < k; ++i) {
    t += prof.min_voiced_piece_s + slack * (cuts[std::size_t(i)] - prev_cut);
    prev_cut = cuts[std::size_t(i)];
    s.breaks.push_back({t, lens[std::size_t(i)]});
    t += lens[std::size_t(i)];
  }
  if (tail > 0.0) s.breaks.push_back({s.duration_s - tail, tail});
  return s;
}

}  // namespace synth

/// Pseudo-participants ("neg01", "pos01", ...) each contributing one
/// recording per vowel. Recording j of participant p in group g draws from
/// its own sub-stream, so any single recording can be regenerated alone.
inline std::vector<CohortRecording> synth_cohort(const CohortSpec& spec) {
  if (spec.n_per_group < 2) throw Error(Errc::invalid_spec, "n_per_group must be at least 2");
  std::vector<CohortRecording> out;
  for (Group g : {Group::neg, Group::pos}) {
    const auto& prof = g == Group::pos ? spec.pos : spec.neg;
    for (int p = 0; p < spec.n_per_group; ++p) {
      synth::Rng prng(synth::substream(spec.seed, static_cast<std::uint64_t>(g) + 1, std::uint64_t(p) + 1));
      const double f0 = prng.uniform(prof.f0_hz.lo, prof.f0_hz.hi);
      const double scale = prng.uniform(prof.formant_scale.lo, prof.formant_scale.hi);
      char id[32];
      std::snprintf(id, sizeof id, "%s%02d", std::string(to_string(g)).c_str(), p + 1);
      for (Vowel v : kVowels) {
        const auto rec_seed =
            synth::substream(spec.seed, static_cast<std::uint64_t>(g) + 1, std::uint64_t(p) + 1,
                             static_cast<std::uint64_t>(v) + 1);
        synth::Rng rng(rec_seed);
        const SynthSpec s = synth::sample_recording_spec(prof, v, spec.formants[std::size_t(v)], f0, scale, rng, rec_seed);
        auto [buf, truth] = synth_vowel(s);
        CohortRecording cr;
        cr.recording.meta.participant_id = id;
        cr.recording.meta.group = g;
        cr.recording.meta.vowel = v;
        cr.recording.meta.start_s = 0.0;
        cr.recording.meta.end_s = buf.duration();
        cr.recording.buffer = std::move(buf);
        cr.truth = std::move(truth);
        out.push_back(std::move(cr));
      }
    }
  }
  return out;
}

}  // namespace vowelmark
