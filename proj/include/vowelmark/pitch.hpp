#pragma once

// F0 tracking, voicing decisions, voiced-segment timing, cycle-level pitch
// marks and the perturbation measures built on them (local jitter, local
// shimmer, autocorrelation HNR).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "vowelmark/dsp.hpp"
#include "vowelmark/error.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

inline constexpr double kSemitoneBaseHz = 27.5;

struct PitchConfig {
  double min_hz = 55.0;
  double max_hz = 1000.0;
  double voicing_threshold = 0.45;
  // The shortest-lag candidate at least this strong relative to the best
  // candidate wins (octave-error guard).
  double octave_ratio = 0.9;
  // Frames whose peak amplitude is below this fraction of the recording's
  // peak are treated as silence.
  double silence_threshold = 0.03;
  int min_voiced_frames = 3;
  double lowpass_factor = 1.2;  // pitch-mark low-pass cutoff, multiples of F0
  dsp::FrameGrid grid = dsp::pitch_grid();
};

struct F0Track {
  std::vector<double> f0_hz;     // 0 where unvoiced
  std::vector<bool> voiced;
  std::vector<double> strength;  // normalized autocorrelation peak per frame
  // Autocorrelation maximum within 1.5 lags of the final F0 period, voiced
  // frames only; what hnr() needs, saved from the tracker's own analysis.
  std::vector<double> periodicity;
  double hop_s = 0.01;
  double frame_len_s = 0.06;

  std::size_t size() const { return f0_hz.size(); }
  double center_s(std::size_t i) const { return double(i) * hop_s + 0.5 * frame_len_s; }

  /// Semitones relative to 27.5 Hz; 0 on unvoiced frames.
  std::vector<double> f0_semitones() const {
    std::vector<double> st(f0_hz.size(), 0.0);
    for (std::size_t i = 0; i < st.size(); ++i)
      if (voiced[i]) st[i] = 12.0 * std::log2(f0_hz[i] / kSemitoneBaseHz);
    return st;
  }
};

struct VoicedSegmentStats {
  double segments_per_second = 0.0;
  double mean_length_s = 0.0;
  double length_sd_s = 0.0;
  std::vector<std::pair<double, double>> segment_bounds;
};

struct UnvoicedSegmentStats {
  double mean_length_s = 0.0;
  double length_sd_s = 0.0;
  std::size_t count = 0;
};

namespace pitch {

/// Normalized, window-corrected autocorrelation of one analysis frame:
/// r(k) = [acf_xw(k)/acf_xw(0)] / [acf_w(k)/acf_w(0)] with the frame mean
/// removed before windowing. Empty when the frame has no energy.
class FrameAnalyzer {
 public:
  FrameAnalyzer(std::size_t frame_samples, dsp::Window window)
      : window_(dsp::make_window(window, frame_samples)) {
    window_acf_ = dsp::autocorrelation(window_);
    const double w0 = window_acf_[0];
    for (auto& v : window_acf_) v /= w0;
  }

  std::size_t frame_samples() const { return window_.size(); }

  std::vector<double> normalized_acf(std::span<const double> raw, std::size_t max_lag) const {
    return normalize(dsp::autocorrelation(prepare(raw)), max_lag);
  }

 private:
  std::vector<double> prepare(std::span<const double> raw) const {
    const std::size_t n = window_.size();
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / double(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = (raw[i] - mean) * window_[i];
    return x;
  }

  std::vector<double> normalize(std::vector<double> acf, std::size_t max_lag) const {
    if (acf.empty() || !(acf[0] > 0.0)) return {};
    const double a0 = acf[0];
    max_lag = std::min(max_lag, window_.size() / 2);
    acf.resize(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k) acf[k] = acf[k] / a0 / window_acf_[k];
    return acf;
  }

  std::vector<double> window_;
  std::vector<double> window_acf_;
};

/// Band-limited (Hann-tapered sinc) interpolation of a lag sequence.
inline double interpolate(std::span<const double> r, double lag) {
  constexpr int kDepth = 16;
  const long c = static_cast<long>(std::floor(lag));
  const double frac = lag - double(c);
  if (frac == 0.0 && c >= 0 && c < static_cast<long>(r.size())) return r[std::size_t(c)];
  // sin(pi d) only flips sign from one tap to the next, and the taper's
  // cosine steps by a fixed angle, so neither needs a trig call per tap.
  const double theta = M_PI / (kDepth + 1);
  const double ct = std::cos(theta), st = std::sin(theta);
  double d = lag - double(c - kDepth + 1);
  double cos_d = std::cos(theta * d), sin_d = std::sin(theta * d);
  double s = std::sin(M_PI * d);
  double acc = 0.0;
  for (long k = c - kDepth + 1; k <= c + kDepth; ++k) {
    if (k >= 0 && k < static_cast<long>(r.size()))
      acc += r[std::size_t(k)] * s / (M_PI * d) * (0.5 + 0.5 * cos_d);
    // d -> d - 1
    const double nc = cos_d * ct + sin_d * st;
    sin_d = sin_d * ct - cos_d * st;
    cos_d = nc;
    s = -s;
    d -= 1.0;
  }
  return acc;
}

struct Peak {
  double lag = 0.0;
  double value = 0.0;
};

/// Golden-section maximization of the interpolated sequence on [lo, hi].
inline Peak refine_peak(std::span<const double> r, double lo, double hi) {
  constexpr double g = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = interpolate(r, x1), f2 = interpolate(r, x2);
  while (b - a > 1e-4) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = interpolate(r, x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = interpolate(r, x1);
    }
  }
  return f1 > f2 ? Peak{x1, f1} : Peak{x2, f2};
}

inline double periodicity_at(std::span<const double> r, double lag) {
  if (!(r.size() > lag + 2)) return 0.0;
  return refine_peak(r, std::max(1.0, lag - 1.5), lag + 1.5).value;
}

/// Local maxima of r within [lo, hi], parabolically refined.
inline std::vector<Peak> candidate_peaks(std::span<const double> r, std::size_t lo, std::size_t hi) {
  std::vector<Peak> out;
  lo = std::max<std::size_t>(lo, 1);
  hi = std::min(hi, r.size() - 2);
  for (std::size_t k = lo; k <= hi; ++k) {
    if (!(r[k] > r[k - 1] && r[k] >= r[k + 1])) continue;
    const double a = r[k - 1], b = r[k], c = r[k + 1];
    const double den = a - 2.0 * b + c;
    const double d = den < 0.0 ? 0.5 * (a - c) / den : 0.0;
    out.push_back({double(k) + d, b - 0.25 * (a - c) * d});
  }
  return out;
}

inline double peak_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

/// Clears voiced runs shorter than min_frames.
inline void drop_short_runs(F0Track& t, int min_frames) {
  std::size_t i = 0;
  while (i < t.size()) {
    if (!t.voiced[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < t.size() && t.voiced[j]) ++j;
    if (static_cast<int>(j - i) < min_frames)
      for (std::size_t k = i; k < j; ++k) {
        t.voiced[k] = false;
        t.f0_hz[k] = 0.0;
      }
    i = j;
  }
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

}  // namespace pitch

/// Maximal voiced runs of at least min_voiced_frames frames.
inline std::vector<std::pair<std::size_t, std::size_t>> voiced_runs(const F0Track& track, int min_voiced_frames) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last)
  std::size_t i = 0;
  while (i < track.size()) {
    if (!track.voiced[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < track.size() && track.voiced[j]) ++j;
    if (static_cast<int>(j - i) >= min_voiced_frames) runs.emplace_back(i, j);
    i = j;
  }
  return runs;
}

/// Autocorrelation F0 tracker. Voiced frames carry F0 in [min_hz, max_hz];
/// the contour is 3-frame median smoothed within voiced runs.
inline F0Track estimate_f0(const AudioBuffer& buf, const PitchConfig& cfg = {}) {
  F0Track track;
  track.hop_s = cfg.grid.hop_s;
  track.frame_len_s = cfg.grid.frame_len_s;
  const int fs = buf.sample_rate;
  const auto n = cfg.grid.frame_samples(fs);
  const auto hop = cfg.grid.hop_samples(fs);
  const auto count = cfg.grid.frame_count(buf.samples.size(), fs);
  track.f0_hz.assign(count, 0.0);
  track.voiced.assign(count, false);
  track.strength.assign(count, 0.0);
  if (count == 0) return track;

  const pitch::FrameAnalyzer analyzer(n, cfg.grid.window);
  const double global_peak = pitch::peak_abs(buf.samples);
  const auto min_lag = static_cast<std::size_t>(std::floor(fs / cfg.max_hz));
  const auto max_lag = static_cast<std::size_t>(std::ceil(fs / cfg.min_hz));

  std::vector<std::vector<double>> acfs(count);
  std::vector<std::vector<pitch::Peak>> candidates(count);
  auto accept = [&](std::size_t f, const pitch::Peak& cand) {
    const auto& r = acfs[f];
    const auto refined = pitch::refine_peak(r, std::max(1.0, cand.lag - 1.0), cand.lag + 1.0);
    const double f0 = fs / refined.lag;
    track.strength[f] = refined.value;
    const bool ok = refined.value >= cfg.voicing_threshold && f0 >= cfg.min_hz && f0 <= cfg.max_hz;
    track.voiced[f] = ok;
    track.f0_hz[f] = ok ? f0 : 0.0;
  };

  // Lags past max_lag are kept so the HNR refinement below has the full
  // interpolation support around any accepted lag.
  const std::size_t keep_lag = max_lag + 24;
  auto frame_at = [&](std::size_t f) { return std::span<const double>(buf.samples.data() + f * hop, n); };
  std::vector<std::size_t> active;
  for (std::size_t f = 0; f < count; ++f) {
    if (global_peak <= 0.0 || pitch::peak_abs(frame_at(f)) < cfg.silence_threshold * global_peak) continue;
    acfs[f] = analyzer.normalized_acf(frame_at(f), keep_lag);
    active.push_back(f);
  }

  for (std::size_t f : active) {
    if (acfs[f].size() < 4) continue;
    auto& peaks = candidates[f];
    peaks = pitch::candidate_peaks(acfs[f], min_lag, std::min(max_lag, acfs[f].size() - 2));
    if (peaks.empty()) continue;
    // Octave guard: a periodic signal also peaks at 2x, 3x, ... its period,
    // often equally high. Take the shortest lag that is nearly as strong as
    // the strongest one.
    const double top = std::max_element(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) {
                         return a.value < b.value;
                       })->value;
    accept(f, *std::find_if(peaks.begin(), peaks.end(), [&](const auto& p) { return p.value >= cfg.octave_ratio * top; }));
  }

  // Second pass: with strong period-to-period irregularity the doubled lag
  // can win locally. Frames an octave away from their run's median move to
  // the candidate closest to that median, if one is reasonably strong.
  for (const auto& [b, e] : voiced_runs(track, 1)) {
    std::vector<double> run(track.f0_hz.begin() + long(b), track.f0_hz.begin() + long(e));
    const double ref = pitch::median(run);
    for (std::size_t f = b; f < e; ++f) {
      const double dev = std::abs(std::log2(track.f0_hz[f] / ref));
      if (dev < 0.7) continue;
      const double want = fs / ref;
      const pitch::Peak* pick = nullptr;
      for (const auto& p : candidates[f])
        if (std::abs(p.lag / want - 1.0) < 0.15 && (!pick || p.value > pick->value)) pick = &p;
      if (pick && pick->value >= 0.5 * track.strength[f]) accept(f, *pick);
    }
  }

  std::vector<double> smoothed = track.f0_hz;
  for (std::size_t i = 1; i + 1 < count; ++i) {
    if (!(track.voiced[i - 1] && track.voiced[i] && track.voiced[i + 1])) continue;
    std::array<double, 3> w{track.f0_hz[i - 1], track.f0_hz[i], track.f0_hz[i + 1]};
    std::sort(w.begin(), w.end());
    smoothed[i] = w[1];
  }
  track.f0_hz = std::move(smoothed);
  pitch::drop_short_runs(track, cfg.min_voiced_frames);

  track.periodicity.assign(count, 0.0);
  for (std::size_t f = 0; f < count; ++f)
    if (track.voiced[f]) track.periodicity[f] = pitch::periodicity_at(acfs[f], fs / track.f0_hz[f]);
  return track;
}

inline F0Track estimate_f0(const VowelRecording& rec, const PitchConfig& cfg = {}) {
  return estimate_f0(rec.buffer, cfg);
}

namespace pitch {

inline std::pair<double, double> mean_and_sd(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / double(v.size()))};
}

}  // namespace pitch

/// Each run spans run_frames * hop seconds centered on its frames.
inline VoicedSegmentStats voiced_segment_stats(const F0Track& track, double duration_s, int min_voiced_frames = 3) {
  VoicedSegmentStats st;
  std::vector<double> lengths;
  for (const auto& [b, e] : voiced_runs(track, min_voiced_frames)) {
    const double start = track.center_s(b) - 0.5 * track.hop_s;
    const double end = track.center_s(e - 1) + 0.5 * track.hop_s;
    st.segment_bounds.emplace_back(start, end);
    lengths.push_back(end - start);
  }
  if (!lengths.empty() && duration_s > 0.0) {
    st.segments_per_second = double(lengths.size()) / duration_s;
    std::tie(st.mean_length_s, st.length_sd_s) = pitch::mean_and_sd(lengths);
  }
  return st;
}

/// Maximal runs of frames outside the voiced segments.
inline UnvoicedSegmentStats unvoiced_segment_stats(const F0Track& track, int min_voiced_frames = 3) {
  std::vector<bool> in_segment(track.size(), false);
  for (const auto& [b, e] : voiced_runs(track, min_voiced_frames))
    for (std::size_t i = b; i < e; ++i) in_segment[i] = true;
  std::vector<double> lengths;
  std::size_t i = 0;
  while (i < track.size()) {
    if (in_segment[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < track.size() && !in_segment[j]) ++j;
    lengths.push_back(double(j - i) * track.hop_s);
    i = j;
  }
  UnvoicedSegmentStats st;
  st.count = lengths.size();
  std::tie(st.mean_length_s, st.length_sd_s) = pitch::mean_and_sd(lengths);
  return st;
}

// ---------------------------------------------------------------------------
// Cycle-level analysis

struct PitchMark {
  double time_s = 0.0;
  double amplitude = 0.0;
  std::size_t segment = 0;
};

namespace pitch {

/// Zero-phase (forward-backward) second-order Butterworth filter.
inline std::vector<double> butterworth_zero_phase(std::span<const double> x, double cutoff_hz, double fs, bool highpass) {
  const double w0 = 2.0 * M_PI * std::min(cutoff_hz, 0.45 * fs) / fs;
  const double alpha = std::sin(w0) / (2.0 * M_SQRT1_2);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double k = highpass ? (1.0 + cw) : (1.0 - cw);
  const double b0 = k / 2.0 / a0, b1 = (highpass ? -k : k) / a0, b2 = b0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha) / a0;
  std::vector<double> y(x.begin(), x.end());
  auto pass = [&](auto begin, auto end) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (auto it = begin; it != end; ++it) {
      const double in = *it;
      const double out = b0 * in + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = in;
      y2 = y1;
      y1 = out;
      *it = out;
    }
  };
  pass(y.begin(), y.end());
  pass(y.rbegin(), y.rend());
  return y;
}

/// Parabolic vertex through (i-1, i, i+1); returns (offset, value).
inline std::pair<double, double> parabolic(double y0, double y1, double y2) {
  const double den = y0 - 2.0 * y1 + y2;
  if (!(den < 0.0)) return {0.0, y1};
  const double d = 0.5 * (y0 - y2) / den;
  return {d, y1 - 0.25 * (y0 - y2) * d};
}

/// LPC inverse-filter residual, with the predictor re-estimated on
/// Hamming-windowed blocks of block_s seconds (half a block of context on
/// each side). The residual of a voiced stretch is a train of sharp
/// excitation spikes that formant ringing does not smear.
inline std::vector<double> lpc_residual(std::span<const double> x, double fs, double block_s = 0.1) {
  const long n = static_cast<long>(x.size());
  const int order = static_cast<int>(std::lround(fs / 1000.0)) + 2;
  const long block = std::max(1L, std::lround(block_s * fs));
  std::vector<double> e(x.size(), 0.0);
  for (long s0 = 0; s0 < n; s0 += block) {
    const long a0 = std::max(0L, s0 - block / 2), a1 = std::min(n, s0 + block + block / 2);
    std::vector<double> frame(x.begin() + a0, x.begin() + a1);
    const auto w = dsp::make_window(dsp::Window::hamming, frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= w[i];
    auto r = dsp::autocorrelation(frame, std::size_t(order));
    if (r.size() <= std::size_t(order)) continue;
    r[0] *= 1.0 + 1e-9;
    const auto model = dsp::levinson_durbin(r, order);
    for (long i = s0; i < std::min(n, s0 + block); ++i) {
      double v = 0.0;
      for (int k = 0; k <= order && k <= i; ++k) v += model.a[std::size_t(k)] * x[std::size_t(i - k)];
      e[std::size_t(i)] = v;
    }
  }
  return e;
}

}  // namespace pitch

/// Residual peak-to-RMS ratio (over one period) above which the inverse
/// filter output is treated as a spike train.
inline constexpr double kMinSpikeProminence = 4.0;

/// Per-period waveform peaks inside each voiced segment. Cycles are found
/// on a copy low-passed at lowpass_factor * F0; each mark is then placed on
/// the matching LPC-residual spike with sub-sample precision. The amplitude
/// of a cycle is the largest sample within half a period of its low-passed
/// peak after high-passing at F0/2.
inline std::vector<PitchMark> pitch_marks(const AudioBuffer& buf, const F0Track& track, const PitchConfig& cfg = {}) {
  const auto runs = voiced_runs(track, cfg.min_voiced_frames);
  if (runs.empty()) throw Error(Errc::no_voiced_content, "no voiced segment for pitch marks");
  const double fs = buf.sample_rate;
  const long total = static_cast<long>(buf.samples.size());
  std::vector<PitchMark> marks;

  for (std::size_t seg = 0; seg < runs.size(); ++seg) {
    const auto [fb, fe] = runs[seg];
    std::vector<double> f0s(track.f0_hz.begin() + long(fb), track.f0_hz.begin() + long(fe));
    const double f0_med = pitch::median(f0s);
    const long begin = std::max(0L, std::lround((track.center_s(fb) - 0.5 * track.hop_s) * fs));
    const long end = std::min(total, std::lround((track.center_s(fe - 1) + 0.5 * track.hop_s) * fs));
    const long margin = std::lround(2.0 * fs / f0_med);
    const long pad_b = std::max(0L, begin - margin), pad_e = std::min(total, end + margin);
    if (end - begin < 3) continue;
    const std::span<const double> padded(buf.samples.data() + pad_b, std::size_t(pad_e - pad_b));
    const auto lp = pitch::butterworth_zero_phase(padded, cfg.lowpass_factor * f0_med, fs, false);
    // Cycle amplitudes are read with sub-F0 drift removed: amplitude
    // fluctuations of the source leak energy below F0 that would otherwise
    // ride under the peaks.
    const auto hp = pitch::butterworth_zero_phase(padded, 0.5 * f0_med, fs, true);
    auto at = [&](long i) { return lp[std::size_t(i - pad_b)]; };
    auto local_period = [&](long i) {
      const double t = double(i) / fs;
      auto k = static_cast<long>(std::lround((t - 0.5 * track.frame_len_s) / track.hop_s));
      k = std::clamp(k, long(fb), long(fe) - 1);
      // A stray octave frame must not make the walker skip or split a cycle.
      const double f0 = track.f0_hz[std::size_t(k)];
      return fs / (std::abs(std::log2(f0 / f0_med)) > 0.4 ? f0_med : f0);
    };
    auto argmax = [&](const std::vector<double>& y, long lo, long hi) {
      long best = lo;
      for (long i = lo + 1; i < hi; ++i)
        if (y[std::size_t(i - pad_b)] > y[std::size_t(best - pad_b)]) best = i;
      return best;
    };
    auto refine = [&](const std::vector<double>& y, long m) {
      if (m <= pad_b || m + 1 >= pad_e) return std::pair<double, double>{0.0, y[std::size_t(m - pad_b)]};
      const auto i = std::size_t(m - pad_b);
      if (y[i] < y[i - 1] || y[i] < y[i + 1]) return std::pair<double, double>{0.0, y[i]};
      auto [off, val] = pitch::parabolic(y[i - 1], y[i], y[i + 1]);
      return std::pair<double, double>{std::clamp(off, -0.5, 0.5), val};
    };

    // Pass 1: one cycle per low-passed peak.
    struct Cycle {
      long m;
      double period, amplitude;
    };
    std::vector<Cycle> cycles;
    long lo = begin, hi = std::min(end, begin + std::lround(local_period(begin)));
    while (hi - lo >= 2) {
      const long m = argmax(lp, lo, hi);
      const double period = local_period(m);
      const long half = std::lround(0.5 * period);
      const long pk = argmax(hp, std::max(pad_b, m - half), std::min(pad_e, m + half + 1));
      const double a = refine(hp, pk).second;
      // An argmax pinned to the window edge is a slope, not a cycle peak.
      const bool interior = m > lo && m + 1 < hi;
      if (interior && at(m) > 0.0 && a > 0.0) cycles.push_back({m, period, a});
      lo = m + std::lround(0.75 * period);
      hi = std::min(end, m + std::lround(1.25 * period) + 1);
    }

    // Pass 2: time each cycle on the inverse-filter residual. The low-passed
    // peak lags or leads the excitation by a fixed phase, so the residual
    // polarity and that offset are taken from the whole segment first.
    const auto res = pitch::lpc_residual(padded, fs);
    auto rv = [&](long i, double sign) { return sign * res[std::size_t(i - pad_b)]; };
    auto res_peak = [&](long c, long half_w, double sign) {
      long best = std::max(pad_b + 1, c - half_w);
      const long stop = std::min(pad_e - 2, c + half_w);
      for (long i = best; i <= stop; ++i)
        if (rv(i, sign) > rv(best, sign)) best = i;
      return best;
    };
    double pos = 0.0, neg = 0.0;
    for (const auto& c : cycles) {
      const long q = std::lround(0.5 * c.period);
      pos += rv(res_peak(c.m, q, 1.0), 1.0);
      neg += rv(res_peak(c.m, q, -1.0), -1.0);
    }
    const double sign = pos >= neg ? 1.0 : -1.0;
    std::vector<double> offsets;
    for (const auto& c : cycles) offsets.push_back(double(res_peak(c.m, std::lround(0.5 * c.period), sign) - c.m));
    const long shift = offsets.empty() ? 0 : std::lround(pitch::median(offsets));

    // A residual without distinct spikes (a pure tone is fully predictable)
    // carries no timing information; such segments keep the low-passed peaks.
    std::vector<double> prominence;
    for (const auto& c : cycles) {
      const long half = std::lround(0.5 * c.period);
      const long a0 = std::max(pad_b, c.m + shift - half), a1 = std::min(pad_e, c.m + shift + half);
      double ss = 0.0;
      for (long i = a0; i < a1; ++i) ss += res[std::size_t(i - pad_b)] * res[std::size_t(i - pad_b)];
      const double rms = std::sqrt(ss / double(std::max(1L, a1 - a0)));
      prominence.push_back(rms > 0.0 ? rv(res_peak(c.m + shift, std::lround(0.25 * c.period), sign), sign) / rms : 0.0);
    }
    const bool use_residual = !prominence.empty() && pitch::median(prominence) >= kMinSpikeProminence;

    std::vector<PitchMark> seg_marks;
    for (const auto& c : cycles) {
      double t = double(c.m) + refine(lp, c.m).first;
      if (use_residual) {
        const long r = res_peak(c.m + shift, std::lround(0.25 * c.period), sign);
        t = double(r) + std::clamp(pitch::parabolic(rv(r - 1, sign), rv(r, sign), rv(r + 1, sign)).first, -0.5, 0.5);
      }
      seg_marks.push_back({t / fs, c.amplitude, seg});
    }

    // Fades at segment edges produce weak cycles; trim them.
    if (seg_marks.size() >= 3) {
      std::vector<double> amps;
      for (const auto& pm : seg_marks) amps.push_back(pm.amplitude);
      const double floor_amp = 0.5 * pitch::median(amps);
      std::size_t b = 0, e = seg_marks.size();
      while (b < e && seg_marks[b].amplitude < floor_amp) ++b;
      while (e > b && seg_marks[e - 1].amplitude < floor_amp) --e;
      seg_marks = std::vector<PitchMark>(seg_marks.begin() + long(b), seg_marks.begin() + long(e));
    }
    marks.insert(marks.end(), seg_marks.begin(), seg_marks.end());
  }
  if (marks.empty()) throw Error(Errc::no_voiced_content, "no periodic cycles found");
  return marks;
}

inline std::vector<PitchMark> pitch_marks(const VowelRecording& rec, const F0Track& track, const PitchConfig& cfg = {}) {
  return pitch_marks(rec.buffer, track, cfg);
}

/// mean(|T_i - T_{i-1}|) / mean(T) over one contiguous run of periods.
inline double jitter_local(std::span<const double> periods_s) {
  if (periods_s.size() < 2) throw Error(Errc::too_few_periods, "jitter needs at least two periods");
  double diff = 0.0;
  for (std::size_t i = 1; i < periods_s.size(); ++i) diff += std::abs(periods_s[i] - periods_s[i - 1]);
  const double mean = std::accumulate(periods_s.begin(), periods_s.end(), 0.0) / double(periods_s.size());
  return mean > 0.0 ? diff / double(periods_s.size() - 1) / mean : 0.0;
}

/// mean(|A_i - A_{i-1}|) / mean(A) over one contiguous run of cycle peaks.
inline double shimmer_local(std::span<const double> peak_amps) {
  if (peak_amps.size() < 2) throw Error(Errc::too_few_periods, "shimmer needs at least two cycles");
  double diff = 0.0;
  for (std::size_t i = 1; i < peak_amps.size(); ++i) diff += std::abs(peak_amps[i] - peak_amps[i - 1]);
  const double mean = std::accumulate(peak_amps.begin(), peak_amps.end(), 0.0) / double(peak_amps.size());
  return mean > 0.0 ? diff / double(peak_amps.size() - 1) / mean : 0.0;
}

struct PerturbationMeasures {
  double jitter_local = 0.0;
  double shimmer_local = 0.0;
  std::vector<double> periods_s;
  std::vector<double> peak_amps;
  std::vector<std::size_t> segment;  // voiced segment of each cycle
};

/// Cycles from consecutive marks of one segment. Differences are pooled over
/// segments but never taken across a segment boundary.
inline PerturbationMeasures perturbation(std::span<const PitchMark> marks) {
  PerturbationMeasures pm;
  for (std::size_t i = 0; i + 1 < marks.size(); ++i) {
    if (marks[i].segment != marks[i + 1].segment) continue;
    pm.periods_s.push_back(marks[i + 1].time_s - marks[i].time_s);
    pm.peak_amps.push_back(marks[i].amplitude);
    pm.segment.push_back(marks[i].segment);
  }
  double dj = 0.0, ds = 0.0;
  std::size_t nd = 0;
  for (std::size_t i = 1; i < pm.periods_s.size(); ++i) {
    if (pm.segment[i] != pm.segment[i - 1]) continue;
    dj += std::abs(pm.periods_s[i] - pm.periods_s[i - 1]);
    ds += std::abs(pm.peak_amps[i] - pm.peak_amps[i - 1]);
    ++nd;
  }
  if (nd == 0) throw Error(Errc::too_few_periods, "no pair of consecutive cycles");
  const double mt = std::accumulate(pm.periods_s.begin(), pm.periods_s.end(), 0.0) / double(pm.periods_s.size());
  const double ma = std::accumulate(pm.peak_amps.begin(), pm.peak_amps.end(), 0.0) / double(pm.peak_amps.size());
  pm.jitter_local = mt > 0.0 ? dj / double(nd) / mt : 0.0;
  pm.shimmer_local = ma > 0.0 ? ds / double(nd) / ma : 0.0;
  return pm;
}

struct HnrTrack {
  std::vector<double> hnr_db;       // per voiced frame
  std::vector<std::size_t> frames;  // index into the F0 track
};

inline constexpr double kHnrFloorDb = -20.0;
inline constexpr double kHnrCeilDb = 40.0;

inline double hnr_from_correlation(double r) {
  if (r >= 1.0) return kHnrCeilDb;
  if (r <= 0.0) return kHnrFloorDb;
  return std::clamp(10.0 * std::log10(r / (1.0 - r)), kHnrFloorDb, kHnrCeilDb);
}

/// Per voiced frame: 10 log10(r / (1 - r)) with r the normalized
/// autocorrelation maximum next to the tracked F0 lag.
inline HnrTrack hnr(const AudioBuffer& buf, const F0Track& track, const PitchConfig& cfg = {}) {
  const int fs = buf.sample_rate;
  const auto n = cfg.grid.frame_samples(fs);
  const auto hop = cfg.grid.hop_samples(fs);
  const pitch::FrameAnalyzer analyzer(n, cfg.grid.window);
  HnrTrack out;
  for (std::size_t f = 0; f < track.size(); ++f) {
    if (!track.voiced[f]) continue;
    const double lag = fs / track.f0_hz[f];
    const auto r = analyzer.normalized_acf(std::span<const double>(buf.samples.data() + f * hop, n),
                                           static_cast<std::size_t>(std::ceil(lag)) + 20);
    out.hnr_db.push_back(hnr_from_correlation(pitch::periodicity_at(r, lag)));
    out.frames.push_back(f);
  }
  if (out.frames.empty()) throw Error(Errc::no_voiced_content, "HNR needs at least one voiced frame");
  return out;
}

/// HNR from the periodicity saved by estimate_f0; equal to hnr(buf, track)
/// for an unmodified track without re-analysing the audio.
inline HnrTrack hnr(const F0Track& track) {
  if (track.periodicity.size() != track.size())
    throw std::invalid_argument("F0 track carries no periodicity values");
  HnrTrack out;
  for (std::size_t f = 0; f < track.size(); ++f) {
    if (!track.voiced[f]) continue;
    out.hnr_db.push_back(hnr_from_correlation(track.periodicity[f]));
    out.frames.push_back(f);
  }
  if (out.frames.empty()) throw Error(Errc::no_voiced_content, "HNR needs at least one voiced frame");
  return out;
}

inline HnrTrack hnr(const VowelRecording& rec, const F0Track& track, const PitchConfig& cfg = {}) {
  return hnr(rec.buffer, track, cfg);
}

}  // namespace vowelmark
