#pragma once

// Spectral, cepstral and formant descriptors on the short-frame grid:
// loudness, MFCC 1-4, spectral slopes, alpha ratio, Hammarberg index,
// spectral flux, LPC formants and harmonic amplitudes.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "vowelmark/dsp.hpp"
#include "vowelmark/error.hpp"
#include "vowelmark/pitch.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

struct SpectralConfig {
  int mel_bands = 26;
  double mel_lo_hz = 20.0;
  double mel_hi_hz = 8000.0;
  int loudness_bands = 26;
  double loudness_lo_hz = 50.0;
  double loudness_hi_hz = 8000.0;
  double loudness_exponent = 0.3;
  int lpc_order = 12;
  double pre_emphasis = 0.97;
  double formant_min_hz = 90.0;
  double formant_max_hz = 5500.0;
  double formant_max_bandwidth_hz = 600.0;
  dsp::FrameGrid grid = dsp::spectral_grid();
};

// ---------------------------------------------------------------------------
// Filterbanks

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular bands equally spaced on the mel scale, evaluated on FFT bins.
class MelFilterbank {
 public:
  struct Band {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };

  MelFilterbank(int bands, double lo_hz, double hi_hz, std::size_t fft_size, double rate) {
    const double bin_hz = rate / double(fft_size);
    const std::size_t nbins = fft_size / 2 + 1;
    hi_hz = std::min(hi_hz, rate / 2.0);
    const double mlo = hz_to_mel(lo_hz), mhi = hz_to_mel(hi_hz);
    std::vector<double> edges(std::size_t(bands) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
      edges[i] = mel_to_hz(mlo + (mhi - mlo) * double(i) / double(bands + 1));
    for (int b = 0; b < bands; ++b) {
      const double l = edges[std::size_t(b)], c = edges[std::size_t(b) + 1], r = edges[std::size_t(b) + 2];
      Band band;
      band.first_bin = static_cast<std::size_t>(std::ceil(l / bin_hz));
      for (std::size_t k = band.first_bin; k < nbins && double(k) * bin_hz <= r; ++k) {
        const double f = double(k) * bin_hz;
        band.weights.push_back(f <= c ? (f - l) / (c - l) : (r - f) / (r - c));
      }
      bands_.push_back(std::move(band));
    }
  }

  std::size_t size() const { return bands_.size(); }
  const Band& band(std::size_t i) const { return bands_[i]; }

  /// Weighted sums of a power spectrum.
  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> out(bands_.size(), 0.0);
    for (std::size_t b = 0; b < bands_.size(); ++b) {
      const auto& band = bands_[b];
      for (std::size_t j = 0; j < band.weights.size() && band.first_bin + j < power.size(); ++j)
        out[b] += band.weights[j] * power[band.first_bin + j];
    }
    return out;
  }

 private:
  std::vector<Band> bands_;
};

inline std::vector<double> power_of(const dsp::Spectrum& s) {
  std::vector<double> p(s.magnitudes.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = s.magnitudes[k] * s.magnitudes[k];
  return p;
}

// ---------------------------------------------------------------------------
// Per-frame descriptors

inline double loudness_from_bands(std::span<const double> band_energy, double exponent = 0.3) {
  double sum = 0.0;
  for (double e : band_energy) sum += std::pow(std::max(e, 0.0), exponent);
  return sum;
}

inline constexpr double kLogFloor = 1e-30;

/// Orthonormal DCT-II of the log band energies; returns coefficients 1..n.
inline std::vector<double> mfcc_from_band_energies(std::span<const double> band_energy, int n_coeffs = 4) {
  const std::size_t m = band_energy.size();
  std::vector<double> logs(m);
  for (std::size_t i = 0; i < m; ++i) logs[i] = std::log(std::max(band_energy[i], kLogFloor));
  std::vector<double> c(std::size_t(n_coeffs), 0.0);
  const double scale = std::sqrt(2.0 / double(m));
  for (int k = 1; k <= n_coeffs; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += logs[i] * std::cos(M_PI * k * (double(i) + 0.5) / double(m));
    c[std::size_t(k - 1)] = scale * acc;
  }
  return c;
}

inline double to_db(double magnitude) { return 20.0 * std::log10(std::max(magnitude, 1e-15)); }

struct SlopePair {
  double slope_0_500 = 0.0;
  double slope_500_1500 = 0.0;
};

/// Regression of dB magnitude on frequency (dB/Hz) within 0-500 and
/// 500-1500 Hz.
inline SlopePair spectral_slopes(const dsp::Spectrum& s) {
  auto band = [&](double lo, double hi) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
      const double f = s.freq(k);
      if (f < lo || f > hi) continue;
      xs.push_back(f);
      ys.push_back(to_db(s.magnitudes[k]));
    }
    return dsp::linfit(xs, ys).slope;
  };
  return {band(0.0, 500.0), band(500.0, 1500.0)};
}

/// Energy in [lo, hi) Hz, each bin counting for the fraction of its
/// [f - bin/2, f + bin/2) cell that falls inside the band.
inline double band_energy(const dsp::Spectrum& s, double lo, double hi) {
  double e = 0.0;
  for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
    const double cl = s.freq(k) - 0.5 * s.bin_hz, ch = s.freq(k) + 0.5 * s.bin_hz;
    const double overlap = std::min(ch, hi) - std::max(cl, lo);
    if (overlap > 0.0) e += s.magnitudes[k] * s.magnitudes[k] * overlap / s.bin_hz;
  }
  return e;
}

inline constexpr double kEmptyBandClampDb = 60.0;

struct AlphaHammarberg {
  double alpha_db = 0.0;
  double hammarberg_db = 0.0;
  bool empty_band = false;  // at least one band had no energy; value clamped
};

/// Ratio in dB with the +-60 dB clamp for an empty numerator or denominator.
inline double clamped_ratio_db(double num, double den, bool& empty) {
  if (num > 0.0 && den > 0.0)
    return std::clamp(10.0 * std::log10(num / den), -kEmptyBandClampDb, kEmptyBandClampDb);
  empty = true;
  if (num > 0.0) return kEmptyBandClampDb;
  if (den > 0.0) return -kEmptyBandClampDb;
  return 0.0;
}

inline AlphaHammarberg alpha_hammarberg(const dsp::Spectrum& s) {
  AlphaHammarberg out;
  out.alpha_db = clamped_ratio_db(band_energy(s, 50.0, 1000.0), band_energy(s, 1000.0, 5000.0), out.empty_band);
  double lo_peak = 0.0, hi_peak = 0.0;
  for (std::size_t k = 0; k < s.magnitudes.size(); ++k) {
    const double f = s.freq(k);
    if (f <= 2000.0) lo_peak = std::max(lo_peak, s.magnitudes[k]);
    else if (f <= 5000.0) hi_peak = std::max(hi_peak, s.magnitudes[k]);
  }
  out.hammarberg_db = clamped_ratio_db(lo_peak * lo_peak, hi_peak * hi_peak, out.empty_band);
  return out;
}

/// Squared frame-to-frame change of L1-normalized magnitude spectra;
/// flux[0] = 0.
inline std::vector<double> spectral_flux(std::span<const dsp::Spectrum> spectra) {
  std::vector<double> flux(spectra.size(), 0.0);
  std::vector<double> prev;
  for (std::size_t t = 0; t < spectra.size(); ++t) {
    const auto& m = spectra[t].magnitudes;
    double norm = 0.0;
    for (double v : m) norm += v;
    std::vector<double> cur(m.size(), 0.0);
    if (norm > 0.0)
      for (std::size_t k = 0; k < m.size(); ++k) cur[k] = m[k] / norm;
    if (t > 0) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cur.size() && k < prev.size(); ++k) acc += (cur[k] - prev[k]) * (cur[k] - prev[k]);
      flux[t] = acc;
    }
    prev = std::move(cur);
  }
  return flux;
}

// ---------------------------------------------------------------------------
// LPC formants

using dsp::LpcModel;
using dsp::levinson_durbin;

/// Roots of z^p + a1 z^(p-1) + ... + ap via companion-matrix eigenvalues.
inline std::vector<std::complex<double>> polynomial_roots(std::span<const double> a) {
  const int p = static_cast<int>(a.size()) - 1;
  if (p < 1) return {};
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) c(0, j) = -a[std::size_t(j + 1)] / a[0];
  for (int i = 1; i < p; ++i) c(i, i - 1) = 1.0;
  // The companion matrix is already upper Hessenberg, so the QR iteration
  // can start on it directly.
  Eigen::RealSchur<Eigen::MatrixXd> schur(p);
  schur.computeFromHessenberg(c, Eigen::MatrixXd::Identity(p, p), false);
  if (schur.info() != Eigen::Success) return {};
  const auto& t = schur.matrixT();
  std::vector<std::complex<double>> roots;
  roots.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p;) {
    if (i + 1 < p && t(i + 1, i) != 0.0) {
      // 2x2 block holding a complex-conjugate pair.
      const double m = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double q = 0.5 * (t(i, i) - t(i + 1, i + 1));
      const std::complex<double> d = std::sqrt(std::complex<double>(q * q + t(i, i + 1) * t(i + 1, i)));
      roots.push_back(m + d);
      roots.push_back(m - d);
      i += 2;
    } else {
      roots.emplace_back(t(i, i), 0.0);
      ++i;
    }
  }
  return roots;
}

struct FormantFrame {
  std::size_t frame = 0;  // index on the spectral grid
  std::array<double, 3> freq_hz{};
  std::array<double, 3> bandwidth_hz{};
  std::array<double, 3> amplitude_db{};  // sinusoid-amplitude dB read off the LPC envelope
};

namespace spectral {

/// Power of the de-emphasized all-pole envelope at f, in DFT |X|^2 units of
/// the analysed (windowed) frame.
inline double envelope_power(const LpcModel& m, double f, double fs, double pre_emphasis) {
  const double w = 2.0 * M_PI * f / fs;
  std::complex<double> a = 0.0;
  for (std::size_t k = 0; k < m.a.size(); ++k) a += m.a[k] * std::polar(1.0, -w * double(k));
  const std::complex<double> pe = 1.0 - pre_emphasis * std::polar(1.0, -w);
  return m.error / std::max(std::norm(a) * std::norm(pe), 1e-300);
}

}  // namespace spectral

/// Formant analysis of one raw frame. Returns nothing when fewer than three
/// admissible resonances are found (a dropout). Amplitudes convert the
/// envelope density to the amplitude of one harmonic at spacing f0_hz.
inline std::optional<FormantFrame> formants_lpc(std::span<const double> raw, double fs, double f0_hz,
                                                const SpectralConfig& cfg = {}) {
  const std::size_t n = raw.size();
  if (n < std::size_t(cfg.lpc_order) + 2) return std::nullopt;
  const auto w = dsp::make_window(dsp::Window::hamming, n);
  std::vector<double> x(n);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i > 0 ? raw[i - 1] : raw[0];
    x[i] = (raw[i] - cfg.pre_emphasis * prev) * w[i];
    wsum2 += w[i] * w[i];
  }
  const auto acf = dsp::autocorrelation(x, std::size_t(cfg.lpc_order));
  if (acf.size() <= std::size_t(cfg.lpc_order) || !(acf[0] > 0.0)) return std::nullopt;
  const auto model = levinson_durbin(std::span<const double>(acf.data(), std::size_t(cfg.lpc_order) + 1), cfg.lpc_order);

  struct Cand {
    double f, b;
  };
  std::vector<Cand> cands;
  for (const auto& z : polynomial_roots(model.a)) {
    if (z.imag() <= 0.0) continue;
    const double f = std::arg(z) * fs / (2.0 * M_PI);
    const double b = -std::log(std::abs(z)) * fs / M_PI;
    if (f >= cfg.formant_min_hz && f <= cfg.formant_max_hz && b > 0.0 && b < cfg.formant_max_bandwidth_hz)
      cands.push_back({f, b});
  }
  if (cands.size() < 3) return std::nullopt;
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.f < b.f; });

  FormantFrame out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.freq_hz[i] = cands[i].f;
    out.bandwidth_hz[i] = cands[i].b;
    const double p = spectral::envelope_power(model, cands[i].f, fs, cfg.pre_emphasis);
    const double half_amp = std::sqrt(p * f0_hz / (fs * wsum2));
    out.amplitude_db[i] = to_db(2.0 * half_amp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Harmonics

struct HarmonicAmplitudes {
  double h1_db = 0.0;
  double h2_db = 0.0;
};

/// H1/H2 as sinusoid-amplitude dB: the spectral peak within +-0.25 f0 of
/// f0 and 2 f0, parabolically interpolated in dB. window_sum is the sum of
/// the analysis window (the spectrum of a unit sinusoid peaks at half of it).
inline HarmonicAmplitudes harmonics(const dsp::Spectrum& s, double f0_hz, double window_sum) {
  const double nyquist = s.bin_hz * double(s.magnitudes.size() - 1);
  if (!(f0_hz > 0.0) || f0_hz > nyquist / 2.0)
    throw Error(Errc::harmonic_out_of_range, "f0 " + std::to_string(f0_hz) + " Hz");
  auto peak = [&](double target) {
    const auto lo = static_cast<std::size_t>(std::max(1.0, std::ceil((target - 0.25 * f0_hz) / s.bin_hz)));
    const auto hi = std::min(s.magnitudes.size() - 2, static_cast<std::size_t>(std::floor((target + 0.25 * f0_hz) / s.bin_hz)));
    std::size_t best = lo;
    for (std::size_t k = lo; k <= hi; ++k)
      if (s.magnitudes[k] > s.magnitudes[best]) best = k;
    const auto [d, db] = pitch::parabolic(to_db(s.magnitudes[best - 1]), to_db(s.magnitudes[best]), to_db(s.magnitudes[best + 1]));
    (void)d;
    return db + to_db(2.0 / window_sum);
  };
  return {peak(f0_hz), peak(2.0 * f0_hz)};
}

// ---------------------------------------------------------------------------
// Whole-recording tracks

struct SpectralTracks {
  std::vector<double> loudness;
  std::array<std::vector<double>, 4> mfcc;
  std::vector<double> slope_0_500;
  std::vector<double> slope_500_1500;
  std::vector<double> alpha_ratio;
  std::vector<double> hammarberg;
  std::vector<double> flux;
  std::vector<double> mean_square;  // raw frame mean square, for level
  std::size_t empty_band_frames = 0;
  double hop_s = 0.01;

  std::size_t size() const { return loudness.size(); }
};

inline SpectralTracks spectral_tracks(const AudioBuffer& buf, const SpectralConfig& cfg = {}) {
  const int fs = buf.sample_rate;
  const auto n = cfg.grid.frame_samples(fs);
  const auto hop = cfg.grid.hop_samples(fs);
  const auto count = cfg.grid.frame_count(buf.samples.size(), fs);
  if (count == 0) throw Error(Errc::signal_too_short, "signal shorter than one spectral frame");
  const auto fft_size = dsp::fft_size_for(n);
  const auto window = dsp::make_window(cfg.grid.window, n);
  const MelFilterbank mel(cfg.mel_bands, cfg.mel_lo_hz, cfg.mel_hi_hz, fft_size, fs);
  const MelFilterbank loud(cfg.loudness_bands, cfg.loudness_lo_hz, cfg.loudness_hi_hz, fft_size, fs);

  SpectralTracks t;
  t.hop_s = cfg.grid.hop_s;
  std::vector<dsp::Spectrum> spectra;
  spectra.reserve(count);
  std::vector<double> frame(n);
  for (std::size_t f = 0; f < count; ++f) {
    double ms = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = buf.samples[f * hop + i];
      ms += v * v;
      frame[i] = v * window[i];
    }
    t.mean_square.push_back(ms / double(n));
    auto spec = dsp::magnitude_spectrum(frame, fft_size, fs);
    const auto power = power_of(spec);
    t.loudness.push_back(loudness_from_bands(loud.apply(power), cfg.loudness_exponent));
    const auto c = mfcc_from_band_energies(mel.apply(power), 4);
    for (std::size_t k = 0; k < 4; ++k) t.mfcc[k].push_back(c[k]);
    const auto sl = spectral_slopes(spec);
    t.slope_0_500.push_back(sl.slope_0_500);
    t.slope_500_1500.push_back(sl.slope_500_1500);
    const auto ah = alpha_hammarberg(spec);
    t.alpha_ratio.push_back(ah.alpha_db);
    t.hammarberg.push_back(ah.hammarberg_db);
    t.empty_band_frames += ah.empty_band;
    spectra.push_back(std::move(spec));
  }
  t.flux = spectral_flux(spectra);
  return t;
}

/// Index of the pitch-grid frame centred on the same instant as spectral
/// frame j, if any.
inline std::optional<std::size_t> pitch_frame_for(std::size_t j, const F0Track& track, const SpectralConfig& cfg, int fs) {
  const double center = double(j * cfg.grid.hop_samples(fs)) / fs + 0.5 * double(cfg.grid.frame_samples(fs)) / fs;
  const double idx = (center - 0.5 * track.frame_len_s) / track.hop_s;
  const long i = std::lround(idx);
  if (i < 0 || std::size_t(i) >= track.size() || std::abs(idx - double(i)) > 1e-6) return std::nullopt;
  return std::size_t(i);
}

/// Voicing of each spectral frame, taken from the co-centred pitch frame.
inline std::vector<bool> spectral_voicing(std::size_t spectral_frames, const F0Track& track, const SpectralConfig& cfg, int fs) {
  std::vector<bool> v(spectral_frames, false);
  for (std::size_t j = 0; j < spectral_frames; ++j)
    if (const auto i = pitch_frame_for(j, track, cfg, fs)) v[j] = track.voiced[*i];
  return v;
}

struct FormantTrack {
  std::vector<FormantFrame> frames;  // voiced frames without dropout
  std::vector<std::array<double, 3>> relative_db;  // A_k - H1 per frame
  std::size_t dropouts = 0;
};

struct HarmonicTrack {
  std::vector<std::size_t> frames;  // spectral-grid index
  std::vector<double> h1_db, h2_db, h1_h2;
  std::vector<double> h1_a3;  // only frames with a formant estimate
};

struct VoiceQualityTracks {
  FormantTrack formants;
  HarmonicTrack harmonics;
};

/// Formants on the short grid and harmonic amplitudes on the co-centred
/// pitch frame, for every voiced spectral frame.
inline VoiceQualityTracks voice_quality_tracks(const AudioBuffer& buf, const F0Track& track, const SpectralConfig& cfg = {},
                                               const PitchConfig& pcfg = {}) {
  const int fs = buf.sample_rate;
  const auto n = cfg.grid.frame_samples(fs);
  const auto hop = cfg.grid.hop_samples(fs);
  const auto count = cfg.grid.frame_count(buf.samples.size(), fs);
  const auto pn = pcfg.grid.frame_samples(fs);
  const auto phop = pcfg.grid.hop_samples(fs);
  const auto pwin = dsp::make_window(pcfg.grid.window, pn);
  const double pwin_sum = std::accumulate(pwin.begin(), pwin.end(), 0.0);
  const auto pfft = dsp::fft_size_for(pn);

  VoiceQualityTracks out;
  std::vector<double> frame(pn);
  for (std::size_t j = 0; j < count; ++j) {
    const auto pi = pitch_frame_for(j, track, cfg, fs);
    if (!pi || !track.voiced[*pi]) continue;
    const double f0 = track.f0_hz[*pi];
    for (std::size_t i = 0; i < pn; ++i) frame[i] = buf.samples[*pi * phop + i] * pwin[i];
    const auto h = harmonics(dsp::magnitude_spectrum(frame, pfft, fs), f0, pwin_sum);
    auto& ht = out.harmonics;
    ht.frames.push_back(j);
    ht.h1_db.push_back(h.h1_db);
    ht.h2_db.push_back(h.h2_db);
    ht.h1_h2.push_back(h.h1_db - h.h2_db);

    auto fm = formants_lpc(std::span<const double>(buf.samples.data() + j * hop, n), fs, f0, cfg);
    if (!fm) {
      ++out.formants.dropouts;
      continue;
    }
    fm->frame = j;
    std::array<double, 3> rel{};
    for (std::size_t k = 0; k < 3; ++k) rel[k] = fm->amplitude_db[k] - h.h1_db;
    ht.h1_a3.push_back(h.h1_db - fm->amplitude_db[2]);
    out.formants.frames.push_back(*fm);
    out.formants.relative_db.push_back(rel);
  }
  return out;
}

}  // namespace vowelmark
