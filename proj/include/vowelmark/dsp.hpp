#pragma once

// Numeric kernels shared by every extractor: framing, windows, FFT (FFTW),
// magnitude spectra, autocorrelation and least-squares line fits.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include <fftw3.h>

#include "vowelmark/error.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark::dsp {

enum class Window { hann, hamming, gaussian };

struct FrameGrid {
  double frame_len_s = 0.02;
  double hop_s = 0.01;
  Window window = Window::hamming;

  std::size_t frame_samples(int rate) const { return static_cast<std::size_t>(std::lround(frame_len_s * rate)); }
  std::size_t hop_samples(int rate) const { return static_cast<std::size_t>(std::lround(hop_s * rate)); }

  /// 1 + floor((len - frame) / hop), or 0 when the signal is shorter than one frame.
  std::size_t frame_count(std::size_t len, int rate) const {
    const auto n = frame_samples(rate);
    const auto h = hop_samples(rate);
    if (len < n || h == 0) return 0;
    return 1 + (len - n) / h;
  }
};

/// Long Gaussian frames for periodicity analysis.
inline FrameGrid pitch_grid() { return {0.06, 0.01, Window::gaussian}; }
/// Short Hamming frames for spectral and cepstral tracks.
inline FrameGrid spectral_grid() { return {0.02, 0.01, Window::hamming}; }

/// Symmetric window of length n (w[i] == w[n-1-i]).
inline std::vector<double> make_window(Window kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  const double denom = double(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = double(i) / denom;
    switch (kind) {
      case Window::hann: w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * x); break;
      case Window::hamming: w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * x); break;
      case Window::gaussian: {
        // Edge-zeroed Gaussian with the usual exp(-12 (x - 1/2)^2) shape.
        const double edge = std::exp(-12.0 * 0.25);
        w[i] = (std::exp(-12.0 * (x - 0.5) * (x - 0.5)) - edge) / (1.0 - edge);
        break;
      }
    }
  }
  // Exact symmetry regardless of floating-point rounding in cos().
  for (std::size_t i = 0; i < n / 2; ++i) w[n - 1 - i] = w[i];
  return w;
}

inline std::vector<std::vector<double>> frame_signal(const AudioBuffer& buf, const FrameGrid& grid) {
  if (grid.hop_s <= 0.0 || grid.hop_s > grid.frame_len_s)
    throw Error(Errc::invalid_spec, "frame grid needs 0 < hop <= frame length");
  const auto n = grid.frame_samples(buf.sample_rate);
  const auto h = grid.hop_samples(buf.sample_rate);
  const auto count = grid.frame_count(buf.samples.size(), buf.sample_rate);
  if (count == 0) throw Error(Errc::signal_too_short, "signal shorter than one frame");
  const auto w = make_window(grid.window, n);
  std::vector<std::vector<double>> frames(count, std::vector<double>(n));
  for (std::size_t f = 0; f < count; ++f)
    for (std::size_t i = 0; i < n; ++i) frames[f][i] = buf.samples[f * h + i] * w[i];
  return frames;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// FFT size used for a frame of n samples: next power of two, at least 1024.
inline std::size_t fft_size_for(std::size_t n) { return std::max<std::size_t>(1024, next_pow2(n)); }

namespace detail {

// FFTW plans with their own aligned buffers, one set per transform size and
// thread. Execution is thread-safe; the planner is not, hence the mutex.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct RealPlan {
  std::size_t n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr, backward = nullptr;

  explicit RealPlan(std::size_t size) : n(size) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_dft_r2c_1d(int(n), real, spec, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(int(n), spec, real, FFTW_ESTIMATE);
  }
  RealPlan(const RealPlan&) = delete;
  RealPlan& operator=(const RealPlan&) = delete;
  ~RealPlan() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward);
      fftw_destroy_plan(backward);
    }
    fftw_free(real);
    fftw_free(spec);
  }
};

struct ComplexPlan {
  std::size_t n = 0;
  fftw_complex* data = nullptr;
  fftw_plan forward = nullptr, backward = nullptr;

  explicit ComplexPlan(std::size_t size) : n(size) {
    data = fftw_alloc_complex(n);
    std::lock_guard lock(planner_mutex());
    forward = fftw_plan_dft_1d(int(n), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_1d(int(n), data, data, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ComplexPlan(const ComplexPlan&) = delete;
  ComplexPlan& operator=(const ComplexPlan&) = delete;
  ~ComplexPlan() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward);
      fftw_destroy_plan(backward);
    }
    fftw_free(data);
  }
};

template <class Plan>
Plan& plan_for(std::size_t n) {
  thread_local std::vector<std::unique_ptr<Plan>> cache;
  for (auto& p : cache)
    if (p->n == n) return *p;
  cache.push_back(std::make_unique<Plan>(n));
  return *cache.back();
}

}  // namespace detail

/// In-place complex FFT; size must be a power of two. The inverse is scaled
/// by 1/n.
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
  const std::size_t n = a.size();
  if (n < 2) return;
  if (n & (n - 1)) throw std::invalid_argument("fft: size must be a power of two");
  auto& p = detail::plan_for<detail::ComplexPlan>(n);
  std::memcpy(p.data, a.data(), n * sizeof(fftw_complex));
  fftw_execute(inverse ? p.backward : p.forward);
  std::memcpy(static_cast<void*>(a.data()), p.data, n * sizeof(fftw_complex));
  if (inverse)
    for (auto& x : a) x /= double(n);
}

struct Spectrum {
  std::vector<double> magnitudes;  // fft_size/2 + 1 bins
  double bin_hz = 0.0;

  double freq(std::size_t k) const { return double(k) * bin_hz; }
};

/// One-sided magnitude spectrum of an (already windowed) frame, zero-padded
/// to fft_size.
inline Spectrum magnitude_spectrum(std::span<const double> frame, std::size_t fft_size, double sample_rate) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) || frame.empty() || frame.size() > fft_size)
    throw std::invalid_argument("magnitude_spectrum: fft_size must be a power of two >= frame length");
  auto& p = detail::plan_for<detail::RealPlan>(fft_size);
  const std::size_t m = std::min(frame.size(), fft_size);
  std::copy_n(frame.begin(), m, p.real);
  std::fill(p.real + m, p.real + fft_size, 0.0);
  fftw_execute(p.forward);
  Spectrum s;
  s.bin_hz = sample_rate / double(fft_size);
  s.magnitudes.resize(fft_size / 2 + 1);
  for (std::size_t k = 0; k < s.magnitudes.size(); ++k) s.magnitudes[k] = std::hypot(p.spec[k][0], p.spec[k][1]);
  return s;
}

/// Linear (non-circular) autocorrelation acf[k] = sum_n x[n] x[n+k], for
/// k in [0, n). Computed through the power spectrum.
inline std::vector<double> autocorrelation(std::span<const double> frame) {
  const std::size_t n = frame.size();
  if (n == 0) return {};
  const std::size_t size = next_pow2(2 * n);
  auto& p = detail::plan_for<detail::RealPlan>(size);
  std::copy(frame.begin(), frame.end(), p.real);
  std::fill(p.real + n, p.real + size, 0.0);
  fftw_execute(p.forward);
  for (std::size_t k = 0; k <= size / 2; ++k) {
    p.spec[k][0] = p.spec[k][0] * p.spec[k][0] + p.spec[k][1] * p.spec[k][1];
    p.spec[k][1] = 0.0;
  }
  fftw_execute(p.backward);
  std::vector<double> acf(p.real, p.real + n);
  for (auto& v : acf) v /= double(size);
  return acf;
}

/// Lags 0..max_lag only, by direct summation (cheaper than the FFT route
/// for the short lag ranges of LPC analysis).
inline std::vector<double> autocorrelation(std::span<const double> frame, std::size_t max_lag) {
  const std::size_t n = frame.size();
  std::vector<double> acf(std::min(max_lag + 1, n), 0.0);
  for (std::size_t k = 0; k < acf.size(); ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += frame[i] * frame[i + k];
    acf[k] = s;
  }
  return acf;
}

struct LpcModel {
  std::vector<double> a;  // a[0] = 1; A(z) = sum a[k] z^-k
  double error = 0.0;     // final prediction error energy
};

/// Levinson-Durbin recursion on autocorrelation lags r[0..order].
inline LpcModel levinson_durbin(std::span<const double> r, int order) {
  LpcModel m;
  m.a.assign(std::size_t(order) + 1, 0.0);
  m.a[0] = 1.0;
  double err = r[0];
  if (!(err > 0.0)) return m;
  std::vector<double> tmp(m.a.size());
  for (int i = 1; i <= order; ++i) {
    double acc = r[std::size_t(i)];
    for (int j = 1; j < i; ++j) acc += m.a[std::size_t(j)] * r[std::size_t(i - j)];
    const double k = -acc / err;
    tmp = m.a;
    for (int j = 1; j < i; ++j) m.a[std::size_t(j)] = tmp[std::size_t(j)] + k * tmp[std::size_t(i - j)];
    m.a[std::size_t(i)] = k;
    err *= 1.0 - k * k;
    if (!(err > 0.0)) break;
  }
  m.error = std::max(err, 0.0);
  return m;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit linfit(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n < 2) throw Error(Errc::degenerate_abscissa, "need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0) throw Error(Errc::degenerate_abscissa, "all abscissae equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace vowelmark::dsp
