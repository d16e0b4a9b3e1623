#pragma once

// WAV container parsing, sample-rate conversion and manifest-driven
// segmentation into single-vowel recordings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vowelmark/error.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

inline constexpr double kMinSegmentSeconds = 0.1;

namespace detail {

inline std::uint32_t read_u32le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline double decode_sample(const std::uint8_t* p, int bits, bool is_float) {
  if (is_float) {
    std::uint32_t raw = read_u32le(p);
    float f;
    std::memcpy(&f, &raw, sizeof f);
    return std::clamp(static_cast<double>(f), -1.0, 1.0);
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: return static_cast<std::int16_t>(read_u16le(p)) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32: return static_cast<std::int32_t>(read_u32le(p)) / 2147483648.0;
  }
  return 0.0;
}

}  // namespace detail

/// Parses a RIFF/WAVE byte stream into a normalized mono buffer. Integer PCM
/// is divided by the full-scale magnitude of its width; multi-channel data is
/// averaged into one channel.
inline AudioBuffer parse_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16le;
  using detail::read_u32le;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(Errc::malformed_header, "missing RIFF/WAVE magic");

  bool have_fmt = false;
  std::uint16_t format_tag = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = read_u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error(Errc::malformed_header, "truncated chunk");

    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw Error(Errc::malformed_header, "fmt chunk too small");
      const std::uint8_t* f = bytes.data() + body;
      format_tag = read_u16le(f);
      channels = read_u16le(f + 2);
      rate = read_u32le(f + 4);
      block_align = read_u16le(f + 12);
      bits = read_u16le(f + 14);
      if (format_tag == 0xFFFE) {
        if (size < 26) throw Error(Errc::malformed_header, "extensible fmt chunk too small");
        format_tag = read_u16le(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw Error(Errc::malformed_header, "data chunk before fmt chunk");
      const bool is_float = format_tag == 3;
      if (format_tag != 1 && !is_float)
        throw Error(Errc::unsupported_encoding, "format tag " + std::to_string(format_tag));
      if (is_float && bits != 32)
        throw Error(Errc::unsupported_encoding, "float samples must be 32-bit");
      if (!is_float && bits != 8 && bits != 16 && bits != 24 && bits != 32)
        throw Error(Errc::unsupported_encoding, std::to_string(bits) + "-bit PCM");
      if (channels == 0 || rate == 0)
        throw Error(Errc::malformed_header, "zero channels or sample rate");
      const std::size_t bytes_per_sample = bits / 8;
      const std::size_t frame_bytes =
          block_align ? block_align : static_cast<std::size_t>(channels) * bytes_per_sample;
      if (frame_bytes < channels * bytes_per_sample)
        throw Error(Errc::malformed_header, "block alignment smaller than a sample frame");

      AudioBuffer out;
      out.sample_rate = static_cast<int>(rate);
      const std::size_t frames = size / frame_bytes;
      out.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        const std::uint8_t* fr = bytes.data() + body + i * frame_bytes;
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c)
          acc += detail::decode_sample(fr + c * bytes_per_sample, bits, is_float);
        out.samples[i] = acc / channels;
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(Errc::malformed_header, have_fmt ? "no data chunk" : "no fmt chunk");
}

/// Serializes as canonical 44-byte-header 16-bit mono PCM.
inline std::vector<std::uint8_t> serialize_wav16(const AudioBuffer& buf) {
  using detail::put_u16le;
  using detail::put_u32le;
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, 1);
  put_u16le(out, 1);
  put_u32le(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32le(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_bytes);
  for (double s : buf.samples) {
    const long q = std::lround(s * 32768.0);
    put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_unreadable, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::file_unreadable, path.string());
  return bytes;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) { return parse_wav(read_file_bytes(path)); }

inline void write_wav16(const std::filesystem::path& path, const AudioBuffer& buf) {
  const auto bytes = serialize_wav16(buf);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::file_unreadable, "cannot write " + path.string());
}

namespace detail {

struct SincKernel {
  double cutoff;      // cycles per input sample
  double half_width;  // input samples
  double beta;
  double inv_i0_beta;

  double operator()(double t) const {
    const double u = t / half_width;
    if (u <= -1.0 || u >= 1.0) return 0.0;
    const double x = 2.0 * cutoff * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    return 2.0 * cutoff * sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - u * u)) * inv_i0_beta;
  }
};

}  // namespace detail

struct ResamplerOptions {
  int taps_per_phase = 64;
  double kaiser_beta = 8.6;
  double passband = 0.9;  // cutoff as a fraction of the lower Nyquist rate
};

/// Band-limited rational-ratio resampler (Kaiser-windowed sinc evaluated in
/// polyphase form). The kernel spans taps_per_phase samples at the lower of
/// the two rates and is centered, so there is no group delay.
inline AudioBuffer resample(const AudioBuffer& buf, int target_rate, const ResamplerOptions& opt = {}) {
  if (target_rate <= 0 || buf.sample_rate <= 0)
    throw Error(Errc::invalid_spec, "sample rates must be positive");
  if (buf.sample_rate == target_rate) return buf;

  const long g = std::gcd(static_cast<long>(buf.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;       // L
  const long down = buf.sample_rate / g;  // M
  const double ratio = std::min(1.0, double(target_rate) / buf.sample_rate);

  detail::SincKernel kernel{};
  kernel.cutoff = 0.5 * ratio * opt.passband;
  kernel.half_width = 0.5 * opt.taps_per_phase / ratio;
  kernel.beta = opt.kaiser_beta;
  kernel.inv_i0_beta = 1.0 / std::cyl_bessel_i(0.0, opt.kaiser_beta);

  const long n_in = static_cast<long>(buf.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  const long reach = static_cast<long>(std::ceil(kernel.half_width));
  const long taps = 2 * reach + 1;

  // One coefficient row per phase when the phase count is modest.
  const bool tabulate = up <= 2048;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up * taps));
    for (long ph = 0; ph < up; ++ph) {
      const double frac = double(ph) / up;
      for (long k = -reach; k <= reach; ++k) table[std::size_t(ph * taps + k + reach)] = kernel(frac - k);
    }
  }

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long num = n * down;
    const long base = num / up;
    const long phase = num % up;
    const double frac = double(phase) / up;
    double acc = 0.0;
    for (long k = -reach; k <= reach; ++k) {
      const long j = base + k;
      if (j < 0 || j >= n_in) continue;
      const double h = tabulate ? table[std::size_t(phase * taps + k + reach)] : kernel(frac - k);
      acc += buf.samples[std::size_t(j)] * h;
    }
    out.samples[std::size_t(n)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

inline constexpr std::string_view kManifestHeader = "path,participant_id,group,vowel,start_s,end_s";

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits one CSV record; double quotes may wrap a field containing commas.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double v;
  if (!(in >> v) || !(in >> std::ws).eof())
    throw Error(Errc::bad_manifest, context + ": not a number: '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads a segment manifest. Relative paths are resolved against base_dir.
inline std::vector<SegmentManifestEntry> parse_manifest(std::istream& in,
                                                        const std::filesystem::path& base_dir = {}) {
  std::vector<SegmentManifestEntry> entries;
  std::string line;
  if (!std::getline(in, line)) return entries;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  if (detail::trim(line) != kManifestHeader)
    throw Error(Errc::bad_manifest, "expected header '" + std::string(kManifestHeader) + "'");

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto context = "manifest line " + std::to_string(line_no);
    const auto f = detail::split_csv(line);
    if (f.size() != 6) throw Error(Errc::bad_manifest, context + ": expected 6 fields");
    SegmentManifestEntry e;
    std::filesystem::path p(f[0]);
    e.source_path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
    e.participant_id = f[1];
    const auto g = parse_group(f[2]);
    if (!g) throw Error(Errc::bad_manifest, context + ": group must be pos or neg");
    e.group = *g;
    const auto v = parse_vowel(f[3]);
    if (!v) throw Error(Errc::bad_manifest, context + ": vowel must be one of a,e,i,o,u");
    e.vowel = *v;
    e.start_s = detail::parse_double(f[4], context);
    e.end_s = detail::parse_double(f[5], context);
    if (e.start_s < 0.0 || e.end_s <= e.start_s)
      throw Error(Errc::bad_manifest, context + ": need 0 <= start_s < end_s");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<SegmentManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, path.string());
  return parse_manifest(in, path.parent_path());
}

inline void write_manifest(std::ostream& out, std::span<const SegmentManifestEntry> entries) {
  out << kManifestHeader << '\n';
  std::ostringstream num;
  num.imbue(std::locale::classic());
  num.precision(10);  // sample-exact for durations up to hours at 16 kHz
  for (const auto& e : entries) {
    num.str({});
    num << e.start_s << ',' << e.end_s;
    out << e.source_path << ',' << e.participant_id << ',' << to_string(e.group) << ','
        << to_string(e.vowel) << ',' << num.str() << '\n';
  }
}

/// Cuts [start_s, end_s) out of an already-decoded source and brings it to
/// the working rate. `row` is the 1-based manifest row used in messages.
inline VowelRecording cut_segment(const SegmentManifestEntry& entry, const AudioBuffer& source, int row) {
  const auto context = "manifest row " + std::to_string(row) + " (" + entry.source_path + ")";
  // Half a sample of slack absorbs decimal rounding of end times.
  const double slack = 0.5 / source.sample_rate;
  if (entry.start_s < 0.0 || entry.end_s <= entry.start_s || entry.end_s > source.duration() + slack)
    throw Error(Errc::range_out_of_bounds,
                context + ": range [" + std::to_string(entry.start_s) + ", " + std::to_string(entry.end_s) +
                    ") exceeds source duration " + std::to_string(source.duration()) + " s");
  if (entry.end_s - entry.start_s < kMinSegmentSeconds)
    throw Error(Errc::segment_too_short, context + ": segment shorter than 0.1 s");

  const auto n = static_cast<long>(source.samples.size());
  const long b = std::clamp(std::lround(entry.start_s * source.sample_rate), 0L, n);
  const long e = std::clamp(std::lround(entry.end_s * source.sample_rate), b, n);
  AudioBuffer cut;
  cut.sample_rate = source.sample_rate;
  cut.samples.assign(source.samples.begin() + b, source.samples.begin() + e);
  return VowelRecording{entry, resample(cut, kWorkingRate)};
}

/// Loads every manifest entry as a 16 kHz mono recording. Each source file is
/// decoded once even when several entries reference it.
inline std::vector<VowelRecording> segment_recordings(std::span<const SegmentManifestEntry> manifest) {
  std::vector<VowelRecording> out;
  out.reserve(manifest.size());
  std::map<std::string, AudioBuffer> cache;
  int row = 0;
  for (const auto& entry : manifest) {
    ++row;
    auto it = cache.find(entry.source_path);
    if (it == cache.end()) {
      AudioBuffer buf;
      try {
        buf = read_wav(entry.source_path);
      } catch (const Error& err) {
        throw Error(err.code(), "manifest row " + std::to_string(row) + ": " + err.what());
      }
      it = cache.emplace(entry.source_path, std::move(buf)).first;
    }
    out.push_back(cut_segment(entry, it->second, row));
  }
  return out;
}

}  // namespace vowelmark
