#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vowelmark {

inline constexpr int kWorkingRate = 16000;

enum class Group : std::uint8_t { neg, pos };
enum class Vowel : std::uint8_t { a, e, i, o, u };

inline constexpr std::array<Vowel, 5> kVowels{Vowel::a, Vowel::e, Vowel::i, Vowel::o, Vowel::u};

constexpr std::string_view to_string(Group g) noexcept { return g == Group::pos ? "pos" : "neg"; }

constexpr std::string_view to_string(Vowel v) noexcept {
  switch (v) {
    case Vowel::a: return "a";
    case Vowel::e: return "e";
    case Vowel::i: return "i";
    case Vowel::o: return "o";
    case Vowel::u: return "u";
  }
  return "?";
}

inline std::optional<Group> parse_group(std::string_view s) {
  if (s == "pos") return Group::pos;
  if (s == "neg") return Group::neg;
  return std::nullopt;
}

inline std::optional<Vowel> parse_vowel(std::string_view s) {
  for (Vowel v : kVowels)
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Mono signal with amplitudes in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kWorkingRate;

  double duration() const noexcept {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct SegmentManifestEntry {
  std::string source_path;
  std::string participant_id;
  Group group = Group::neg;
  Vowel vowel = Vowel::a;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct VowelRecording {
  SegmentManifestEntry meta;
  AudioBuffer buffer;
};

}  // namespace vowelmark
