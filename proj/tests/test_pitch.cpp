#include <gtest/gtest.h>

#include "testing.hpp"
#include "vowelmark/pitch.hpp"
#include "vowelmark/synth.hpp"

using namespace vowelmark;

namespace {

std::vector<double> voiced_f0(const F0Track& t) {
  std::vector<double> v;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.voiced[i]) v.push_back(t.f0_hz[i]);
  return v;
}

AudioBuffer scaled(AudioBuffer b, double a) {
  for (auto& s : b.samples) s *= a;
  return b;
}

SynthSpec vowel_spec(std::uint64_t seed, double jitter = 0.0, double shimmer = 0.0, double hnr_db = 40.0) {
  SynthSpec s = vowel_template(Vowel::a);
  s.seed = seed;
  s.jitter_pct = jitter;
  s.shimmer_pct = shimmer;
  s.hnr_db = hnr_db;
  return s;
}

PerturbationMeasures measure(const AudioBuffer& b) {
  const auto t = estimate_f0(b);
  const auto marks = pitch_marks(b, t);
  return perturbation(marks);
}

}  // namespace

TEST(EstimateF0, SilenceIsUnvoiced) {
  const auto t = estimate_f0(vmtest::silence(1.0));
  ASSERT_GT(t.size(), 0u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_FALSE(t.voiced[i]);
    EXPECT_EQ(t.f0_hz[i], 0.0);
  }
}

TEST(EstimateF0, Sine200) {
  const auto t = estimate_f0(vmtest::tone(200.0, 2.0));
  ASSERT_GT(t.size(), 10u);
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    ASSERT_TRUE(t.voiced[i]) << i;
    ASSERT_NEAR(t.f0_hz[i], 200.0, 2.0) << i;
  }
}

TEST(EstimateF0, TrackInvariants) {
  const auto [b, truth] = synth_vowel(vowel_spec(3, 1.0, 3.0, 20.0));
  const auto t = estimate_f0(b);
  const auto st = t.f0_semitones();
  for (std::size_t i = 0; i < t.size(); ++i) {
    ASSERT_EQ(t.f0_hz[i] > 0.0, bool(t.voiced[i]));
    if (t.voiced[i]) {
      ASSERT_GE(t.f0_hz[i], 55.0);
      ASSERT_LE(t.f0_hz[i], 1000.0);
      ASSERT_NEAR(st[i], 12.0 * std::log2(t.f0_hz[i] / 27.5), 1e-12);
    }
  }
}

TEST(EstimateF0, SynthVowelMedianF0) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto [b, truth] = synth_vowel(vowel_spec(seed, 0.5, 3.0, 20.0));
    const auto f0 = voiced_f0(estimate_f0(b));
    ASSERT_FALSE(f0.empty());
    EXPECT_NEAR(vmtest::median(f0), 120.0, 2.4) << "seed " << seed;
  }
}

TEST(EstimateF0, RangeLimits) {
  // Below the 55 Hz floor nothing may be reported as voiced at 40 Hz.
  const auto t = estimate_f0(vmtest::tone(40.0, 1.0));
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.voiced[i]) {
      EXPECT_GE(t.f0_hz[i], 55.0);
    }
  const auto hi = voiced_f0(estimate_f0(vmtest::tone(900.0, 1.0)));
  ASSERT_FALSE(hi.empty());
  EXPECT_NEAR(vmtest::median(hi), 900.0, 9.0);
}

TEST(VoicedSegments, FullyVoiced) {
  F0Track t;
  t.f0_hz.assign(195, 150.0);
  t.voiced.assign(195, true);
  const auto s = voiced_segment_stats(t, 2.0);
  ASSERT_EQ(s.segment_bounds.size(), 1u);
  EXPECT_DOUBLE_EQ(s.segments_per_second, 0.5);
  EXPECT_NEAR(s.mean_length_s, 1.95, 1e-9);  // 195 frames of 10 ms
  EXPECT_EQ(s.length_sd_s, 0.0);
}

TEST(VoicedSegments, AllUnvoiced) {
  F0Track t;
  t.f0_hz.assign(100, 0.0);
  t.voiced.assign(100, false);
  const auto s = voiced_segment_stats(t, 1.0);
  EXPECT_TRUE(s.segment_bounds.empty());
  EXPECT_EQ(s.segments_per_second, 0.0);
  EXPECT_EQ(s.mean_length_s, 0.0);
  EXPECT_EQ(s.length_sd_s, 0.0);
}

TEST(VoicedSegments, ShortRunsAreNotSegments) {
  F0Track t;
  t.voiced = {false, true, true, false, true, true, true, true, false, true, false};
  for (bool v : t.voiced) t.f0_hz.push_back(v ? 100.0 : 0.0);
  const auto s = voiced_segment_stats(t, 0.11, 3);
  EXPECT_EQ(s.segment_bounds.size(), 1u);
}

TEST(VoicedSegments, TwoBreaksGiveThreeSegments) {
  SynthSpec s = vowel_spec(5, 0.3, 2.0, 30.0);
  s.duration_s = 3.0;
  s.breaks = {{1.0, 0.3}, {2.0, 0.3}};
  const auto [b, truth] = synth_vowel(s);
  const auto t = estimate_f0(b);
  const auto st = voiced_segment_stats(t, b.duration());
  EXPECT_EQ(st.segment_bounds.size(), 3u);
  EXPECT_NEAR(st.segments_per_second, 1.0, 0.2);
  EXPECT_NEAR(st.mean_length_s, 0.8, 0.1);
  double total = 0.0;
  for (auto [a, e] : st.segment_bounds) total += e - a;
  EXPECT_NEAR(st.mean_length_s * double(st.segment_bounds.size()), total, 1e-9);
  EXPECT_LE(total, b.duration());
}

TEST(VoicedSegments, OneMoreBreakOneMoreSegment) {
  SynthSpec s = vowel_spec(8, 0.3, 2.0, 30.0);
  s.duration_s = 3.0;
  s.breaks = {{1.0, 0.25}};
  const auto one = voiced_segment_stats(estimate_f0(synth_vowel(s).first), 3.0);
  s.breaks.push_back({2.0, 0.25});
  const auto two = voiced_segment_stats(estimate_f0(synth_vowel(s).first), 3.0);
  EXPECT_EQ(two.segment_bounds.size(), one.segment_bounds.size() + 1);
  EXPECT_LT(two.mean_length_s, one.mean_length_s);
}

TEST(PitchMarks, Sine100) {
  const auto b = vmtest::tone(100.0, 1.0);
  const auto marks = pitch_marks(b, estimate_f0(b));
  EXPECT_NEAR(double(marks.size()), 100.0, 10.0);
  for (std::size_t i = 1; i < marks.size(); ++i)
    if (marks[i].segment == marks[i - 1].segment) {
      ASSERT_NEAR(marks[i].time_s - marks[i - 1].time_s, 0.010, 0.0002);
    }
}

TEST(PitchMarks, AmplitudeModulationKeepsCount) {
  const auto plain = vmtest::tone(100.0, 1.0);
  auto am = plain;
  for (std::size_t i = 0; i < am.samples.size(); ++i)
    am.samples[i] *= 0.75 + 0.25 * std::sin(2.0 * M_PI * 3.0 * double(i) / 16000.0);
  const auto a = pitch_marks(plain, estimate_f0(plain));
  const auto b = pitch_marks(am, estimate_f0(am));
  EXPECT_EQ(a.size(), b.size());
}

TEST(PitchMarks, SpacingWithinHalfToTwicePeriod) {
  const auto [b, truth] = synth_vowel(vowel_spec(4, 1.0, 3.0, 25.0));
  const auto t = estimate_f0(b);
  const auto marks = pitch_marks(b, t);
  ASSERT_GT(marks.size(), 100u);
  for (std::size_t i = 1; i < marks.size(); ++i) {
    if (marks[i].segment != marks[i - 1].segment) continue;
    const double dt = marks[i].time_s - marks[i - 1].time_s;
    ASSERT_GT(dt, 0.5 / 120.0 * 0.9);
    ASSERT_LT(dt, 2.0 / 120.0 * 1.1);
  }
}

TEST(PitchMarks, SilenceHasNoVoicedContent) {
  const auto b = vmtest::silence(1.0);
  try {
    pitch_marks(b, estimate_f0(b));
    FAIL() << "expected NoVoicedContent";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_voiced_content);
  }
}

TEST(Jitter, ConstantPeriodsGiveZero) {
  const std::vector<double> p(50, 0.008);
  EXPECT_EQ(jitter_local(p), 0.0);
}

TEST(Jitter, AlternatingPeriods) {
  std::vector<double> p;
  for (int i = 0; i < 40; ++i) p.push_back(i % 2 ? 0.0102 : 0.0100);
  EXPECT_NEAR(jitter_local(p), 0.2 / 10.1, 1e-9);
}

TEST(Jitter, TooFewPeriods) {
  try {
    jitter_local(std::vector<double>{0.01});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_few_periods);
  }
}

TEST(Shimmer, ConstantAndAlternating) {
  EXPECT_EQ(shimmer_local(std::vector<double>(10, 0.3)), 0.0);
  std::vector<double> a;
  for (int i = 0; i < 40; ++i) a.push_back(i % 2 ? 0.9 : 1.0);
  EXPECT_NEAR(shimmer_local(a), 0.1 / 0.95, 1e-9);
  EXPECT_THROW(shimmer_local(std::vector<double>{}), Error);
}

TEST(Perturbation, NeverAcrossSegments) {
  // Two segments with identical alternating cycles but a very different
  // period at the junction; only within-segment pairs may count.
  std::vector<PitchMark> marks;
  double t = 0.0;
  for (int i = 0; i < 21; ++i) {
    marks.push_back({t, i % 2 ? 0.9 : 1.0, 0});
    t += i % 2 ? 0.0102 : 0.0100;
  }
  t += 0.3;
  for (int i = 0; i < 21; ++i) {
    marks.push_back({t, i % 2 ? 0.9 : 1.0, 1});
    t += i % 2 ? 0.0102 : 0.0100;
  }
  const auto pm = perturbation(marks);
  EXPECT_EQ(pm.periods_s.size(), pm.peak_amps.size());
  for (double p : pm.periods_s) EXPECT_LT(p, 0.011);
  EXPECT_NEAR(pm.jitter_local, 0.2 / 10.1, 1e-6);
  EXPECT_NEAR(pm.shimmer_local, 0.1 / 0.95, 1e-6);
}

TEST(Perturbation, HealthyJitterBand) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pm = measure(synth_vowel(vowel_spec(seed, 0.3, 2.0, 30.0)).first);
    EXPECT_GE(pm.jitter_local * 100.0, 0.1) << seed;
    EXPECT_LE(pm.jitter_local * 100.0, 1.0) << seed;
  }
}

TEST(Perturbation, ShimmerRecovered) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pm = measure(synth_vowel(vowel_spec(seed, 0.3, 5.0, 30.0)).first);
    EXPECT_NEAR(pm.shimmer_local * 100.0, 5.0, 2.0) << seed;
  }
}

TEST(Perturbation, JitterAndShimmerIncreaseWithSeverity) {
  double prev_j = -1.0, prev_s = -1.0;
  for (double level : {0.3, 1.0, 2.0, 4.0}) {
    double j = 0.0, s = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      j += measure(synth_vowel(vowel_spec(seed, level, 2.0, 30.0)).first).jitter_local;
      s += measure(synth_vowel(vowel_spec(seed, 0.3, 2.5 * level, 30.0)).first).shimmer_local;
    }
    EXPECT_GT(j, prev_j) << level;
    EXPECT_GT(s, prev_s) << level;
    prev_j = j;
    prev_s = s;
  }
}

TEST(Hnr, PureSineIsAbove30) {
  const auto b = vmtest::tone(200.0, 1.0);
  const auto h = hnr(b, estimate_f0(b));
  ASSERT_FALSE(h.hnr_db.empty());
  for (double v : h.hnr_db) ASSERT_GE(v, 30.0);
}

TEST(Hnr, SynthesizedNoiseLevel) {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto b = synth_vowel(vowel_spec(seed, 0.3, 2.0, 10.0)).first;
    const auto h = hnr(b, estimate_f0(b));
    EXPECT_NEAR(vmtest::median(h.hnr_db), 10.0, 3.0) << seed;
  }
}

TEST(Hnr, WhiteNoiseIsUnvoicedOrNegative) {
  for (std::uint32_t seed : {1u, 2u, 3u}) {
    const auto b = vmtest::white_noise(1.0, seed, 0.2);
    const auto t = estimate_f0(b);
    bool any = false;
    for (bool v : t.voiced) any = any || v;
    if (!any) continue;
    for (double v : hnr(b, t).hnr_db) EXPECT_LE(v, 0.0);
  }
}

TEST(Hnr, ClampAndNoVoicedContent) {
  EXPECT_EQ(hnr_from_correlation(1.0), 40.0);
  EXPECT_EQ(hnr_from_correlation(0.0), -20.0);
  EXPECT_NEAR(hnr_from_correlation(0.5), 0.0, 1e-12);
  const auto b = vmtest::silence(0.5);
  EXPECT_THROW(hnr(b, estimate_f0(b)), Error);
}

TEST(Hnr, SavedPeriodicityMatchesRecomputation) {
  const auto b = synth_vowel(vowel_spec(6, 1.0, 4.0, 15.0)).first;
  const auto t = estimate_f0(b);
  const auto a = hnr(b, t), c = hnr(t);
  ASSERT_EQ(a.frames, c.frames);
  for (std::size_t i = 0; i < a.hnr_db.size(); ++i) EXPECT_NEAR(a.hnr_db[i], c.hnr_db[i], 1e-9);
}

TEST(GainInvariance, PitchAndPerturbation) {
  const auto b = synth_vowel(vowel_spec(9, 1.0, 4.0, 20.0)).first;
  const auto t = estimate_f0(b);
  const auto pm = perturbation(pitch_marks(b, t));
  const auto h = hnr(t);
  for (double a : {0.1, 0.35, 1.0}) {
    const auto sb = scaled(b, a);
    const auto st = estimate_f0(sb);
    ASSERT_EQ(st.voiced, t.voiced) << a;
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_NEAR(st.f0_hz[i], t.f0_hz[i], 1e-3 * t.f0_hz[i] + 1e-12);
    const auto spm = perturbation(pitch_marks(sb, st));
    EXPECT_NEAR(spm.jitter_local, pm.jitter_local, 1e-3 * pm.jitter_local);
    EXPECT_NEAR(spm.shimmer_local, pm.shimmer_local, 1e-3 * pm.shimmer_local);
    const auto sh = hnr(st);
    ASSERT_EQ(sh.hnr_db.size(), h.hnr_db.size());
    for (std::size_t i = 0; i < h.hnr_db.size(); ++i)
      ASSERT_NEAR(sh.hnr_db[i], h.hnr_db[i], 1e-3 * std::max(1.0, std::abs(h.hnr_db[i])));
  }
}
