// Acceptance run: one PASS/FAIL line per criterion, preceded by the numbers
// behind each verdict. Exits non-zero if any criterion fails.

#include <bit>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "vowelmark/pipeline.hpp"

namespace vm = vowelmark;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<vm::VowelRecording> recordings_of(std::vector<vm::CohortRecording> c) {
  std::vector<vm::VowelRecording> out;
  for (auto& cr : c) out.push_back(std::move(cr.recording));
  return out;
}

std::vector<vm::RankedFeature> rank_all_vowels(const vm::CohortSpec& spec, double r_min) {
  const auto recs = recordings_of(vm::synth_cohort(spec));
  const auto m = vm::extract_all(recs);
  return vm::rank_features(m, *vm::find_grouping("all"), r_min);
}

// ---------------------------------------------------------------------------

bool table_fidelity() {
  const auto t0 = Clock::now();
  const auto verdicts = vm::table_consistency_check(vm::builtin_published_rows());
  const double elapsed = seconds_since(t0);
  std::size_t ok = 0;
  std::vector<std::string> flagged;
  for (const auto& v : verdicts) {
    if (v.ok)
      ++ok;
    else
      flagged.push_back(v.row.grouping + " / " + v.row.feature + " (r " + vm::format_r(v.row.r) + ", implied " +
                        vm::format_r(v.implied_r) + ")");
  }
  std::printf("  %zu rows checked, %zu within 0.02, %.3f s\n", verdicts.size(), ok, elapsed);
  for (const auto& f : flagged) std::printf("  flagged: %s\n", f.c_str());
  return flagged.size() == 1 && flagged[0].starts_with("back / mean MFCC1 VR (r 0.49") && ok + 1 == verdicts.size() &&
         elapsed < 1.0;
}

bool qualitative_finding() {
  const auto t0 = Clock::now();
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ranked = rank_all_vowels(vm::default_cohort_spec(seed), 0.0);
    int in_top3 = 0;
    std::string line;
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
      line += "  " + std::to_string(i + 1) + ". " + ranked[i].name + " " + vm::format_r(ranked[i].r);
      if ((ranked[i].name == "mean voiced segment length" || ranked[i].name == "voiced segments per second") &&
          ranked[i].r > 0.4)
        ++in_top3;
    }
    const bool ok = in_top3 == 2;
    passed += ok;
    std::printf("  seed %2llu %s:%s\n", static_cast<unsigned long long>(seed), ok ? "pass" : "FAIL", line.c_str());
  }
  const double elapsed = seconds_since(t0);
  std::printf("  %d/10 seeds, %.1f s\n", passed, elapsed);
  return passed >= 9 && elapsed < 60.0;
}

bool null_cohort() {
  int clean = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto spec = vm::default_cohort_spec(seed);
    spec.pos = spec.neg;
    const auto ranked = rank_all_vowels(spec, 0.3);
    clean += ranked.empty();
    std::printf("  seed %2llu: %zu features with r > .3%s%s\n", static_cast<unsigned long long>(seed), ranked.size(),
                ranked.empty() ? "" : ", top ", ranked.empty() ? "" : (ranked[0].name + " " + vm::format_r(ranked[0].r)).c_str());
  }
  std::printf("  %d/10 seeds clean\n", clean);
  return clean >= 8;
}

// Two-tailed p by listing every split of the ranks 1..n into the two groups.
double enumerated_p(std::span<const int> first_ranks, std::size_t n) {
  const std::size_t n1 = first_ranks.size();
  auto u_of = [&](unsigned mask) {
    int u = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u)
        for (std::size_t j = 0; j < n; ++j)
          if (!(mask >> j & 1u) && i > j) ++u;
    return u;
  };
  unsigned observed_mask = 0;
  for (int r : first_ranks) observed_mask |= 1u << (r - 1);
  const int observed = u_of(observed_mask);
  double total = 0, lower = 0, upper = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::size_t(std::popcount(mask)) != n1) continue;
    const int u = u_of(mask);
    total += 1;
    lower += u <= observed;
    upper += u >= observed;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

bool statistics_oracle() {
  struct Gap {
    double worst = 0.0;
    std::size_t over = 0;
    void add(double d) {
      worst = std::max(worst, d);
      over += d > 0.05;
    }
  };
  double exact_err = 0.0;
  Gap plain, corrected;
  std::size_t cases = 0;
  auto check = [&](const std::vector<double>& a, const std::vector<double>& b, std::span<const int> ranks) {
    const double oracle = enumerated_p(ranks, a.size() + b.size());
    const auto ex = vm::mann_whitney(a, b, vm::UMethod::exact);
    exact_err = std::max(exact_err, ex.method == vm::UMethod::exact ? std::abs(ex.p_two_tailed - oracle) : 1.0);
    plain.add(std::abs(vm::mann_whitney(a, b).p_two_tailed - ex.p_two_tailed));
    corrected.add(std::abs(
        vm::mann_whitney(a, b, vm::UTestOptions{vm::UMethod::normal_approx, true}).p_two_tailed - ex.p_two_tailed));
    ++cases;
  };

  // Every tie-free configuration is a choice of ranks for the first sample.
  for (std::size_t n1 = 1; n1 <= 6; ++n1)
    for (std::size_t n2 = 1; n2 <= 6; ++n2) {
      const std::size_t n = n1 + n2;
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::size_t(std::popcount(mask)) != n1) continue;
        std::vector<double> a, b;
        std::vector<int> ranks;
        for (std::size_t i = 0; i < n; ++i) {
          if (mask >> i & 1u) {
            a.push_back(double(i + 1));
            ranks.push_back(int(i + 1));
          } else {
            b.push_back(double(i + 1));
          }
        }
        check(a, b, ranks);
      }
    }
  const std::size_t exhaustive = cases;

  std::mt19937_64 gen(2024);
  std::normal_distribution<double> d;
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = d(gen);
    for (auto& x : b) x = d(gen);
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<int> ranks;
    for (double x : a) ranks.push_back(int(std::count_if(pooled.begin(), pooled.end(), [x](double y) { return y <= x; })));
    check(a, b, ranks);
  }

  std::printf("  %zu exhaustive + %zu random cases; max |exact - enumeration| = %.3g\n", exhaustive,
              cases - exhaustive, exact_err);
  std::printf("  normal approximation: max |approx - exact| = %.4f, %zu cases above 0.05\n", plain.worst, plain.over);
  std::printf("  (info) with continuity correction: max %.4f, %zu cases above 0.05\n", corrected.worst,
              corrected.over);
  return exact_err <= 1e-12 && plain.worst <= 0.05;
}

bool dsp_oracles() {
  bool all = true;
  auto verdict = [&](bool ok, const std::string& what) {
    std::printf("  %s %s\n", ok ? "ok  " : "FAIL", what.c_str());
    all = all && ok;
  };
  char buf[256];

  for (double hz : {80.0, 120.0, 200.0, 300.0, 400.0}) {
    vm::AudioBuffer b;
    b.samples.resize(16000);
    for (std::size_t i = 0; i < b.samples.size(); ++i) b.samples[i] = 0.5 * std::sin(2.0 * M_PI * hz * double(i) / 16000.0);
    const auto t = vm::estimate_f0(b);
    std::vector<double> f;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.voiced[i]) f.push_back(t.f0_hz[i]);
    const double m = median(f);
    std::snprintf(buf, sizeof buf, "tone %.0f Hz: median F0 %.2f Hz", hz, m);
    verdict(std::abs(m - hz) <= 0.01 * hz, buf);
  }

  auto measure = [](const vm::SynthSpec& s) {
    const auto b = vm::synth_vowel(s).first;
    return vm::perturbation(vm::pitch_marks(b, vm::estimate_f0(b)));
  };
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double prev = -1.0;
    bool increasing = true;
    std::string line = "jitter seed " + std::to_string(seed) + ":";
    bool within = true;
    for (double target : {0.3, 1.0, 2.0, 4.0}) {
      vm::SynthSpec s;
      s.seed = seed;
      s.jitter_pct = target;
      s.shimmer_pct = 2.0;
      s.hnr_db = 30.0;
      const double j = measure(s).jitter_local * 100.0;
      std::snprintf(buf, sizeof buf, " %.1f->%.2f%%", target, j);
      line += buf;
      within = within && std::abs(j - target) <= 0.5;
      increasing = increasing && j > prev;
      prev = j;
    }
    verdict(within && increasing, line + (increasing ? "" : " (not increasing)"));
  }
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::string line = "shimmer seed " + std::to_string(seed) + ":";
    bool within = true;
    for (double target : {1.0, 5.0, 10.0}) {
      vm::SynthSpec s;
      s.seed = seed;
      s.jitter_pct = 0.3;
      s.shimmer_pct = target;
      s.hnr_db = 30.0;
      const double sh = measure(s).shimmer_local * 100.0;
      std::snprintf(buf, sizeof buf, " %.0f->%.2f%%", target, sh);
      line += buf;
      within = within && std::abs(sh - target) <= 2.0;
    }
    verdict(within, line);
  }
  for (double target : {5.0, 10.0, 20.0}) {
    vm::SynthSpec s;
    s.jitter_pct = 0.3;
    s.shimmer_pct = 2.0;
    s.hnr_db = target;
    const auto b = vm::synth_vowel(s).first;
    const double h = median(vm::hnr(b, vm::estimate_f0(b)).hnr_db);
    std::snprintf(buf, sizeof buf, "HNR %.0f dB: median %.2f dB", target, h);
    verdict(std::abs(h - target) <= 3.0, buf);
  }
  for (vm::Vowel v : vm::kVowels) {
    const auto s = vm::vowel_template(v);
    const auto b = vm::synth_vowel(s).first;
    const auto vq = vm::voice_quality_tracks(b, vm::estimate_f0(b));
    std::string line = "formants /" + std::string(vm::to_string(v)) + "/:";
    bool ok = !vq.formants.frames.empty();
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> f;
      for (const auto& fr : vq.formants.frames) f.push_back(fr.freq_hz[k]);
      const double m = median(f), want = s.formants[k].center_hz;
      std::snprintf(buf, sizeof buf, " F%zu %.0f/%.0f", k + 1, m, want);
      line += buf;
      ok = ok && std::abs(m - want) <= 0.05 * want;
    }
    verdict(ok, line);
  }
  {
    vm::SynthSpec s = vm::vowel_template(vm::Vowel::e);
    s.hnr_db = 20.0;
    const auto b = vm::synth_vowel(s).first;
    const auto ref = vm::spectral_tracks(b);
    double worst = 0.0;
    for (double g : {0.1, 0.5, 1.0}) {
      auto sb = b;
      for (auto& x : sb.samples) x *= g;
      const auto t = vm::spectral_tracks(sb);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(t.mfcc[c][i] - ref.mfcc[c][i]));
    }
    std::snprintf(buf, sizeof buf, "MFCC1-4 under gains 0.1/0.5/1: max change %.2e", worst);
    verdict(worst <= 1e-3, buf);
  }
  return all;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool structural() {
  bool all = true;
  const auto recs = recordings_of(vm::synth_cohort(vm::default_cohort_spec(1)));
  auto with_silence = recs;
  vm::VowelRecording quiet;
  quiet.meta.participant_id = "silent";
  quiet.buffer.samples.assign(16000, 0.0);
  with_silence.push_back(quiet);
  const auto m = vm::extract_all(with_silence);
  std::size_t good = 0;
  for (const auto& row : m.rows) {
    bool finite = row.values.size() == 88;
    for (double v : row.values) finite = finite && std::isfinite(v);
    good += finite;
  }
  std::printf("  %zu/%zu recordings gave 88 finite values\n", good, m.rows.size());
  all = all && good == m.rows.size() && m.names.size() == 88;

  std::size_t resolved = 0;
  const auto& rows = vm::builtin_published_rows();
  for (const auto& r : rows) {
    const bool hit = vm::default_registry().index_of(vm::normalize_feature_name(r.feature)).has_value();
    resolved += hit;
    if (!hit) std::printf("  unresolved: %s\n", r.feature.c_str());
  }
  std::printf("  %zu/%zu published feature labels resolve\n", resolved, rows.size());
  all = all && resolved == rows.size();

  // Full file round: synth -> WAV + manifest -> extract -> compare, twice.
  const auto root = fs::temp_directory_path() / "vowelmark_acceptance";
  fs::remove_all(root);
  std::string first;
  bool same = true;
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / ("run" + std::to_string(run));
    vm::synth_to_directory(vm::json{{"n_per_group", 4}, {"seed", 11}}, std::nullopt, dir / "wav");
    const auto fm = vm::extract_manifest(dir / "wav/manifest.csv", {}, run == 0 ? 1u : vm::default_jobs());
    vm::write_feature_matrix(dir / "features.csv", fm);
    vm::RunConfig cfg;
    cfg.threshold = 0.0;
    vm::write_compare_outputs(dir / "cmp", vm::compare_groups(vm::load_feature_matrix(dir / "features.csv"), cfg));
    std::string bytes;
    for (const auto& e : std::vector<fs::path>{"features.csv", "cmp/ranking_all.full.csv", "cmp/ranking_front.csv",
                                               "cmp/boxplots.json", "wav/manifest.csv", "wav/pos01_a.wav"})
      bytes += slurp(dir / e) + '\x1f';
    if (run == 0)
      first = bytes;
    else
      same = bytes == first;
  }
  fs::remove_all(root);
  std::printf("  end-to-end outputs byte-identical across runs: %s\n", same ? "yes" : "no");
  return all && same;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    bool (*run)();
  };
  const Criterion criteria[] = {{"table fidelity", table_fidelity},
                                {"voiced-segment finding on synthetic cohorts", qualitative_finding},
                                {"null cohort", null_cohort},
                                {"Mann-Whitney oracle", statistics_oracle},
                                {"DSP oracles", dsp_oracles},
                                {"structure and determinism", structural}};
  std::vector<bool> results;
  int index = 1;
  for (const auto& c : criteria) {
    std::printf("criterion %d: %s\n", index++, c.name);
    std::fflush(stdout);
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::printf("  error: %s\n", e.what());
    }
    results.push_back(ok);
    std::fflush(stdout);
  }
  std::printf("\n");
  bool all = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::printf("criterion %zu %s: %s\n", i + 1, results[i] ? "PASS" : "FAIL", criteria[i].name);
    all = all && results[i];
  }
  return all ? 0 : 1;
}
