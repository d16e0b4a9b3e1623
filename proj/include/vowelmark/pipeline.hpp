#pragma once

// Orchestration shared by the command-line tool and the end-to-end tests:
// JSON synthesis specs, cohorts written as WAV + manifest, parallel feature
// extraction, ranked report tables and boxplot data.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "vowelmark/audio.hpp"
#include "vowelmark/config.hpp"
#include "vowelmark/functionals.hpp"
#include "vowelmark/stats.hpp"
#include "vowelmark/synth.hpp"

namespace vowelmark {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON specs

namespace io {

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> known, const std::string& what) {
  if (!j.is_object()) throw Error(Errc::invalid_spec, what + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(Errc::invalid_spec, what + ": unknown field '" + key + "'");
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::invalid_spec, what + ": field '" + key + "' has the wrong type");
  }
}

inline Range read_range(const json& j, const char* key, Range def, const std::string& what) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    Range r{v[0].get<double>(), v[1].get<double>()};
    if (r.lo > r.hi) throw Error(Errc::invalid_spec, what + ": range '" + key + "' has lo > hi");
    return r;
  }
  throw Error(Errc::invalid_spec, what + ": '" + key + "' must be a number or [lo, hi]");
}

}  // namespace io

inline SynthSpec synth_spec_from_json(const json& j) {
  const std::string what = "synth spec";
  io::reject_unknown(j,
                     {"f0_hz", "duration_s", "jitter_pct", "shimmer_pct", "hnr_db", "formants", "breaks", "seed",
                      "peak", "sample_rate", "vowel"},
                     what);
  SynthSpec s;
  io::read_field(j, "f0_hz", s.f0_hz, what);
  io::read_field(j, "duration_s", s.duration_s, what);
  io::read_field(j, "jitter_pct", s.jitter_pct, what);
  io::read_field(j, "shimmer_pct", s.shimmer_pct, what);
  io::read_field(j, "hnr_db", s.hnr_db, what);
  io::read_field(j, "seed", s.seed, what);
  io::read_field(j, "peak", s.peak, what);
  io::read_field(j, "sample_rate", s.sample_rate, what);
  if (j.contains("vowel")) {
    const auto v = parse_vowel(j.at("vowel").get<std::string>());
    if (!v) throw Error(Errc::invalid_spec, what + ": vowel must be one of a,e,i,o,u");
    const auto t = vowel_template(*v);
    s.formants = t.formants;
  }
  auto pairs = [&](const char* key) {
    std::vector<std::pair<double, double>> out;
    if (!j.contains(key)) return out;
    const auto& a = j.at(key);
    if (!a.is_array()) throw Error(Errc::invalid_spec, what + ": '" + key + "' must be an array of [x, y] pairs");
    for (const auto& e : a) {
      if (!(e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()))
        throw Error(Errc::invalid_spec, what + ": '" + key + "' entries must be [x, y] number pairs");
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return out;
  };
  if (j.contains("formants")) {
    s.formants.clear();
    for (auto [c, b] : pairs("formants")) s.formants.push_back({c, b});
  }
  for (auto [start, len] : pairs("breaks")) s.breaks.push_back({start, len});
  synth::validate(s);
  return s;
}

inline json to_json(const SynthSpec& s) {
  json j;
  j["f0_hz"] = s.f0_hz;
  j["duration_s"] = s.duration_s;
  j["jitter_pct"] = s.jitter_pct;
  j["shimmer_pct"] = s.shimmer_pct;
  j["hnr_db"] = s.hnr_db;
  j["formants"] = json::array();
  for (const auto& f : s.formants) j["formants"].push_back({f.center_hz, f.bandwidth_hz});
  j["breaks"] = json::array();
  for (const auto& b : s.breaks) j["breaks"].push_back({b.start_s, b.length_s});
  j["seed"] = s.seed;
  j["peak"] = s.peak;
  j["sample_rate"] = s.sample_rate;
  return j;
}

inline CohortProfile cohort_profile_from_json(const json& j, const CohortProfile& base, const std::string& what) {
  io::reject_unknown(j,
                     {"f0_hz", "f0_recording_factor", "formant_scale", "formant_recording_scale", "peak", "jitter_pct",
                      "shimmer_pct", "hnr_db", "duration_s", "lead_s", "tail_s", "breaks", "break_len_s",
                      "min_voiced_piece_s"},
                     what);
  CohortProfile p = base;
  p.f0_hz = io::read_range(j, "f0_hz", p.f0_hz, what);
  p.f0_recording_factor = io::read_range(j, "f0_recording_factor", p.f0_recording_factor, what);
  p.formant_scale = io::read_range(j, "formant_scale", p.formant_scale, what);
  p.formant_recording_scale = io::read_range(j, "formant_recording_scale", p.formant_recording_scale, what);
  p.peak = io::read_range(j, "peak", p.peak, what);
  p.jitter_pct = io::read_range(j, "jitter_pct", p.jitter_pct, what);
  p.shimmer_pct = io::read_range(j, "shimmer_pct", p.shimmer_pct, what);
  p.hnr_db = io::read_range(j, "hnr_db", p.hnr_db, what);
  p.duration_s = io::read_range(j, "duration_s", p.duration_s, what);
  p.lead_s = io::read_range(j, "lead_s", p.lead_s, what);
  p.tail_s = io::read_range(j, "tail_s", p.tail_s, what);
  const Range br = io::read_range(j, "breaks", {double(p.breaks_min), double(p.breaks_max)}, what);
  if (br.lo < 0.0 || br.lo != std::floor(br.lo) || br.hi != std::floor(br.hi))
    throw Error(Errc::invalid_spec, what + ": breaks must be non-negative integers");
  p.breaks_min = int(br.lo);
  p.breaks_max = int(br.hi);
  p.break_len_s = io::read_range(j, "break_len_s", p.break_len_s, what);
  io::read_field(j, "min_voiced_piece_s", p.min_voiced_piece_s, what);
  if (p.f0_hz.lo < 55.0 || p.f0_hz.hi > 1000.0) throw Error(Errc::invalid_spec, what + ": f0_hz outside [55, 1000]");
  if (p.jitter_pct.lo < 0.0 || p.shimmer_pct.lo < 0.0)
    throw Error(Errc::invalid_spec, what + ": jitter_pct and shimmer_pct must be >= 0");
  if (p.duration_s.lo <= 0.0 || p.break_len_s.lo < 0.0 || p.lead_s.lo < 0.0 || p.tail_s.lo < 0.0)
    throw Error(Errc::invalid_spec, what + ": durations must be positive");
  return p;
}

/// A cohort spec: {"n_per_group", "seed", "neg": {...}, "pos": {...}}.
/// Profile fields take a number or a [lo, hi] range; omitted fields keep
/// the defaults of default_cohort_spec().
inline CohortSpec cohort_spec_from_json(const json& j) {
  io::reject_unknown(j, {"n_per_group", "seed", "neg", "pos"}, "cohort spec");
  CohortSpec c = default_cohort_spec();
  io::read_field(j, "n_per_group", c.n_per_group, "cohort spec");
  io::read_field(j, "seed", c.seed, "cohort spec");
  if (j.contains("neg")) c.neg = cohort_profile_from_json(j.at("neg"), c.neg, "cohort spec neg");
  if (j.contains("pos")) c.pos = cohort_profile_from_json(j.at("pos"), c.pos, "cohort spec pos");
  if (c.n_per_group < 2) throw Error(Errc::invalid_spec, "n_per_group must be at least 2");
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::invalid_spec, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Writing recordings

/// Writes each recording as <participant>_<vowel>.wav plus manifest.csv with
/// paths relative to the directory; returns the manifest entries.
inline std::vector<SegmentManifestEntry> write_recordings(const std::filesystem::path& dir,
                                                          std::span<const VowelRecording> recs) {
  std::filesystem::create_directories(dir);
  std::vector<SegmentManifestEntry> manifest;
  for (const auto& r : recs) {
    SegmentManifestEntry e = r.meta;
    const std::string file = e.participant_id + "_" + std::string(to_string(e.vowel)) + ".wav";
    write_wav16(dir / file, r.buffer);
    e.source_path = file;
    e.start_s = 0.0;
    e.end_s = r.buffer.duration();
    manifest.push_back(std::move(e));
  }
  std::ofstream out(dir / "manifest.csv", std::ios::binary);
  if (!out) throw Error(Errc::file_unreadable, "cannot write " + (dir / "manifest.csv").string());
  write_manifest(out, manifest);
  return manifest;
}

/// A spec with "f0_hz" is one recording; anything else is a cohort spec.
/// `seed`, when given, replaces the seed in the file.
inline std::vector<SegmentManifestEntry> synth_to_directory(const json& spec, std::optional<std::uint64_t> seed,
                                                            const std::filesystem::path& dir,
                                                            const RunConfig& cfg = {}) {
  std::vector<VowelRecording> recs;
  if (spec.is_object() && spec.contains("f0_hz")) {
    SynthSpec s = synth_spec_from_json(spec);
    if (seed) s.seed = *seed;
    VowelRecording r;
    r.meta.participant_id = "synth01";
    if (spec.contains("vowel")) r.meta.vowel = *parse_vowel(spec.at("vowel").get<std::string>());
    r.buffer = synth_vowel(s).first;
    recs.push_back(std::move(r));
  } else {
    CohortSpec c = cohort_spec_from_json(spec);
    if (seed) c.seed = *seed;
    c.formants = cfg.vowel_formants;
    for (auto& cr : synth_cohort(c)) recs.push_back(std::move(cr.recording));
  }
  return write_recordings(dir, recs);
}

// ---------------------------------------------------------------------------
// Extraction

inline unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Feature vectors in input order; recordings are spread over `jobs` threads.
inline FeatureMatrix extract_all(std::span<const VowelRecording> recs, const ExtractConfig& cfg = {},
                                 unsigned jobs = default_jobs(), const FeatureRegistry& reg = default_registry()) {
  FeatureMatrix m;
  m.names = reg.names();
  m.rows.resize(recs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < recs.size();) {
      try {
        m.rows[i] = extract_features(recs[i], reg, cfg);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = recs.size();
      }
    }
  };
  jobs = std::clamp<unsigned>(jobs, 1, std::max<std::size_t>(1, recs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return m;
}

inline FeatureMatrix extract_manifest(const std::filesystem::path& manifest, const ExtractConfig& cfg = {},
                                      unsigned jobs = default_jobs()) {
  const auto entries = read_manifest(manifest);
  const auto recs = segment_recordings(entries);
  return extract_all(recs, cfg, jobs);
}

inline void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::file_unreadable, "cannot write " + path.string());
  write_feature_csv(out, m.names, m.rows);
}

inline FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open " + path.string());
  return read_feature_csv(in);
}

// ---------------------------------------------------------------------------
// Reports

/// r with two decimals, as in the published tables.
inline std::string format_r(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

/// p with three decimals; below 0.01 two significant digits in exponent
/// form instead, so that a printed row still reproduces its r within 0.02.
inline std::string format_p(double p) {
  char buf[32];
  if (p >= 0.01)
    std::snprintf(buf, sizeof buf, "%.3f", p);
  else
    std::snprintf(buf, sizeof buf, "%.1e", p);
  return buf;
}

inline void write_ranking_table(std::ostream& out, std::span<const RankedFeature> ranked) {
  out << "rank,feature,r,p,n1,n2,method\n";
  for (const auto& f : ranked)
    out << f.rank << ',' << csv_field(f.name) << ',' << format_r(f.r) << ',' << format_p(f.p) << ',' << f.test.n1
        << ',' << f.test.n2 << ',' << to_string(f.test.method) << '\n';
}

/// Full-precision sibling of the human table, with U and z.
inline void write_ranking_full(std::ostream& out, std::span<const RankedFeature> ranked) {
  out << "rank,feature,r,p,n1,n2,method,u,z\n";
  for (const auto& f : ranked)
    out << f.rank << ',' << csv_field(f.name) << ',' << format_sig(f.r, 17) << ',' << format_sig(f.p, 17) << ','
        << f.test.n1 << ',' << f.test.n2 << ',' << to_string(f.test.method) << ',' << format_sig(f.test.u, 17)
        << ',' << format_sig(f.test.z, 17) << '\n';
}

inline json to_json(const BoxplotSummary& b) {
  return json{{"q1", b.q1},
              {"median", b.median},
              {"q3", b.q3},
              {"whisker_lo", b.whisker_lo},
              {"whisker_hi", b.whisker_hi},
              {"outliers", b.outliers}};
}

/// Boxplot data for one feature and vowel, one entry per group.
inline json boxplot_entries(const FeatureMatrix& m, std::size_t column, Vowel v) {
  json out = json::array();
  const GroupingSpec g{std::string(to_string(v)), {v}};
  const auto [pos, neg] = split_groups(m, column, g);
  for (auto [group, values] : {std::pair{Group::neg, &neg}, std::pair{Group::pos, &pos}}) {
    if (values->empty()) continue;
    json e = to_json(boxplot_summary(*values));
    e["feature"] = m.names[column];
    e["vowel"] = to_string(v);
    e["group"] = to_string(group);
    out.push_back(std::move(e));
  }
  return out;
}

struct CompareResult {
  std::vector<std::pair<GroupingSpec, std::vector<RankedFeature>>> tables;
  json boxplots = json::array();
  std::vector<std::string> diagnostics;
};

inline CompareResult compare_groups(const FeatureMatrix& m, const RunConfig& cfg = {},
                                    const std::vector<GroupingSpec>& groupings = canonical_groupings()) {
  CompareResult res;
  for (const auto& g : groupings) {
    auto ranked = rank_features(m, g, cfg.threshold, cfg.test);
    for (const auto& f : ranked)
      if (!f.test.diagnostic.empty()) res.diagnostics.push_back(g.label + " / " + f.name + ": " + f.test.diagnostic);
    res.tables.emplace_back(g, std::move(ranked));
  }
  // Figure-style boxplots: per vowel, every feature separating that vowel's
  // groups with r above the boxplot threshold.
  for (Vowel v : kVowels) {
    const GroupingSpec g{std::string(to_string(v)), {v}};
    std::size_t np = 0, nn = 0;
    for (const auto& row : m.rows)
      if (row.vowel == v) ++(row.group == Group::pos ? np : nn);
    if (np == 0 || nn == 0) continue;
    for (const auto& f : rank_features(m, g, cfg.boxplot_threshold, cfg.test)) {
      for (auto& e : boxplot_entries(m, *m.column(f.name), v)) {
        e["r"] = f.r;
        res.boxplots.push_back(std::move(e));
      }
    }
  }
  return res;
}

inline void write_compare_outputs(const std::filesystem::path& dir, const CompareResult& res) {
  std::filesystem::create_directories(dir);
  for (const auto& [g, ranked] : res.tables) {
    std::ofstream human(dir / ("ranking_" + g.label + ".csv"), std::ios::binary);
    std::ofstream full(dir / ("ranking_" + g.label + ".full.csv"), std::ios::binary);
    if (!human || !full) throw Error(Errc::file_unreadable, "cannot write reports in " + dir.string());
    write_ranking_table(human, ranked);
    write_ranking_full(full, ranked);
  }
  std::ofstream box(dir / "boxplots.json", std::ios::binary);
  if (!box) throw Error(Errc::file_unreadable, "cannot write " + (dir / "boxplots.json").string());
  box << res.boxplots.dump(2) << '\n';
}

}  // namespace vowelmark
