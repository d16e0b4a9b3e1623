#pragma once

// Two-group comparison of feature values: Mann-Whitney U with effect size
// r = |z|/sqrt(N), feature ranking per vowel grouping, boxplot summaries, and
// the consistency check of published (r, p, N) triples.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "vowelmark/error.hpp"
#include "vowelmark/functionals.hpp"
#include "vowelmark/types.hpp"

namespace vowelmark {

enum class UMethod { normal_approx, exact };

constexpr std::string_view to_string(UMethod m) noexcept { return m == UMethod::exact ? "exact" : "normal_approx"; }

inline std::optional<UMethod> parse_method(std::string_view s) {
  if (s == "approx" || s == "normal_approx") return UMethod::normal_approx;
  if (s == "exact") return UMethod::exact;
  return std::nullopt;
}

struct UTestResult {
  double u = 0.0;  // for the first sample: pairs where a > b, ties count 1/2
  double z = 0.0;
  double p_two_tailed = 1.0;
  UMethod method = UMethod::normal_approx;
  std::size_t n1 = 0, n2 = 0;
  std::string diagnostic;  // set when an exact request fell back
};

struct UTestOptions {
  UMethod method = UMethod::normal_approx;
  bool continuity_correction = false;
};

/// Largest N = n1 + n2 for which the exact null distribution is used.
inline constexpr std::size_t kExactMaxN = 20;

namespace stats {

/// Midranks (1-based) of the pooled sample, plus the tie term sum(t^3 - t).
inline std::pair<std::vector<double>, double> midranks(std::span<const double> pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
    const double mid = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
    const double t = double(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  return {rank, tie_term};
}

/// Number of n1-subsets of ranks {1..n1+n2} for each U = rank sum - n1(n1+1)/2.
inline std::vector<std::uint64_t> u_null_counts(std::size_t n1, std::size_t n2) {
  // c[i][j][u]: ways with i first-sample and j second-sample values placed;
  // the largest value goes to sample 1 (adding j to U) or to sample 2.
  const std::size_t umax = n1 * n2;
  std::vector<std::vector<std::vector<std::uint64_t>>> c(
      n1 + 1, std::vector<std::vector<std::uint64_t>>(n2 + 1, std::vector<std::uint64_t>(umax + 1, 0)));
  for (std::size_t i = 0; i <= n1; ++i)
    for (std::size_t j = 0; j <= n2; ++j) {
      if (i == 0 || j == 0) {
        c[i][j][0] = 1;
        continue;
      }
      for (std::size_t u = 0; u <= i * j; ++u) {
        std::uint64_t v = c[i][j - 1][u];
        if (u >= j) v += c[i - 1][j][u - j];
        c[i][j][u] = v;
      }
    }
  return c[n1][n2];
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_quantile(double q) {
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), q);
}

}  // namespace stats

inline UTestResult mann_whitney(std::span<const double> a, std::span<const double> b, const UTestOptions& opt = {}) {
  if (a.empty() || b.empty()) throw Error(Errc::empty_group, "Mann-Whitney needs at least one value per group");
  UTestResult res;
  res.n1 = a.size();
  res.n2 = b.size();
  const double n1 = double(a.size()), n2 = double(b.size()), n = n1 + n2;

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto [rank, tie_term] = stats::midranks(pooled);
  const double r1 = std::accumulate(rank.begin(), rank.begin() + long(a.size()), 0.0);
  res.u = r1 - n1 * (n1 + 1.0) / 2.0;

  const double mu = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - (n > 1.0 ? tie_term / (n * (n - 1.0)) : 0.0));
  double dev = res.u - mu;
  if (opt.continuity_correction) dev = dev > 0.0 ? std::max(0.0, dev - 0.5) : std::min(0.0, dev + 0.5);
  res.z = var > 0.0 ? dev / std::sqrt(var) : 0.0;
  res.p_two_tailed = std::clamp(2.0 * stats::normal_cdf(-std::abs(res.z)), std::numeric_limits<double>::min(), 1.0);
  res.method = UMethod::normal_approx;

  if (opt.method == UMethod::exact) {
    if (tie_term > 0.0) {
      res.diagnostic = std::string(errc_name(Errc::exact_with_ties)) + ": ties present, normal approximation used";
    } else if (pooled.size() > kExactMaxN) {
      res.diagnostic = "exact test limited to N <= " + std::to_string(kExactMaxN) + ", normal approximation used";
    } else {
      const auto counts = stats::u_null_counts(a.size(), b.size());
      const double total = double(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
      const auto u = static_cast<std::size_t>(std::llround(res.u));
      const std::uint64_t lower = std::accumulate(counts.begin(), counts.begin() + long(u) + 1, std::uint64_t{0});
      const std::uint64_t upper = std::accumulate(counts.begin() + long(u), counts.end(), std::uint64_t{0});
      res.p_two_tailed = std::min(1.0, 2.0 * double(std::min(lower, upper)) / total);
      res.method = UMethod::exact;
    }
  }
  return res;
}

inline UTestResult mann_whitney(std::span<const double> a, std::span<const double> b, UMethod method) {
  return mann_whitney(a, b, UTestOptions{method, false});
}

inline double effect_size_r(double z, std::size_t n_total) {
  if (n_total < 2) throw std::invalid_argument("effect size needs at least two observations");
  return std::abs(z) / std::sqrt(double(n_total));
}

struct GroupingSpec {
  std::string label;
  std::vector<Vowel> vowels;

  bool contains(Vowel v) const { return std::find(vowels.begin(), vowels.end(), v) != vowels.end(); }
};

/// Each vowel alone, the front pair /i/ /e/, the back pair /u/ /o/, and all.
inline std::vector<GroupingSpec> canonical_groupings() {
  std::vector<GroupingSpec> g;
  for (Vowel v : {Vowel::i, Vowel::e, Vowel::u, Vowel::o, Vowel::a}) g.push_back({std::string(to_string(v)), {v}});
  g.push_back({"front", {Vowel::i, Vowel::e}});
  g.push_back({"back", {Vowel::u, Vowel::o}});
  g.push_back({"all", {kVowels.begin(), kVowels.end()}});
  return g;
}

inline std::optional<GroupingSpec> find_grouping(std::string_view label) {
  for (auto& g : canonical_groupings())
    if (g.label == label) return g;
  return std::nullopt;
}

struct RankedFeature {
  std::string name;
  double r = 0.0;
  double p = 1.0;
  std::size_t rank = 0;
  UTestResult test;
};

/// Highest r first; equal r by ascending p, then by name.
inline bool ranks_before(const RankedFeature& x, const RankedFeature& y) {
  if (x.r != y.r) return x.r > y.r;
  if (x.p != y.p) return x.p < y.p;
  return x.name < y.name;
}

/// Values of one feature column split by group, restricted to the grouping's
/// vowels. Every recording counts as its own observation.
inline std::pair<std::vector<double>, std::vector<double>> split_groups(const FeatureMatrix& m, std::size_t column,
                                                                        const GroupingSpec& g) {
  std::vector<double> pos, neg;
  for (const auto& row : m.rows) {
    if (!g.contains(row.vowel)) continue;
    (row.group == Group::pos ? pos : neg).push_back(row.values.at(column));
  }
  return {std::move(pos), std::move(neg)};
}

inline std::vector<RankedFeature> rank_features(const FeatureMatrix& m, const GroupingSpec& g, double r_min,
                                                const UTestOptions& opt = {}) {
  std::size_t npos = 0, nneg = 0;
  for (const auto& row : m.rows)
    if (g.contains(row.vowel)) ++(row.group == Group::pos ? npos : nneg);
  if (npos == 0 || nneg == 0)
    throw Error(Errc::empty_group, "grouping '" + g.label + "' has " + std::to_string(npos) + " pos and " +
                                       std::to_string(nneg) + " neg recordings");
  std::vector<RankedFeature> out;
  for (std::size_t c = 0; c < m.names.size(); ++c) {
    const auto [pos, neg] = split_groups(m, c, g);
    RankedFeature f;
    f.name = m.names[c];
    f.test = mann_whitney(pos, neg, opt);
    f.r = effect_size_r(f.test.z, pos.size() + neg.size());
    f.p = f.test.p_two_tailed;
    if (f.r > r_min) out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), ranks_before);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
  return out;
}

struct BoxplotSummary {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;
  std::vector<double> outliers;
};

inline BoxplotSummary boxplot_summary(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("boxplot of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  BoxplotSummary b;
  b.q1 = percentile(v, 0.25);
  b.median = percentile(v, 0.5);
  b.q3 = percentile(v, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.whisker_hi = b.median;
  bool any = false;
  for (double x : v) {
    if (x < lo || x > hi) {
      b.outliers.push_back(x);
      continue;
    }
    if (!any) b.whisker_lo = x;
    b.whisker_hi = x;
    any = true;
  }
  return b;
}

// Published ranking rows and their internal consistency.

struct PublishedRow {
  std::string grouping;
  int rank = 0;
  std::string feature;  // as printed, LaTeX markup included
  double r = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

inline std::vector<PublishedRow> read_published_rows(std::istream& in) {
  std::vector<PublishedRow> rows;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "grouping,rank,feature,r,p,n")
        throw Error(Errc::bad_manifest, "published rows: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    const std::string ctx = "published rows line " + std::to_string(lineno);
    if (f.size() != 6) throw Error(Errc::bad_manifest, ctx + ": expected 6 fields");
    PublishedRow r;
    r.grouping = f[0];
    r.rank = int(parse_number(f[1], ctx));
    r.feature = f[2];
    r.r = parse_number(f[3], ctx);
    r.p = parse_number(f[4], ctx);
    r.n = std::size_t(parse_number(f[5], ctx));
    rows.push_back(std::move(r));
  }
  if (!header) throw Error(Errc::bad_manifest, "published rows: missing header");
  return rows;
}

inline std::vector<PublishedRow> load_published_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_unreadable, "cannot open " + path.string());
  return read_published_rows(in);
}

inline const std::vector<PublishedRow>& builtin_published_rows() {
  static const auto rows = load_published_rows(data_dir() / "published_rankings.csv");
  return rows;
}

struct ConsistencyVerdict {
  PublishedRow row;
  double implied_r = 0.0;  // Phi^-1(1 - p/2) / sqrt(N)
  bool ok = false;
};

inline double implied_effect_size(double p, std::size_t n) {
  return stats::normal_quantile(1.0 - p / 2.0) / std::sqrt(double(n));
}

inline std::vector<ConsistencyVerdict> table_consistency_check(std::span<const PublishedRow> rows,
                                                               double tolerance = 0.02) {
  std::vector<ConsistencyVerdict> out;
  for (const auto& row : rows) {
    ConsistencyVerdict v{row, implied_effect_size(row.p, row.n), false};
    v.ok = std::abs(row.r - v.implied_r) <= tolerance;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace vowelmark
