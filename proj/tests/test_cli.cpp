// Runs the built command-line tool as a subprocess. The binary's path comes
// from VOWELMARK_CLI, which the build sets for this test.

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "testing.hpp"
#include "vowelmark/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vowelmark;

namespace {

struct Run {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run cli(const std::string& args, const fs::path& work, const std::string& env = "") {
  const char* exe = std::getenv("VOWELMARK_CLI");
  if (!exe) throw std::runtime_error("VOWELMARK_CLI is not set");
  const auto out = work / "stdout.txt", err = work / "stderr.txt";
  const std::string cmd =
      env + " " + quote(exe) + " " + args + " > " + quote(out.string()) + " 2> " + quote(err.string());
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::size_t columns(const std::string& line) { return detail::split_csv(line).size(); }

// A small two-group cohort written once and shared by the tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = vmtest::scratch_dir("cli");
    write_text(root_ / "small.json", R"({"n_per_group": 2, "seed": 5})");
    const auto r = cli("synth --spec " + quote((root_ / "small.json").string()) + " --out " +
                           quote((root_ / "small").string()),
                       root_);
    ASSERT_EQ(r.status, 0) << r.err;
  }
  static fs::path root_;
  fs::path work() const {
    auto p = root_ / ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::create_directories(p);
    return p;
  }
};
fs::path CliTest::root_;

}  // namespace

TEST_F(CliTest, ExtractFullCohort) {
  const auto w = work();
  write_text(w / "cohort.json", "{}");
  ASSERT_EQ(cli("synth --spec " + quote((w / "cohort.json").string()) + " --out " + quote((w / "rec").string()), w)
                .status,
            0);
  const auto r = cli("extract --manifest " + quote((w / "rec/manifest.csv").string()) + " --out " +
                         quote((w / "feat").string()),
                     w);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto rows = lines(slurp(w / "feat/features.csv"));
  ASSERT_EQ(rows.size(), 111u);
  for (const auto& row : rows) ASSERT_EQ(columns(row), 3u + 88u) << row;
}

TEST_F(CliTest, EmptyManifestGivesHeaderOnly) {
  const auto w = work();
  write_text(w / "manifest.csv", std::string(kManifestHeader) + "\n");
  const auto r =
      cli("extract --manifest " + quote((w / "manifest.csv").string()) + " --out " + quote((w / "feat").string()), w);
  EXPECT_EQ(r.status, 0) << r.err;
  const auto rows = lines(slurp(w / "feat/features.csv"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(columns(rows[0]), 91u);
}

TEST_F(CliTest, UnreadableRowIsNamed) {
  const auto w = work();
  auto m = lines(slurp(root_ / "small/manifest.csv"));
  ASSERT_GE(m.size(), 8u);
  // Data row 7 is line 8 of the file; point it at a file that does not exist.
  m[7] = "missing.wav" + m[7].substr(m[7].find(','));
  std::string text;
  for (const auto& l : m) text += l + "\n";
  write_text(root_ / "small/broken.csv", text);
  const auto r = cli("extract --manifest " + quote((root_ / "small/broken.csv").string()) + " --out " +
                         quote((w / "feat").string()),
                     w);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("row 7"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("FileUnreadable"), std::string::npos) << r.err;
}

TEST_F(CliTest, CompareWritesEveryGrouping) {
  const auto w = work();
  ASSERT_EQ(cli("extract --manifest " + quote((root_ / "small/manifest.csv").string()) + " --out " +
                    quote((w / "feat").string()),
                w)
                .status,
            0);
  const auto features = quote((w / "feat/features.csv").string());
  auto r = cli("compare --features " + features + " --out " + quote((w / "cmp").string()), w);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const auto& g : canonical_groupings()) {
    EXPECT_TRUE(fs::exists(w / "cmp" / ("ranking_" + g.label + ".csv"))) << g.label;
    EXPECT_TRUE(fs::exists(w / "cmp" / ("ranking_" + g.label + ".full.csv"))) << g.label;
  }
  const auto box = json::parse(slurp(w / "cmp/boxplots.json"));
  EXPECT_TRUE(box.is_array());

  r = cli("compare --features " + features + " --out " + quote((w / "none").string()) + " --threshold 1.0", w);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const auto& g : canonical_groupings())
    EXPECT_EQ(lines(slurp(w / "none" / ("ranking_" + g.label + ".csv"))).size(), 1u) << g.label;

  r = cli("compare --features " + features + " --out " + quote((w / "bad").string()) + " --threshold 2", w);
  EXPECT_EQ(r.status, 1);
}

TEST_F(CliTest, SingleGroupIsEmptyGroup) {
  const auto w = work();
  ASSERT_EQ(cli("extract --manifest " + quote((root_ / "small/manifest.csv").string()) + " --out " +
                    quote((w / "feat").string()),
                w)
                .status,
            0);
  std::string text;
  for (const auto& l : lines(slurp(w / "feat/features.csv")))
    if (l.find(",pos,") == std::string::npos) text += l + "\n";
  write_text(w / "neg_only.csv", text);
  const auto r = cli("compare --features " + quote((w / "neg_only.csv").string()) + " --out " +
                         quote((w / "cmp").string()),
                     w);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("EmptyGroup"), std::string::npos) << r.err;
}

TEST_F(CliTest, BoxplotCommand) {
  const auto w = work();
  ASSERT_EQ(cli("extract --manifest " + quote((root_ / "small/manifest.csv").string()) + " --out " +
                    quote((w / "feat").string()),
                w)
                .status,
            0);
  const auto features = quote((w / "feat/features.csv").string());
  auto r = cli("boxplot --features " + features + " --feature 'mean F0' --vowel a", w);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  for (const auto& e : j) EXPECT_LE(e.at("q1").get<double>(), e.at("q3").get<double>());
  EXPECT_EQ(cli("boxplot --features " + features + " --feature 'mean F0' --vowel y", w).status, 1);
  EXPECT_EQ(cli("boxplot --features " + features + " --feature nonsense --vowel a", w).status, 2);
}

TEST_F(CliTest, CheckTables) {
  const auto w = work();
  auto r = cli("checktables", w);
  EXPECT_EQ(r.status, 0) << r.err;
  const auto rows = lines(r.out);
  EXPECT_EQ(rows.size(), builtin_published_rows().size() + 1);
  std::size_t known = 0;
  for (const auto& l : rows) known += l.find("ANOMALY (known)") != std::string::npos;
  EXPECT_EQ(known, 1u);

  r = cli("checktables --tolerance 0.2", w);
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out.find("ANOMALY"), std::string::npos);

  write_text(w / "tampered.csv", "grouping,rank,feature,r,p,n\ni,1,voiced segments per second,.66,.030,22\n");
  r = cli("checktables --fixture " + quote((w / "tampered.csv").string()), w);
  EXPECT_EQ(r.status, 3);
  EXPECT_NE(r.out.find("ANOMALY"), std::string::npos);
}

TEST_F(CliTest, SynthIsDeterministic) {
  const auto w = work();
  write_text(w / "one.json", R"({"f0_hz": 140, "jitter_pct": 1.0, "hnr_db": 15, "vowel": "e", "seed": 3})");
  const auto spec = quote((w / "one.json").string());
  ASSERT_EQ(cli("synth --spec " + spec + " --out " + quote((w / "a").string()), w).status, 0);
  ASSERT_EQ(cli("synth --spec " + spec + " --out " + quote((w / "b").string()), w).status, 0);
  ASSERT_EQ(cli("synth --spec " + spec + " --out " + quote((w / "c").string()) + " --seed 4", w).status, 0);
  const auto a = slurp(w / "a/synth01_e.wav");
  EXPECT_GT(a.size(), 44u);
  EXPECT_EQ(a, slurp(w / "b/synth01_e.wav"));
  EXPECT_NE(a, slurp(w / "c/synth01_e.wav"));
  EXPECT_EQ(slurp(w / "a/manifest.csv"), slurp(w / "b/manifest.csv"));
}

TEST_F(CliTest, InvalidSynthSpecs) {
  const auto w = work();
  write_text(w / "overlap.json", R"({"f0_hz": 120, "breaks": [[0.5, 0.4], [0.8, 0.3]]})");
  auto r = cli("synth --spec " + quote((w / "overlap.json").string()) + " --out " + quote((w / "o").string()), w);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("InvalidSpec"), std::string::npos) << r.err;
  write_text(w / "broken.json", "{ not json");
  EXPECT_EQ(cli("synth --spec " + quote((w / "broken.json").string()) + " --out " + quote((w / "x").string()), w)
                .status,
            2);
}

TEST_F(CliTest, EndToEndIsByteIdentical) {
  const auto w = work();
  const auto manifest = quote((root_ / "small/manifest.csv").string());
  ASSERT_EQ(cli("--jobs 1 extract --manifest " + manifest + " --out " + quote((w / "f1").string()), w).status, 0);
  ASSERT_EQ(cli("--jobs 4 extract --manifest " + manifest + " --out " + quote((w / "f2").string()), w).status, 0);
  const auto f1 = slurp(w / "f1/features.csv");
  EXPECT_EQ(f1, slurp(w / "f2/features.csv"));
  ASSERT_EQ(cli("compare --features " + quote((w / "f1/features.csv").string()) + " --out " +
                    quote((w / "c1").string()) + " --threshold 0",
                w)
                .status,
            0);
  ASSERT_EQ(cli("compare --features " + quote((w / "f2/features.csv").string()) + " --out " +
                    quote((w / "c2").string()) + " --threshold 0",
                w)
                .status,
            0);
  for (const auto& g : canonical_groupings())
    EXPECT_EQ(slurp(w / "c1" / ("ranking_" + g.label + ".full.csv")),
              slurp(w / "c2" / ("ranking_" + g.label + ".full.csv")));
  EXPECT_EQ(slurp(w / "c1/boxplots.json"), slurp(w / "c2/boxplots.json"));
}

TEST_F(CliTest, ConfigFileAndEnvironment) {
  const auto w = work();
  const auto features = quote((w / "feat/features.csv").string());
  write_text(w / "good.conf", "# comment\nreport.threshold = 1.0\nstats.method = exact\n");
  write_text(w / "unknown.conf", "report.thresh = 0.2\n");
  write_text(w / "badvalue.conf", "report.threshold = lots\n");
  ASSERT_EQ(cli("extract --manifest " + quote((root_ / "small/manifest.csv").string()) + " --out " +
                    quote((w / "feat").string()),
                w)
                .status,
            0);
  auto r = cli("--config " + quote((w / "good.conf").string()) + " compare --features " + features + " --out " +
                   quote((w / "c").string()),
               w);
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(lines(slurp(w / "c/ranking_all.csv")).size(), 1u);

  r = cli("--config " + quote((w / "unknown.conf").string()) + " checktables", w);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("report.thresh"), std::string::npos) << r.err;
  EXPECT_EQ(cli("--config " + quote((w / "badvalue.conf").string()) + " checktables", w).status, 1);

  r = cli("compare --features " + features + " --out " + quote((w / "e").string()),
          w, "VOWELMARK_CONFIG=" + quote((w / "good.conf").string()));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(lines(slurp(w / "e/ranking_all.csv")).size(), 1u);
}

TEST_F(CliTest, UsageErrors) {
  const auto w = work();
  EXPECT_EQ(cli("", w).status, 1);
  EXPECT_EQ(cli("frobnicate", w).status, 1);
  EXPECT_EQ(cli("extract --out x", w).status, 1);
  EXPECT_EQ(cli("compare --features f --out o --method bayes", w).status, 1);
  EXPECT_EQ(cli("--help", w).status, 0);
}

TEST(ReportFormat, RoundingOfRAndP) {
  EXPECT_EQ(format_r(0.4633), "0.46");
  EXPECT_EQ(format_p(0.030), "0.030");
  EXPECT_EQ(format_p(0.0104), "0.010");
  EXPECT_EQ(format_p(4e-5), "4.0e-05");
  EXPECT_EQ(format_p(1.0), "1.000");
}
