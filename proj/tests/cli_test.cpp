// Copyright 2026 The lddscan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Runs the lddscan binary end to end and checks exit codes and outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lddscan/io.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;

namespace lddscan {
namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lddscan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(LDDSCAN_CLI_PATH) + " " + args + " >" + path("stdout.txt") + " 2>" +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const { return read_text_file(path(name)); }

  void write(const std::string& name, const std::string& bytes) const { write_text_file(path(name), bytes); }

  // Images whose rows all repeat one random 0/255 pattern; within the
  // pattern each pixel copies its left neighbor with probability 0.7.
  void write_striped_images(const std::string& name, std::size_t count, std::uint64_t seed) const {
    std::string bytes = {0, 0, 8, 3};
    auto be32 = [&bytes](std::uint32_t v) {
      for (int s = 24; s >= 0; s -= 8) bytes.push_back(static_cast<char>((v >> s) & 0xff));
    };
    be32(static_cast<std::uint32_t>(count));
    be32(28);
    be32(28);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::string row(28, char(0));
      for (std::size_t c = 0; c < row.size(); ++c)
        row[c] = c > 0 && rng() % 10 < 7 ? row[c - 1] : (rng() % 2 ? char(255) : char(0));
      for (int r = 0; r < 28; ++r) bytes += row;
    }
    write(name, bytes);
  }

  // A first-order Markov text: each character repeats its predecessor with
  // probability 0.7, so MI decays with lag.
  void write_markov_text(const std::string& name, std::size_t length, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::string text(length, 'a');
    for (std::size_t i = 1; i < length; ++i) text[i] = rng() % 10 < 7 ? text[i - 1] : char('a' + rng() % 8);
    write(name, text);
  }

  std::vector<double> curve_mi(const std::string& name) const {
    std::ifstream in(path(name));
    std::vector<double> out;
    for (const auto& p : read_curve_csv(in).points) out.push_back(p.mi);
    return out;
  }

  fs::path dir_;
};

json power_fit_doc(std::size_t crossing) {
  ClassifiedFit f;
  f.decay_class = DecayClass::power_law;
  f.power = PowerLawFit{-1.0, std::log(0.3), 0.99, 1, 1000, 50, 0, 0.1};
  f.noise_crossing_d = crossing;
  f.max_sampled_lag = 1000;
  return fit_json({f, "constructed", nullptr});
}

TEST_F(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("analyze --input x"), 1);
  EXPECT_EQ(run("analyze --input x --max-lag 3 --out y --mode pixels"), 1);
  EXPECT_EQ(run("permute --input x --out y"), 1);
  EXPECT_EQ(run("analyze --help"), 0);
}

TEST_F(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(run("analyze --input " + path("missing.txt") + " --max-lag 3 --out " + path("c.csv")), 2);
  write("bad.idx", "not an idx file at all");
  EXPECT_EQ(run("permute --input " + path("bad.idx") + " --seed 1 --out " + path("p.idx")), 2);
  write("bad.csv", "lag,mi\n1,2\n");
  EXPECT_EQ(run("fit --curve " + path("bad.csv") + " --out " + path("f.json")), 2);
  write("bad.json", "{}");
  EXPECT_EQ(run("schedule --fit " + path("bad.json") + " --layers 3 --out " + path("s.json")), 2);
}

TEST_F(Cli, AnalyzeRejectsMaxLagAtOrBeyondLongestSequence) {
  write("short.txt", "abcdefghij");
  EXPECT_EQ(run("analyze --input " + path("short.txt") + " --max-lag 10 --out " + path("c.csv")), 1);
  EXPECT_EQ(run("analyze --input " + path("short.txt") + " --max-lag 0 --out " + path("c.csv")), 1);
  EXPECT_EQ(run("analyze --input " + path("short.txt") + " --max-lag 9 --min-pairs 1 --out " + path("c.csv")), 0);
}

TEST_F(Cli, ConstantFileHasZeroMiEverywhere) {
  write("const.txt", std::string(5000, 'q'));
  ASSERT_EQ(run("analyze --input " + path("const.txt") + " --max-lag 1000 --out " + path("c.csv")), 0);
  const std::string csv = read("c.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n', 23) + 1), "lag,mi_nats,pair_count\n1,0,4999\n");
  for (double mi : curve_mi("c.csv")) EXPECT_EQ(mi, 0.0);
  EXPECT_TRUE(fs::exists(path("c.csv.json")));
  // Nothing to fit on an all-zero curve.
  EXPECT_EQ(run("fit --curve " + path("c.csv") + " --out " + path("f.json")), 2);
}

TEST_F(Cli, SidecarDescribesTheRun) {
  write_markov_text("m.txt", 20000, 1);
  ASSERT_EQ(run("analyze --input " + path("m.txt") + " --mode char --max-lag 100 --min-pairs 50 "
                "--bias-correction miller-madow --out " + path("c.csv")),
            0);
  const json side = read_json_file(path("c.csv.json"));
  EXPECT_EQ(side.at("kind"), "decay_curve_meta");
  EXPECT_EQ(side.at("mode"), "char");
  EXPECT_EQ(side.at("alphabet_size"), 8);
  EXPECT_EQ(side.at("estimator").at("bias_correction"), "miller-madow");
  EXPECT_EQ(side.at("estimator").at("min_pair_count"), 50);
  EXPECT_EQ(side.at("lag_grid").at("max_lag"), 100);
  EXPECT_EQ(side.at("points").size(), default_lag_grid(100).lags().size());
}

TEST_F(Cli, EndToEndOutputsAreByteIdentical) {
  write_markov_text("m.txt", 50000, 2);
  for (const char* suffix : {"1", "2"}) {
    const std::string s(suffix);
    ASSERT_EQ(run("analyze --input " + path("m.txt") + " --max-lag 300 --min-pairs 100 --out " + path("c" + s + ".csv") +
                  (s == "2" ? " --threads 3" : " --threads 1")),
              0);
  }
  EXPECT_EQ(read("c1.csv"), read("c2.csv"));
  // Same input path and flags, so the sidecars match as well.
  EXPECT_EQ(read("c1.csv.json"), read("c2.csv.json"));
  for (const char* suffix : {"1", "2"}) {
    const std::string s(suffix);
    ASSERT_EQ(run("fit --curve " + path("c1.csv") + " --out " + path("f" + s + ".json")), 0) << read("stderr.txt");
    ASSERT_EQ(run("grid --fit " + path("f" + s + ".json") + " --layers 2..6 --out " + path("g" + s + ".json")), 0)
        << read("stderr.txt");
    ASSERT_EQ(run("schedule --fit " + path("f" + s + ".json") + " --layers 5 --out " + path("s" + s + ".json")), 0)
        << read("stderr.txt");
  }
  EXPECT_EQ(read("f1.json"), read("f2.json"));
  EXPECT_EQ(read("g1.json"), read("g2.json"));
  EXPECT_EQ(read("s1.json"), read("s2.json"));

  const json fit = read_json_file(path("f1.json"));
  EXPECT_EQ(fit.at("kind"), "classified_fit");
  EXPECT_FALSE(fit.at("estimator").is_null());
  const json grid = read_json_file(path("g1.json"));
  EXPECT_EQ(grid.at("kind"), "grid_search");
  EXPECT_GE(grid.at("schedules").size(), 5u);
  const json sched = read_json_file(path("s1.json"));
  EXPECT_EQ(sched.at("kind"), "dilation_schedule");
  EXPECT_EQ(sched.at("dilations").size(), 5u);
}

TEST_F(Cli, FitClassifiesSyntheticExponentialCsv) {
  const DecayCurve c = testing::sample_curve(testing::dense_lags(1, 100), [](double d) { return 0.3 * std::exp(-d / 10.0); });
  std::ostringstream csv;
  write_curve_csv(csv, c);
  write("e.csv", csv.str());
  ASSERT_EQ(run("fit --curve " + path("e.csv") + " --out " + path("f.json")), 0);
  const json fit = read_json_file(path("f.json"));
  EXPECT_EQ(fit.at("decay_class"), "Exponential");
  EXPECT_NEAR(fit.at("exponential").at("rate").get<double>(), 0.1, 1e-9);
  EXPECT_TRUE(fit.at("estimator").is_null());
}

TEST_F(Cli, FitTooFewPoints) {
  write("few.csv", "lag,mi_nats,pair_count\n1,0.5,10\n2,0.3,10\n3,0.2,10\n");
  EXPECT_EQ(run("fit --curve " + path("few.csv") + " --out " + path("f.json")), 2);
}

TEST_F(Cli, ScheduleFromConstructedFits) {
  write_json_file(path("p256.json"), power_fit_doc(256));
  ASSERT_EQ(run("schedule --fit " + path("p256.json") + " --layers 9 --out " + path("s.json")), 0);
  EXPECT_EQ(read_json_file(path("s.json")).at("dilations"), json({1, 2, 4, 8, 16, 32, 64, 128, 256}));

  write_json_file(path("p240.json"), power_fit_doc(240));
  EXPECT_EQ(run("schedule --fit " + path("p240.json") + " --layers 300 --out " + path("s2.json")), 1);
  EXPECT_FALSE(fs::exists(path("s2.json")));

  ClassifiedFit periodic;
  periodic.decay_class = DecayClass::power_law_periodic;
  periodic.power = PowerLawFit{-0.3, std::log(0.3), 0.9, 1, 783, 100, 0, 1.0};
  periodic.periodicity = PeriodicitySignature{28, {28, 56}, 0.2};
  periodic.max_sampled_lag = 783;
  write_json_file(path("per.json"), fit_json({periodic, "mnist", nullptr}));
  ASSERT_EQ(run("schedule --fit " + path("per.json") + " --layers 6 --out " + path("s3.json")), 0);
  const json s3 = read_json_file(path("s3.json"));
  EXPECT_LE(s3.at("dilations").back().get<int>(), 28);
  EXPECT_EQ(s3.at("max_dilation_source"), "period");
}

TEST_F(Cli, GridSweeps) {
  write_json_file(path("p.json"), power_fit_doc(256));
  ASSERT_EQ(run("grid --fit " + path("p.json") + " --layers 1 --out " + path("g.json")), 0);
  EXPECT_EQ(read_json_file(path("g.json")).at("schedules"), json::parse(R"([{"dilations":[1],"origin":"standard",)"
                                                                        R"("rationale":"standard doubling progression, 1 layers"}])"));
  ASSERT_EQ(run("grid --fit " + path("p.json") + " --layers 4,9 --out " + path("g2.json")), 0);
  EXPECT_EQ(read_json_file(path("g2.json")).at("schedules").size(), 3u);  // the 9-layer fitted one equals standard
  EXPECT_EQ(run("grid --fit " + path("p.json") + " --layers , --out " + path("g3.json")), 1);
  EXPECT_EQ(run("grid --fit " + path("p.json") + " --layers 5..3 --out " + path("g3.json")), 1);
  EXPECT_EQ(run("grid --fit " + path("p.json") + " --layers a..b --out " + path("g3.json")), 1);
}

TEST_F(Cli, PermuteRoundTripAndDeterminism) {
  write_striped_images("img.idx", 50, 3);
  ASSERT_EQ(run("permute --input " + path("img.idx") + " --seed 7 --out " + path("p1.idx")), 0);
  ASSERT_EQ(run("permute --input " + path("img.idx") + " --seed 7 --out " + path("p2.idx")), 0);
  ASSERT_EQ(run("permute --input " + path("img.idx") + " --seed 8 --out " + path("p3.idx")), 0);
  EXPECT_EQ(read("p1.idx"), read("p2.idx"));
  EXPECT_NE(read("p1.idx"), read("p3.idx"));
  EXPECT_NE(read("p1.idx"), read("img.idx"));
  EXPECT_EQ(read("p1.idx").size(), read("img.idx").size());
  ASSERT_EQ(run("permute --input " + path("p1.idx") + " --seed 7 --inverse --out " + path("back.idx")), 0);
  EXPECT_EQ(read("back.idx"), read("img.idx"));
}

TEST_F(Cli, PermutedCurvesAgreeAcrossSeedsAndSitBelowUnpermuted) {
  write_striped_images("img.idx", 400, 4);
  ASSERT_EQ(run("permute --input " + path("img.idx") + " --seed 1 --out " + path("a.idx")), 0);
  ASSERT_EQ(run("permute --input " + path("img.idx") + " --seed 2 --out " + path("b.idx")), 0);
  for (const char* name : {"img", "a", "b"})
    ASSERT_EQ(run("analyze --mode pixel --max-lag 40 --input " + path(std::string(name) + ".idx") + " --out " +
                  path(std::string(name) + ".csv")),
              0);
  const double base = curve_mi("img.csv")[0], a = curve_mi("a.csv")[0], b = curve_mi("b.csv")[0];
  EXPECT_GT(base, 0.2);
  EXPECT_LT(a, 0.5 * base);
  EXPECT_LT(b, 0.5 * base);
  EXPECT_LT(std::abs(a - b), 0.1 * base);
  // Every row repeats the first: unpermuted curves peak at the row length.
  const auto mi = curve_mi("img.csv");
  EXPECT_GT(mi[27], mi[26]);
  EXPECT_GT(mi[27], mi[28]);
}

}  // namespace
}  // namespace lddscan
