#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "mvcn/csv_io.hpp"
#include "mvcn/report.hpp"
#include "support.hpp"

#ifdef MVCN_CLI_PATH

namespace {

namespace fs = std::filesystem;
using mvcn::testing::scratch_dir;
using mvcn::testing::slurp;
using mvcn::testing::write_text;

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded and returns the exit status and stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string(MVCN_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

TEST(Cli, ModelsListsTheBuiltins) {
  const auto r = run("models");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("name", 0), 0u);
  for (const char* name : {"ou_meanfield", "anharmonic1d", "cubic2d", "zero", "brownian"})
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(Cli, ConfigurationErrorsExitWithOne) {
  const auto dir = scratch_dir();
  EXPECT_EQ(run("simulate --out " + quoted(dir / "a")).code, 1);
  EXPECT_EQ(run("simulate --model no_such_model --out " + quoted(dir / "b")).code, 1);
  EXPECT_EQ(run("simulate --model ou_meanfield --dt -1 --out " + quoted(dir / "c")).code, 1);
  EXPECT_EQ(run("simulate --model ou_meanfield --param broken --out " + quoted(dir / "d")).code, 1);
  EXPECT_EQ(run("experiment --model ou_meanfield --out " + quoted(dir / "e")).code, 1);
  EXPECT_EQ(run("experiment --model ou_meanfield --exp nope --out " + quoted(dir / "f")).code, 1);
  EXPECT_EQ(run("simulate --model ou_meanfield --unknown-flag").code, 1);
  EXPECT_EQ(run("").code, 1);
}

TEST(Cli, PocRejectsOrdersOutsideTheRange) {
  const auto dir = scratch_dir();
  // q must satisfy 2 <= q < p; the anharmonic model has p = 4.
  EXPECT_EQ(run("experiment --model anharmonic1d --exp poc --q 6 --n-list 4,8 --n-ref 16 --blocks 2 --t-end 0.1 "
                "--out " + quoted(dir))
                .code,
            1);
}

TEST(Cli, WassersteinBetweenFiles) {
  const auto dir = scratch_dir();
  write_text(dir / "a.csv", "0\n2\n");
  write_text(dir / "b.csv", "1\n3\n");
  write_text(dir / "c.csv", "x1,x2\n0,0\n1,1\n");

  auto same = run("wasserstein --a " + quoted(dir / "a.csv") + " --b " + quoted(dir / "a.csv"));
  EXPECT_EQ(same.code, 0);
  EXPECT_EQ(std::stod(same.out), 0.0);

  auto shifted = run("wasserstein --p 1 --a " + quoted(dir / "a.csv") + " --b " + quoted(dir / "b.csv"));
  EXPECT_EQ(shifted.code, 0);
  EXPECT_EQ(std::stod(shifted.out), 1.0);

  EXPECT_EQ(run("wasserstein --a " + quoted(dir / "a.csv") + " --b " + quoted(dir / "c.csv")).code, 1);
  EXPECT_EQ(run("wasserstein --a " + quoted(dir / "a.csv") + " --b " + quoted(dir / "missing.csv")).code, 1);
  EXPECT_EQ(run("wasserstein --a " + quoted(dir / "a.csv")).code, 1);
}

TEST(Cli, SimulateWritesTheDocumentedFiles) {
  const auto dir = scratch_dir() / "run";
  const auto r = run("simulate --model ou_meanfield --particles 32 --blocks 3 --dt 0.01 --t-end 0.5 --record-every 10 "
                     "--snapshot-times 0.2,0.5 --track 2 --seed 5 --out " + quoted(dir));
  ASSERT_EQ(r.code, 0);
  for (const char* f : {"manifest.json", "moments.csv", "block_stats.csv", "observables.csv", "paths.csv",
                        "snapshot_0.2.csv", "snapshot_0.5.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["model"], "ou_meanfield");
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["status"], "ok");
  EXPECT_TRUE(m["runtime_seconds"].is_number());
  EXPECT_EQ(m["config"]["sim"]["particles"], 32);

  const auto moments = mvcn::read_table_csv(dir / "moments.csv");
  EXPECT_EQ(moments.columns.front(), "t");
  EXPECT_EQ(moments.rows.size(), 6u);
  const auto snap = mvcn::read_point_csv(dir / "snapshot_0.5.csv");
  EXPECT_EQ(snap.points.size(), 32u * 3u);
}

TEST(Cli, ManifestReplayReproducesTheOutputs) {
  const auto dir = scratch_dir();
  const std::string flags =
      "simulate --model anharmonic1d --particles 40 --blocks 3 --dt 0.01 --t-end 0.3 --snapshot-times 0.3 --seed 9 ";
  ASSERT_EQ(run(flags + "--threads 1 --out " + quoted(dir / "first")).code, 0);
  ASSERT_EQ(run("simulate --config " + quoted(dir / "first" / "manifest.json") + " --threads 3 --out " +
                quoted(dir / "replay"))
                .code,
            0);
  for (const char* f : {"moments.csv", "block_stats.csv", "observables.csv", "snapshot_0.3.csv"})
    EXPECT_EQ(slurp(dir / "first" / f), slurp(dir / "replay" / f)) << f;
}

TEST(Cli, ExperimentWritesAReportAndMapsTheVerdict) {
  const auto dir = scratch_dir() / "exp";
  const auto r = run("experiment --model ou_meanfield --exp contraction --particles 64 --blocks 4 --dt 0.01 --t-end 2 "
                     "--init-a point:2 --init-b point:-2 --out " + quoted(dir));
  const auto report = mvcn::read_report_json(dir / "report.json");
  EXPECT_EQ(r.code, mvcn::exit_code(report.verdict));
  EXPECT_TRUE(fs::exists(dir / "gap.csv"));
  EXPECT_NE(r.out.find("contraction: "), std::string::npos);
}

TEST(Cli, BlowUpExitsWithTwo) {
  const auto dir = scratch_dir() / "blow";
  // The untamed cubic drift explodes from a far start with a coarse step.
  const auto r = run("simulate --model anharmonic1d --no-taming --particles 4 --blocks 1 --dt 0.5 --t-end 20 "
                     "--init point:50 --out " + quoted(dir));
  EXPECT_EQ(r.code, 2);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["status"], "blow_up");
}

}  // namespace

#endif
