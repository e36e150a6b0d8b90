#include <cstring>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "mvcn/csv_io.hpp"
#include "mvcn/error.hpp"
#include "mvcn/report.hpp"
#include "support.hpp"

namespace {

using mvcn::testing::scratch_dir;
using mvcn::testing::slurp;
using mvcn::testing::write_text;

TEST(FormatDouble, RoundTripsEveryDouble) {
  EXPECT_EQ(mvcn::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(mvcn::format_double(2.0), "2");
  EXPECT_EQ(mvcn::format_double(-0.0), "-0");
  EXPECT_EQ(mvcn::format_double(std::nan("")), "nan");
  EXPECT_EQ(mvcn::format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(mvcn::format_double(-std::numeric_limits<double>::infinity()), "-inf");
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    double v;
    const std::uint64_t bits = rng();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    EXPECT_EQ(std::strtod(mvcn::format_double(v).c_str(), nullptr), v);
  }
}

TEST(SnapshotFilename, ShortForm) {
  EXPECT_EQ(mvcn::snapshot_filename(0.0), "snapshot_0.csv");
  EXPECT_EQ(mvcn::snapshot_filename(25.0), "snapshot_25.csv");
  EXPECT_EQ(mvcn::snapshot_filename(0.1 + 0.2), "snapshot_0.3.csv");
  EXPECT_EQ(mvcn::snapshot_filename(1e-3 * 24000), "snapshot_24.csv");
  EXPECT_EQ(mvcn::snapshot_filename(2.5), "snapshot_2.5.csv");
}

TEST(Table, WriteReadRoundTrip) {
  const auto dir = scratch_dir();
  mvcn::Table t{{"t", "value", "extra"}, {}};
  t.add_row({0.0, 0.1, -3.0});
  t.add_row({1.0, std::nan(""), std::numeric_limits<double>::infinity()});
  t.add_row({2.0, 1e-300, 123456789.125});
  mvcn::write_table_csv(dir / "sub" / "t.csv", t);
  EXPECT_EQ(slurp(dir / "sub" / "t.csv").substr(0, 14), "t,value,extra\n");
  const auto back = mvcn::read_table_csv(dir / "sub" / "t.csv");
  EXPECT_EQ(back.columns, t.columns);
  ASSERT_EQ(back.rows.size(), 3u);
  EXPECT_EQ(back.rows[0], t.rows[0]);
  EXPECT_TRUE(std::isnan(back.rows[1][1]));
  EXPECT_EQ(back.rows[1][2], t.rows[1][2]);
  EXPECT_EQ(back.rows[2], t.rows[2]);
  EXPECT_EQ(back.column("value")[2], 1e-300);
  EXPECT_TRUE(back.has("extra"));
  EXPECT_FALSE(back.has("missing"));
  EXPECT_THROW(back.index("missing"), mvcn::InvalidArgumentError);
  EXPECT_THROW(t.add_row({1.0}), mvcn::InvalidArgumentError);
}

TEST(Table, ReadErrors) {
  const auto dir = scratch_dir();
  EXPECT_THROW(mvcn::read_table_csv(dir / "absent.csv"), mvcn::ConfigError);
  write_text(dir / "empty.csv", "");
  EXPECT_THROW(mvcn::read_table_csv(dir / "empty.csv"), mvcn::ConfigError);
  write_text(dir / "ragged.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(mvcn::read_table_csv(dir / "ragged.csv"), mvcn::ConfigError);
  write_text(dir / "word.csv", "a,b\n1,x\n");
  EXPECT_THROW(mvcn::read_table_csv(dir / "word.csv"), mvcn::ConfigError);
  write_text(dir / "crlf.csv", "a, b\r\n1, 2\r\n\r\n");
  const auto t = mvcn::read_table_csv(dir / "crlf.csv");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(t.rows[0], (std::vector<double>{1.0, 2.0}));
}

TEST(PointFile, HeaderlessCoordinates) {
  const auto dir = scratch_dir();
  write_text(dir / "p.csv", "1,2\n3,4\n5,6\n");
  const auto f = mvcn::read_point_csv(dir / "p.csv");
  EXPECT_EQ(f.dim, 2u);
  EXPECT_EQ(f.size(), 3u);
  EXPECT_EQ(f.points, (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_TRUE(f.weights.empty());
  EXPECT_TRUE(f.block_ids.empty());
}

TEST(PointFile, WeightAndBlockColumns) {
  const auto dir = scratch_dir();
  write_text(dir / "p.csv", "block_id,x1,weight\n1,0.5,1\n0,1.5,3\n1,2.5,4\n");
  const auto f = mvcn::read_point_csv(dir / "p.csv");
  EXPECT_EQ(f.dim, 1u);
  EXPECT_EQ(f.block_ids, (std::vector<std::uint32_t>{1, 0, 1}));
  const auto mu = mvcn::point_file_measure(f);
  EXPECT_FALSE(mu.uniform());
  EXPECT_EQ(mu.weight(0), 0.125);
  EXPECT_EQ(mu.weight(2), 0.5);
  const auto fam = mvcn::point_file_ensemble(f);
  ASSERT_EQ(fam.size(), 2u);
  EXPECT_EQ(fam.member(0).size(), 1u);  // block 0 first
  EXPECT_EQ(fam.member(0).point(0)[0], 1.5);
  EXPECT_EQ(fam.member(1).size(), 2u);
}

TEST(PointFile, Errors) {
  const auto dir = scratch_dir();
  auto bad = [&](const std::string& text) {
    write_text(dir / "p.csv", text);
    EXPECT_THROW(mvcn::point_file_measure(mvcn::read_point_csv(dir / "p.csv")), mvcn::ConfigError) << text;
  };
  bad("");
  bad("x1\n");
  bad("x1,x2\n1\n");
  bad("x1\nnan\n");
  bad("x1\ninf\n");
  bad("block_id,x1\n-1,0\n");
  bad("block_id,x1\n0.5,0\n");
  bad("block_id,weight\n0,1\n");
  bad("x1,weight\n1,0\n2,0\n");
  write_text(dir / "nb.csv", "x1\n1\n");
  EXPECT_THROW(mvcn::point_file_ensemble(mvcn::read_point_csv(dir / "nb.csv")), mvcn::ConfigError);
}

TEST(PointFile, WrittenMeasuresReadBack) {
  const auto dir = scratch_dir();
  const mvcn::EmpiricalMeasure mu(2, {0.1, 0.2, -3.0, 4e-7}, {0.25, 0.75});
  mvcn::write_points_csv(dir / "w.csv", mu);
  EXPECT_EQ(slurp(dir / "w.csv").substr(0, 12), "x1,x2,weight");
  const auto back = mvcn::point_file_measure(mvcn::read_point_csv(dir / "w.csv"));
  EXPECT_EQ(std::vector<double>(back.points().begin(), back.points().end()),
            std::vector<double>(mu.points().begin(), mu.points().end()));
  EXPECT_EQ(back.weight(1), 0.75);

  const mvcn::EmpiricalMeasure u(1, {3.0, 1.0});
  mvcn::write_points_csv(dir / "u.csv", u);
  EXPECT_EQ(slurp(dir / "u.csv"), "x1\n3\n1\n");
}

TEST(Snapshot, BlockIdsAndCoordinates) {
  const auto dir = scratch_dir();
  mvcn::ParticleEnsemble ens(2, 2, 2);
  ens.states() = {1, 2, 3, 4, 5, 6, 7, 8.5};
  mvcn::write_snapshot_csv(dir / "s.csv", ens);
  EXPECT_EQ(slurp(dir / "s.csv"), "block_id,x1,x2\n0,1,2\n0,3,4\n1,5,6\n1,7,8.5\n");
  const auto fam = mvcn::point_file_ensemble(mvcn::read_point_csv(dir / "s.csv"));
  ASSERT_EQ(fam.size(), 2u);
  EXPECT_EQ(fam.member(1).point(1)[1], 8.5);
}

TEST(Trajectory, WritesTheDocumentedFiles) {
  const auto dir = scratch_dir();
  mvcn::SimConfig cfg;
  cfg.blocks = 2;
  cfg.particles = 3;
  cfg.dt = 0.1;
  cfg.t_end = 0.5;
  cfg.record_every = 2;
  cfg.track = 1;
  cfg.initial_law = mvcn::InitialLaw::parse("gauss:0,1", 2);
  const auto rec = mvcn::simulate(mvcn::cubic2d(), cfg);
  mvcn::write_trajectory(dir, rec);

  const auto moments = mvcn::read_table_csv(dir / "moments.csv");
  EXPECT_EQ(moments.columns, (std::vector<std::string>{"t", "p", "moment", "stderr"}));
  EXPECT_EQ(moments.rows.size(), rec.moments.size());
  EXPECT_EQ(moments.column("moment").back(), rec.moments.back().moment);

  const auto stats = mvcn::read_table_csv(dir / "block_stats.csv");
  EXPECT_EQ(stats.columns, (std::vector<std::string>{"t", "block", "mean_x1", "mean_x2", "second_moment"}));
  EXPECT_EQ(stats.rows.size(), 2 * rec.moments.size());

  const auto obs = mvcn::read_table_csv(dir / "observables.csv");
  EXPECT_EQ(obs.columns, (std::vector<std::string>{"t", "mean_cos_x1", "mean_x1"}));

  const auto paths = mvcn::read_table_csv(dir / "paths.csv");
  EXPECT_EQ(paths.columns, (std::vector<std::string>{"t", "block", "particle", "x1", "x2"}));
  EXPECT_EQ(paths.rows.size(), 2 * rec.moments.size());

  EXPECT_TRUE(std::filesystem::exists(dir / "snapshot_0.csv"));
  const auto last = mvcn::read_point_csv(dir / "snapshot_0.5.csv");
  EXPECT_EQ(last.points, rec.final_state.states());
}

TEST(GapCsv, Columns) {
  const auto dir = scratch_dir();
  mvcn::CoupledRecord rec;
  rec.rows = {{0.0, 1.0, 1.0, 1.0}, {0.5, 0.25, 0.5, std::nan("")}};
  mvcn::write_gap_csv(dir / "gap.csv", rec);
  EXPECT_EQ(slurp(dir / "gap.csv"), "t,mean_gap_p,w_p_pooled,nested_w_p\n0,1,1,1\n0.5,0.25,0.5,nan\n");
}

// --- report.json ------------------------------------------------------------------

TEST(Report, JsonRoundTrip) {
  const auto dir = scratch_dir();
  mvcn::ExperimentReport r;
  r.name = "contraction";
  r.inputs = {{"model", "ou_meanfield"}, {"seed", "7"}};
  r.fitted = {{"slope", -1.25}, {"floor", std::nan("")}};
  r.tolerances = {{"rate_tolerance", 0.25}};
  r.series = {"gap.csv"};
  r.notes = {"ok"};
  r.verdict = mvcn::Verdict::Fail;
  mvcn::write_report_json(dir / "report.json", r);
  EXPECT_NE(slurp(dir / "report.json").find("\"floor\": null"), std::string::npos);
  const auto back = mvcn::read_report_json(dir / "report.json");
  EXPECT_EQ(back.name, r.name);
  EXPECT_EQ(back.inputs, r.inputs);
  EXPECT_EQ(back.fitted.at("slope"), -1.25);
  EXPECT_TRUE(std::isnan(back.fitted.at("floor")));
  EXPECT_EQ(back.tolerances, r.tolerances);
  EXPECT_EQ(back.series, r.series);
  EXPECT_EQ(back.notes, r.notes);
  EXPECT_EQ(back.verdict, mvcn::Verdict::Fail);
}

TEST(Report, ReadErrors) {
  const auto dir = scratch_dir();
  EXPECT_THROW(mvcn::read_report_json(dir / "none.json"), mvcn::ConfigError);
  write_text(dir / "bad.json", "{\"name\": 3");
  EXPECT_THROW(mvcn::read_report_json(dir / "bad.json"), mvcn::ConfigError);
  write_text(dir / "noverdict.json", "{\"name\": \"x\"}");
  EXPECT_THROW(mvcn::read_report_json(dir / "noverdict.json"), mvcn::ConfigError);
  write_text(dir / "verdict.json", "{\"name\": \"x\", \"verdict\": \"maybe\"}");
  EXPECT_THROW(mvcn::read_report_json(dir / "verdict.json"), mvcn::Error);
}

TEST(Report, VerdictsAndExitCodes) {
  for (auto v : {mvcn::Verdict::Pass, mvcn::Verdict::Fail, mvcn::Verdict::Inconclusive})
    EXPECT_EQ(mvcn::verdict_from_string(mvcn::to_string(v)), v);
  EXPECT_EQ(mvcn::exit_code(mvcn::Verdict::Pass), 0);
  EXPECT_EQ(mvcn::exit_code(mvcn::Verdict::Fail), 3);
  EXPECT_EQ(mvcn::exit_code(mvcn::Verdict::Inconclusive), 4);
  EXPECT_THROW(mvcn::verdict_from_string("PASS"), mvcn::InvalidArgumentError);
}

TEST(Report, DigestIsFnv1a) {
  EXPECT_EQ(mvcn::digest(""), "cbf29ce484222325");
  EXPECT_EQ(mvcn::digest("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(mvcn::digest("foobar"), "85944171f73967e8");
}

}  // namespace
