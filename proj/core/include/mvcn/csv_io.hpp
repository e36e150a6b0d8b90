#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvcn/measure.hpp"
#include "mvcn/simulate.hpp"

namespace mvcn {

/// 17 significant digits ("%.17g"); NaN as "nan", infinities as "inf"/"-inf".
std::string format_double(double v);

/// Numeric table with named columns, the unit of every CSV series.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  /// Throws InvalidArgumentError for unknown names.
  std::size_t index(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
  void add_row(std::vector<double> row);
};

void write_table_csv(const std::filesystem::path& path, const Table& table);
/// Reads a numeric CSV with a header row. Throws ConfigError on I/O or
/// parse errors.
Table read_table_csv(const std::filesystem::path& path);

/// Point cloud file: optional `block_id` and `weight` columns, every other
/// column a coordinate. A file without a header row is read as coordinates.
struct PointFile {
  std::size_t dim = 0;
  std::vector<double> points;           // n x dim, row-major
  std::vector<double> weights;          // empty unless a weight column exists
  std::vector<std::uint32_t> block_ids; // empty unless a block_id column exists
  std::size_t size() const { return dim == 0 ? 0 : points.size() / dim; }
};

PointFile read_point_csv(const std::filesystem::path& path);
/// All rows as one measure (weights normalized if present).
EmpiricalMeasure point_file_measure(const PointFile& file);
/// One uniform member per block_id, in ascending id order.
MeasureEnsemble point_file_ensemble(const PointFile& file);

/// block_id, x1..xd; block_id is the block's position in the ensemble.
void write_snapshot_csv(const std::filesystem::path& path, const ParticleEnsemble& ens);
/// x1..xd (plus weight for non-uniform measures).
void write_points_csv(const std::filesystem::path& path, const EmpiricalMeasure& mu);
/// "snapshot_<t>.csv" with t in shortest round-trip-free form ("%.10g").
std::string snapshot_filename(double t);

Table moments_table(const std::vector<MomentRow>& rows);
Table gap_table(const std::vector<GapRow>& rows);

/// moments.csv, block_stats.csv, observables.csv, snapshot_<t>.csv and,
/// when particles are tracked, paths.csv.
void write_trajectory(const std::filesystem::path& dir, const TrajectoryRecord& record);
void write_gap_csv(const std::filesystem::path& path, const CoupledRecord& record);

}  // namespace mvcn
