#include "mvcn/csv_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "mvcn/error.hpp"

namespace mvcn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0';
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split(line));
  }
  return rows;
}

std::string coordinate_header(std::size_t d) {
  std::string out;
  for (std::size_t k = 0; k < d; ++k) out += ",x" + std::to_string(k + 1);
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t Table::index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw InvalidArgumentError("table has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

bool Table::has(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::vector<double> Table::column(const std::string& name) const {
  const std::size_t j = index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

void Table::add_row(std::vector<double> row) {
  if (row.size() != columns.size())
    throw InvalidArgumentError("table row has " + std::to_string(row.size()) + " values, expected " +
                               std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

void write_table_csv(const std::filesystem::path& path, const Table& table) {
  auto out = open_out(path);
  for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
  out << '\n';
  for (const auto& r : table.rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << format_double(r[j]);
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing " + path.string());
}

Table read_table_csv(const std::filesystem::path& path) {
  const auto rows = read_rows(path);
  if (rows.empty()) throw ConfigError(path.string() + ": empty file");
  Table t;
  t.columns = rows[0];
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != t.columns.size())
      throw ConfigError(path.string() + ": row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                        " fields, expected " + std::to_string(t.columns.size()));
    std::vector<double> r(rows[i].size());
    for (std::size_t j = 0; j < r.size(); ++j)
      if (!parse_double(rows[i][j], r[j]))
        throw ConfigError(path.string() + ": row " + std::to_string(i + 1) + ": bad number '" + rows[i][j] + "'");
    t.rows.push_back(std::move(r));
  }
  return t;
}

PointFile read_point_csv(const std::filesystem::path& path) {
  const auto rows = read_rows(path);
  if (rows.empty()) throw ConfigError(path.string() + ": no points");
  double probe = 0.0;
  const bool has_header = !parse_double(rows[0][0], probe);
  const std::size_t width = rows[0].size();
  std::ptrdiff_t block_col = -1, weight_col = -1;
  if (has_header) {
    for (std::size_t j = 0; j < width; ++j) {
      if (rows[0][j] == "block_id") block_col = static_cast<std::ptrdiff_t>(j);
      if (rows[0][j] == "weight") weight_col = static_cast<std::ptrdiff_t>(j);
    }
  }
  PointFile file;
  file.dim = width - (block_col >= 0) - (weight_col >= 0);
  if (file.dim == 0) throw ConfigError(path.string() + ": no coordinate columns");
  for (std::size_t i = has_header ? 1 : 0; i < rows.size(); ++i) {
    if (rows[i].size() != width)
      throw ConfigError(path.string() + ": row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                        " fields, expected " + std::to_string(width));
    for (std::size_t j = 0; j < width; ++j) {
      double v = 0.0;
      if (!parse_double(rows[i][j], v) || !std::isfinite(v))
        throw ConfigError(path.string() + ": row " + std::to_string(i + 1) + ": bad number '" + rows[i][j] + "'");
      if (static_cast<std::ptrdiff_t>(j) == block_col) {
        if (v < 0 || v != std::floor(v) || v > 4294967295.0)
          throw ConfigError(path.string() + ": block_id must be a non-negative integer");
        file.block_ids.push_back(static_cast<std::uint32_t>(v));
      } else if (static_cast<std::ptrdiff_t>(j) == weight_col) {
        file.weights.push_back(v);
      } else {
        file.points.push_back(v);
      }
    }
  }
  if (file.points.empty()) throw ConfigError(path.string() + ": no points");
  return file;
}

EmpiricalMeasure point_file_measure(const PointFile& file) {
  if (file.weights.empty()) return EmpiricalMeasure(file.dim, file.points);
  double total = 0.0;
  for (double w : file.weights) total += w;
  if (!(total > 0.0)) throw ConfigError("point file weights must have a positive sum");
  std::vector<double> w = file.weights;
  for (double& v : w) v /= total;
  return EmpiricalMeasure(file.dim, file.points, std::move(w));
}

MeasureEnsemble point_file_ensemble(const PointFile& file) {
  if (file.block_ids.empty()) throw ConfigError("nested distance needs a block_id column");
  std::map<std::uint32_t, std::vector<double>> groups;
  for (std::size_t i = 0; i < file.size(); ++i) {
    auto& g = groups[file.block_ids[i]];
    g.insert(g.end(), file.points.begin() + static_cast<std::ptrdiff_t>(i * file.dim),
             file.points.begin() + static_cast<std::ptrdiff_t>((i + 1) * file.dim));
  }
  std::vector<EmpiricalMeasure> members;
  for (auto& [id, pts] : groups) members.emplace_back(file.dim, std::move(pts));
  return MeasureEnsemble(std::move(members));
}

void write_snapshot_csv(const std::filesystem::path& path, const ParticleEnsemble& ens) {
  auto out = open_out(path);
  out << "block_id" << coordinate_header(ens.dim()) << '\n';
  for (std::size_t b = 0; b < ens.blocks(); ++b)
    for (std::size_t i = 0; i < ens.particles_per_block(); ++i) {
      out << b;
      for (double v : ens.particle(b, i)) out << ',' << format_double(v);
      out << '\n';
    }
  if (!out) throw ConfigError("failed writing " + path.string());
}

void write_points_csv(const std::filesystem::path& path, const EmpiricalMeasure& mu) {
  auto out = open_out(path);
  out << coordinate_header(mu.dim()).substr(1) << (mu.uniform() ? "" : ",weight") << '\n';
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto x = mu.point(i);
    for (std::size_t k = 0; k < x.size(); ++k) out << (k ? "," : "") << format_double(x[k]);
    if (!mu.uniform()) out << ',' << format_double(mu.weight(i));
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::string snapshot_filename(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "snapshot_%.10g.csv", t);
  return buf;
}

Table moments_table(const std::vector<MomentRow>& rows) {
  Table t{{"t", "p", "moment", "stderr"}, {}};
  for (const auto& r : rows) t.add_row({r.t, r.p, r.moment, r.std_error});
  return t;
}

Table gap_table(const std::vector<GapRow>& rows) {
  Table t{{"t", "mean_gap_p", "w_p_pooled", "nested_w_p"}, {}};
  for (const auto& r : rows) t.add_row({r.t, r.mean_gap_p, r.w_p_pooled, r.nested_w_p});
  return t;
}

void write_trajectory(const std::filesystem::path& dir, const TrajectoryRecord& record) {
  std::filesystem::create_directories(dir);
  write_table_csv(dir / "moments.csv", moments_table(record.moments));

  const std::size_t d = record.final_state.dim();
  Table stats{{"t", "block"}, {}};
  for (std::size_t k = 0; k < d; ++k) stats.columns.push_back("mean_x" + std::to_string(k + 1));
  stats.columns.push_back("second_moment");
  for (const auto& r : record.block_stats) {
    std::vector<double> row{r.t, static_cast<double>(r.block)};
    row.insert(row.end(), r.mean.begin(), r.mean.end());
    row.push_back(r.second_moment);
    stats.add_row(std::move(row));
  }
  write_table_csv(dir / "block_stats.csv", stats);

  Table obs{{"t", "mean_cos_x1", "mean_x1"}, {}};
  for (const auto& r : record.observables) obs.add_row({r.t, r.mean_cos, r.mean_x1});
  write_table_csv(dir / "observables.csv", obs);

  if (!record.paths.empty()) {
    Table paths{{"t", "block", "particle"}, {}};
    for (std::size_t k = 0; k < d; ++k) paths.columns.push_back("x" + std::to_string(k + 1));
    for (const auto& r : record.paths) {
      std::vector<double> row{r.t, static_cast<double>(r.block), static_cast<double>(r.particle)};
      row.insert(row.end(), r.x.begin(), r.x.end());
      paths.add_row(std::move(row));
    }
    write_table_csv(dir / "paths.csv", paths);
  }
  for (const auto& s : record.snapshots) write_snapshot_csv(dir / snapshot_filename(s.time), s);
}

void write_gap_csv(const std::filesystem::path& path, const CoupledRecord& record) {
  write_table_csv(path, gap_table(record.rows));
}

}  // namespace mvcn
