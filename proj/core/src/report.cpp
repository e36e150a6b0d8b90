#include "mvcn/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mvcn/error.hpp"

namespace mvcn {
namespace {

using nlohmann::ordered_json;

ordered_json numbers_to(const std::map<std::string, double>& values) {
  ordered_json out = ordered_json::object();
  for (const auto& [k, v] : values) {
    if (std::isfinite(v))
      out[k] = v;
    else
      out[k] = nullptr;
  }
  return out;
}

std::map<std::string, double> numbers_from(const ordered_json& j) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items())
    out[k] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  return out;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "pass") return Verdict::Pass;
  if (s == "fail") return Verdict::Fail;
  if (s == "inconclusive") return Verdict::Inconclusive;
  throw InvalidArgumentError("unknown verdict '" + s + "'");
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::Pass: return 0;
    case Verdict::Fail: return 3;
    case Verdict::Inconclusive: return 4;
  }
  return 4;
}

void write_report_json(const std::filesystem::path& path, const ExperimentReport& r) {
  ordered_json j;
  j["name"] = r.name;
  j["verdict"] = to_string(r.verdict);
  j["inputs"] = r.inputs;
  j["fitted"] = numbers_to(r.fitted);
  j["tolerances"] = numbers_to(r.tolerances);
  j["series"] = r.series;
  j["notes"] = r.notes;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    const auto j = ordered_json::parse(in);
    ExperimentReport r;
    r.name = j.at("name").get<std::string>();
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.inputs = j.value("inputs", ordered_json::object()).get<std::map<std::string, std::string>>();
    r.fitted = numbers_from(j.value("fitted", ordered_json::object()));
    r.tolerances = numbers_from(j.value("tolerances", ordered_json::object()));
    r.series = j.value("series", std::vector<std::string>{});
    r.notes = j.value("notes", std::vector<std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mvcn
