#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mvcn {

enum class Verdict { Pass, Fail, Inconclusive };

const char* to_string(Verdict v);
/// Throws InvalidArgumentError for anything but pass / fail / inconclusive.
Verdict verdict_from_string(const std::string& s);
/// CLI exit code: 0 pass, 3 fail, 4 inconclusive.
int exit_code(Verdict v);

struct ExperimentReport {
  std::string name;
  std::map<std::string, std::string> inputs;  // model, config digest, laws, ...
  std::map<std::string, double> fitted;       // NaN is stored as null
  std::map<std::string, double> tolerances;   // everything the verdict reads besides the CSVs
  std::vector<std::string> series;            // CSV files in the report directory
  std::vector<std::string> notes;
  Verdict verdict = Verdict::Inconclusive;
};

void write_report_json(const std::filesystem::path& path, const ExperimentReport& report);
ExperimentReport read_report_json(const std::filesystem::path& path);

/// 64-bit FNV-1a of `text` as 16 hex digits.
std::string digest(const std::string& text);

}  // namespace mvcn
