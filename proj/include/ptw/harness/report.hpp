#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ptw::harness {

/// An attack outcome in the (residual capacity, FID) plane; the attacker
/// wants both low.
struct ParetoPoint {
  double capacity = 0.0;
  double fid = 0.0;
  std::string label;
};

/// True if a is at least as good as b in both coordinates and strictly
/// better in one.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

/// Indices (ascending) of the non-dominated points.
std::vector<std::size_t> pareto_front(const std::vector<ParetoPoint>& points);

double median(std::vector<double> values);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& record);

/// Result files a run directory may contain.
inline constexpr const char* kSweepFile = "sweep.jsonl";
inline constexpr const char* kAttackFile = "attacks.jsonl";
inline constexpr const char* kRptFile = "rpt.jsonl";
inline constexpr const char* kDetectFile = "detect.jsonl";
inline constexpr const char* kGameSummaryFile = "games.jsonl";

struct Report {
  /// Consolidated tables keyed by section name.
  nlohmann::json tables = nlohmann::json::object();
  std::string markdown;
};

/// Merges the result files of every run directory. Deterministic in the
/// order of `runs` and the file contents.
Report build_report(const std::vector<std::filesystem::path>& runs);

/// Writes report.json, report.md and one SVG per populated section into
/// `out`. Returns the written file names.
std::vector<std::string> write_report(const Report& report, const std::filesystem::path& out);

}  // namespace ptw::harness
