#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavprobe/debias.hpp"
#include "cavprobe/tcav.hpp"

namespace cavprobe {

struct RunMetadata {
  std::uint64_t seed = 0;
  std::uint64_t dataset_fingerprint = 0;
  std::size_t bonferroni_m = 0;
  double alpha = 0.05;
  std::optional<std::string> timestamp;  // omitted under --no-timestamp
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

struct AuditReport {
  int schema_version = 1;
  RunMetadata meta;
  std::vector<TcavResult> tcav;
  std::map<std::string, std::size_t> attrition;  // concept -> unreliable replicates
  std::vector<DebiasCurve> curves;
};

nlohmann::ordered_json report_to_json(const AuditReport& report);
AuditReport report_from_json(const nlohmann::ordered_json& j);

// Writes the JSON document plus, when csv_dir is nonempty, one
// tcav_<concept>.csv per concept and one curve_<n>.csv per curve.
void emit(const AuditReport& report, const std::filesystem::path& json_path,
          const std::filesystem::path& csv_dir);

AuditReport load_report(const std::filesystem::path& json_path);

// Raw score matrix: rows = reliable replicates, columns = genres.
void write_scores_csv(const std::vector<TcavResult>& results, const std::filesystem::path& path);

// Recomputes p_bonferroni/significant/direction from p_raw and m; returns
// the list of inconsistencies (empty = clean).
std::vector<std::string> check_report(const AuditReport& report);

std::string current_timestamp_utc();
std::string sanitize_for_filename(const std::string& name);

}  // namespace cavprobe
