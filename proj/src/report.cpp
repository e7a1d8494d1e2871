#include "cavprobe/report.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <set>

#include "cavprobe/errors.hpp"

namespace cavprobe {

namespace {

nlohmann::ordered_json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;  // +-inf t-statistics of degenerate distributions
}

double from_finite_or_null(const nlohmann::json& j, double mean_sign) {
  if (j.is_null()) {
    return mean_sign >= 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return j.get<double>();
}

nlohmann::ordered_json result_to_json(const TcavResult& r) {
  nlohmann::ordered_json j;
  j["concept"] = r.concept_name;
  j["genre"] = r.genre;
  j["n_reliable"] = r.n_reliable;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["t"] = finite_or_null(r.t_statistic);
  j["p_raw"] = r.p_raw ? nlohmann::ordered_json(*r.p_raw) : nlohmann::ordered_json(nullptr);
  j["p_bonferroni"] = r.p_bonferroni ? nlohmann::ordered_json(*r.p_bonferroni) : nlohmann::ordered_json(nullptr);
  j["significant"] = r.significant;
  j["direction"] = direction_name(r.direction);
  j["degenerate"] = r.degenerate;
  j["scores"] = r.scores;
  return j;
}

TcavResult result_from_json(const nlohmann::json& j) {
  TcavResult r;
  r.concept_name = j.at("concept").get<std::string>();
  r.genre = j.at("genre").get<std::string>();
  r.n_reliable = j.at("n_reliable").get<std::size_t>();
  r.mean = j.at("mean").get<double>();
  r.stddev = j.at("std").get<double>();
  r.ci_low = j.at("ci_low").get<double>();
  r.ci_high = j.at("ci_high").get<double>();
  r.t_statistic = from_finite_or_null(j.at("t"), r.mean - 0.5);
  if (!j.at("p_raw").is_null()) r.p_raw = j.at("p_raw").get<double>();
  if (!j.at("p_bonferroni").is_null()) r.p_bonferroni = j.at("p_bonferroni").get<double>();
  r.significant = j.at("significant").get<bool>();
  const std::string dir = j.at("direction").get<std::string>();
  r.direction = dir == "positive" ? Direction::positive : dir == "negative" ? Direction::negative : Direction::none;
  r.degenerate = j.at("degenerate").get<bool>();
  r.scores = j.at("scores").get<std::vector<double>>();
  return r;
}

nlohmann::ordered_json curve_to_json(const DebiasCurve& c) {
  nlohmann::ordered_json j;
  j["base"] = c.base_name;
  j["adjustment"] = c.adjustment_name;
  j["mode"] = adjust_mode_name(c.mode);
  j["attribute"] = c.attribute;
  j["attribute_value_tracked"] = c.attribute_value_tracked;
  j["top_fraction"] = c.top_fraction;
  j["lambdas"] = c.lambdas;
  j["ratios"] = c.ratios;
  return j;
}

DebiasCurve curve_from_json(const nlohmann::json& j) {
  DebiasCurve c;
  c.base_name = j.at("base").get<std::string>();
  c.adjustment_name = j.at("adjustment").get<std::string>();
  c.mode = parse_adjust_mode(j.at("mode").get<std::string>());
  c.attribute = j.at("attribute").get<std::string>();
  c.attribute_value_tracked = j.at("attribute_value_tracked").get<std::string>();
  c.top_fraction = j.at("top_fraction").get<double>();
  c.lambdas = j.at("lambdas").get<std::vector<double>>();
  c.ratios = j.at("ratios").get<std::vector<double>>();
  return c;
}

std::string csv_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::ordered_json report_to_json(const AuditReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = report.schema_version;
  nlohmann::ordered_json meta;
  meta["seed"] = report.meta.seed;
  meta["dataset_fingerprint"] = report.meta.dataset_fingerprint;
  meta["m"] = report.meta.bonferroni_m;
  meta["alpha"] = report.meta.alpha;
  if (report.meta.timestamp) meta["timestamp"] = *report.meta.timestamp;
  meta["config"] = report.meta.config_echo;
  j["run_metadata"] = meta;
  nlohmann::ordered_json tcav = nlohmann::ordered_json::array();
  for (const auto& r : report.tcav) tcav.push_back(result_to_json(r));
  j["tcav"] = tcav;
  nlohmann::ordered_json att = nlohmann::ordered_json::object();
  for (const auto& [name, n] : report.attrition) att[name] = n;
  j["attrition"] = att;
  nlohmann::ordered_json curves = nlohmann::ordered_json::array();
  for (const auto& c : report.curves) curves.push_back(curve_to_json(c));
  j["curves"] = curves;
  return j;
}

AuditReport report_from_json(const nlohmann::ordered_json& j) {
  AuditReport report;
  report.schema_version = j.at("schema_version").get<int>();
  const auto& meta = j.at("run_metadata");
  report.meta.seed = meta.at("seed").get<std::uint64_t>();
  report.meta.dataset_fingerprint = meta.at("dataset_fingerprint").get<std::uint64_t>();
  report.meta.bonferroni_m = meta.at("m").get<std::size_t>();
  report.meta.alpha = meta.at("alpha").get<double>();
  if (meta.contains("timestamp")) report.meta.timestamp = meta.at("timestamp").get<std::string>();
  report.meta.config_echo = meta.at("config");
  for (const auto& jr : j.at("tcav")) report.tcav.push_back(result_from_json(jr));
  for (const auto& [key, value] : j.at("attrition").items()) {
    report.attrition[key] = value.get<std::size_t>();
  }
  for (const auto& jc : j.at("curves")) report.curves.push_back(curve_from_json(jc));
  return report;
}

void emit(const AuditReport& report, const std::filesystem::path& json_path,
          const std::filesystem::path& csv_dir) {
  {
    std::ofstream out(json_path);
    if (!out) raise(ErrorCode::io_failure, "cannot write " + json_path.string());
    out << report_to_json(report).dump(2) << '\n';
    if (!out) raise(ErrorCode::io_failure, "short write to " + json_path.string());
  }
  if (csv_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(csv_dir, ec);
  if (ec) raise(ErrorCode::io_failure, "cannot create " + csv_dir.string());

  std::set<std::string> concepts;
  for (const auto& r : report.tcav) concepts.insert(r.concept_name);
  for (const auto& name : concepts) {
    const auto path = csv_dir / ("tcav_" + sanitize_for_filename(name) + ".csv");
    std::ofstream out(path);
    if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
    out << "genre,mean,std,ci_low,ci_high,t,p_raw,p_bonferroni,significant,direction,n_reliable\n";
    for (const auto& r : report.tcav) {
      if (r.concept_name != name) continue;
      out << r.genre << ',' << csv_double(r.mean) << ',' << csv_double(r.stddev) << ','
          << csv_double(r.ci_low) << ',' << csv_double(r.ci_high) << ',' << csv_double(r.t_statistic) << ','
          << (r.p_raw ? csv_double(*r.p_raw) : "") << ','
          << (r.p_bonferroni ? csv_double(*r.p_bonferroni) : "") << ','
          << (r.significant ? "true" : "false") << ',' << direction_name(r.direction) << ',' << r.n_reliable
          << '\n';
    }
  }
  std::size_t curve_index = 0;
  for (const auto& c : report.curves) {
    const auto path = csv_dir / ("curve_" + sanitize_for_filename(c.base_name) + "_" +
                                 adjust_mode_name(c.mode) + "_" + std::to_string(curve_index++) + ".csv");
    write_curve_csv(c, path);
  }
}

AuditReport load_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + json_path.string());
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::malformed_file, json_path.string() + ": invalid JSON");
  try {
    return report_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::malformed_file, json_path.string() + ": " + e.what());
  }
}

void write_scores_csv(const std::vector<TcavResult>& results, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
  out << "replicate";
  for (const auto& r : results) out << ',' << r.genre;
  out << '\n';
  std::size_t rows = 0;
  for (const auto& r : results) rows = std::max(rows, r.scores.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << i;
    for (const auto& r : results) {
      out << ',';
      if (i < r.scores.size()) out << csv_double(r.scores[i]);
    }
    out << '\n';
  }
  if (!out) raise(ErrorCode::io_failure, "short write to " + path.string());
}

std::vector<std::string> check_report(const AuditReport& report) {
  std::vector<std::string> problems;
  const std::size_t m = report.meta.bonferroni_m;
  for (const auto& r : report.tcav) {
    const std::string tag = r.concept_name + "/" + r.genre;
    if (r.p_raw) {
      const double expect = std::min(1.0, *r.p_raw * static_cast<double>(m));
      if (!r.p_bonferroni || std::fabs(*r.p_bonferroni - expect) > 1e-12) {
        problems.push_back(tag + ": p_bonferroni does not equal min(1, p_raw*m)");
      }
      const bool expect_sig = expect < report.meta.alpha;
      if (r.significant != expect_sig) problems.push_back(tag + ": significance flag mismatch");
    } else if (r.significant) {
      problems.push_back(tag + ": significant without p-value");
    }
    const Direction expect_dir = !r.significant        ? Direction::none
                                 : r.mean > 0.5        ? Direction::positive
                                                       : Direction::negative;
    if (r.direction != expect_dir) problems.push_back(tag + ": direction mismatch");
    if (!(r.ci_low <= r.mean && r.mean <= r.ci_high)) problems.push_back(tag + ": mean outside CI");
    for (double s : r.scores) {
      if (!(s >= 0.0 && s <= 1.0)) {
        problems.push_back(tag + ": score outside [0,1]");
        break;
      }
    }
  }
  return problems;
}

std::string current_timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string sanitize_for_filename(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "unnamed" : out;
}

}  // namespace cavprobe
