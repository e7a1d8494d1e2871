#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cavprobe/errors.hpp"
#include "cavprobe/report.hpp"

using namespace cavprobe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "cavprobe_report_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

TcavResult make_result(const std::string& genre, double mean, double p_raw, std::size_t m, double alpha) {
  TcavResult r;
  r.concept_name = "gender=female";
  r.genre = genre;
  r.scores = {mean - 0.01, mean, mean + 0.01};
  r.n_reliable = 3;
  r.mean = mean;
  r.stddev = 0.01;
  r.ci_low = mean - 0.05;
  r.ci_high = mean + 0.05;
  r.t_statistic = 2.0;
  r.p_raw = p_raw;
  r.p_bonferroni = std::min(1.0, p_raw * m);
  r.significant = *r.p_bonferroni < alpha;
  r.direction = !r.significant ? Direction::none : (mean > 0.5 ? Direction::positive : Direction::negative);
  return r;
}

AuditReport make_report(bool with_curve) {
  AuditReport report;
  report.meta.seed = 42;
  report.meta.dataset_fingerprint = 12345;
  report.meta.bonferroni_m = 4;
  report.meta.alpha = 0.05;
  report.meta.config_echo = {{"subcommand", "score"}, {"replicates", 3}};
  report.tcav.push_back(make_result("rock", 0.9, 0.001, 4, 0.05));
  report.tcav.push_back(make_result("pop", 0.51, 0.4, 4, 0.05));
  report.attrition["gender=female"] = 1;
  if (with_curve) {
    DebiasCurve curve;
    curve.lambdas = {0.0, 0.5, 1.0};
    curve.ratios = {0.8, 0.55, 0.2};
    curve.attribute = "gender";
    curve.attribute_value_tracked = "male";
    curve.base_name = "genre=hiphop";
    curve.adjustment_name = "gender=female";
    report.curves.push_back(std::move(curve));
  }
  return report;
}

}  // namespace

TEST_CASE("report json round-trips structurally") {
  const AuditReport report = make_report(true);
  const auto path = temp_dir() / "report.json";
  emit(report, path, {});
  const AuditReport back = load_report(path);
  CHECK(report_to_json(back).dump() == report_to_json(report).dump());
}

TEST_CASE("emit without timestamp is byte-deterministic") {
  const AuditReport report = make_report(true);
  const auto p1 = temp_dir() / "det1.json";
  const auto p2 = temp_dir() / "det2.json";
  emit(report, p1, {});
  emit(report, p2, {});
  CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("csv emission per concept") {
  const AuditReport report = make_report(true);
  const auto json_path = temp_dir() / "full.json";
  const auto csv_dir = temp_dir() / "csv";
  fs::remove_all(csv_dir);
  emit(report, json_path, csv_dir);
  CHECK(fs::exists(csv_dir / "tcav_gender_female.csv"));
  const std::string table = read_file(csv_dir / "tcav_gender_female.csv");
  CHECK(table.find("genre,mean,std,ci_low,ci_high,t,p_raw,p_bonferroni,significant,direction,n_reliable") == 0);
  CHECK(table.find("rock") != std::string::npos);
  CHECK(table.find("positive") != std::string::npos);
  bool curve_found = false;
  for (const auto& entry : fs::directory_iterator(csv_dir)) {
    curve_found = curve_found || entry.path().filename().string().rfind("curve_", 0) == 0;
  }
  CHECK(curve_found);
}

TEST_CASE("empty curves list means no curve csvs") {
  const AuditReport report = make_report(false);
  const auto json_path = temp_dir() / "nocurve.json";
  const auto csv_dir = temp_dir() / "csv_nocurve";
  fs::remove_all(csv_dir);
  emit(report, json_path, csv_dir);
  const AuditReport back = load_report(json_path);
  CHECK(back.curves.empty());
  for (const auto& entry : fs::directory_iterator(csv_dir)) {
    CHECK(entry.path().filename().string().rfind("curve_", 0) != 0);
  }
}

TEST_CASE("self-consistency checker accepts clean reports and flags tampering") {
  AuditReport report = make_report(true);
  CHECK(check_report(report).empty());

  SUBCASE("wrong bonferroni product") {
    report.tcav[0].p_bonferroni = 0.9;
    CHECK_FALSE(check_report(report).empty());
  }
  SUBCASE("wrong significance flag") {
    report.tcav[1].significant = true;
    CHECK_FALSE(check_report(report).empty());
  }
  SUBCASE("wrong direction") {
    report.tcav[0].direction = Direction::negative;
    CHECK_FALSE(check_report(report).empty());
  }
  SUBCASE("mean outside ci") {
    report.tcav[0].ci_low = 0.95;
    CHECK_FALSE(check_report(report).empty());
  }
  SUBCASE("score out of range") {
    report.tcav[0].scores.push_back(1.5);
    CHECK_FALSE(check_report(report).empty());
  }
}

TEST_CASE("scores csv layout") {
  const AuditReport report = make_report(false);
  const auto path = temp_dir() / "scores.csv";
  write_scores_csv(report.tcav, path);
  const std::string text = read_file(path);
  CHECK(text.rfind("replicate,rock,pop\n", 0) == 0);
  // 3 replicate rows
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("filename sanitization") {
  CHECK(sanitize_for_filename("gender=female") == "gender_female");
  CHECK(sanitize_for_filename("language=pt") == "language_pt");
  CHECK(sanitize_for_filename("a/b c") == "a_b_c");
  CHECK(sanitize_for_filename("") == "unnamed");
}

TEST_CASE("timestamp is iso-8601 utc shaped") {
  const std::string ts = current_timestamp_utc();
  REQUIRE(ts.size() == 20);
  CHECK(ts[4] == '-');
  CHECK(ts[10] == 'T');
  CHECK(ts[19] == 'Z');
}

TEST_CASE("degenerate results serialize infinities as null") {
  AuditReport report = make_report(false);
  report.tcav[0].t_statistic = std::numeric_limits<double>::infinity();
  report.tcav[0].degenerate = true;
  const auto path = temp_dir() / "inf.json";
  emit(report, path, {});
  const AuditReport back = load_report(path);
  CHECK(std::isinf(back.tcav[0].t_statistic));
  CHECK(back.tcav[0].t_statistic > 0);
}
