#include "cavprobe/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "cavprobe/debias.hpp"
#include "cavprobe/errors.hpp"
#include "cavprobe/report.hpp"
#include "cavprobe/sampler.hpp"
#include "cavprobe/synth.hpp"
#include "cavprobe/tcav.hpp"

namespace cavprobe {

namespace {

// Scale chosen so the whole pipeline runs in seconds: genre-concept alignment
// planted into g0 strongly enough to be flagged at 100 replicates while the
// clean genres stay near 0.5.
constexpr std::size_t kDim = 64;
constexpr std::size_t kPerLabel = 100;
constexpr double kConceptStrength = 2.5;
constexpr double kPlant = -2.5;
constexpr std::size_t kReplicates = 100;

struct Check {
  const char* name;
  bool ok;
  std::string detail;
};

}  // namespace

bool run_selftest(std::uint64_t seed, std::size_t threads, const std::filesystem::path& report_out,
                  bool include_timestamp, std::ostream& log) {
  SynthConfig config;
  config.dimension = kDim;
  config.genres = {{"g0", kPerLabel}, {"g1", kPerLabel}, {"g2", kPerLabel}, {"g3", kPerLabel}};
  config.concepts = {{"gender", "female", "male", 7}};
  config.genre_offset_scale = 0.5;
  config.noise_sigma = 1.0;
  config.concept_strength = kConceptStrength;
  config.plants = {{"g0", "gender", kPlant}};
  config.master_seed = seed;

  auto [ds, truth] = generate(config);

  ConceptSpec spec;
  spec.name = "gender=female";
  spec.attribute = "gender";
  spec.positive_value = "female";
  spec.cell_cap = 50;
  spec.seed = seed;
  ConceptSplit split = build_split(ds, spec);

  ProtocolConfig protocol;
  protocol.replicates = kReplicates;
  protocol.fraction = 0.25;
  protocol.threads = threads;
  const std::vector<std::string> genres = {"g0", "g1", "g2", "g3"};
  ProtocolOutcome outcome = run_protocol(ds, split, genres, protocol);

  // Concept CAVs on the full train side; the male CAV mirrors the labels.
  const auto train_ids = split.flatten_train();
  std::vector<std::vector<double>> xs;
  std::vector<int> y_female, y_g0;
  xs.reserve(train_ids.size());
  for (const auto& li : train_ids) {
    const auto& rec = ds.at(li.id);
    xs.push_back(rec.vector);
    y_female.push_back(li.label);
    y_g0.push_back(rec.genre == "g0" ? 1 : 0);
  }
  std::vector<int> y_male(y_female.size());
  for (std::size_t i = 0; i < y_female.size(); ++i) y_male[i] = 1 - y_female[i];

  TrainerConfig trainer;
  Cav female_cav = fit(xs, y_female, trainer);
  female_cav.concept_name = "gender=female";
  Cav male_cav = fit(xs, y_male, trainer);
  male_cav.concept_name = "gender=male";
  Cav base_cav = fit(xs, y_g0, trainer);
  base_cav.concept_name = "genre=g0";

  const double rec_err = recovery_error(female_cav, truth, 0);

  // Gender-balanced g0 test pool for the ranking experiment.
  const SplitCell* g0_test = split.test.cell("g0");
  std::vector<std::string> pool_ids;
  if (g0_test) {
    pool_ids.insert(pool_ids.end(), g0_test->pos_ids.begin(), g0_test->pos_ids.end());
    pool_ids.insert(pool_ids.end(), g0_test->neg_ids.begin(), g0_test->neg_ids.end());
  }
  std::vector<double> lambdas;
  for (int i = 0; i <= 10; ++i) lambdas.push_back(0.1 * i);
  DebiasCurve add_curve =
      sweep(base_cav, female_cav, AdjustMode::add_concept, ds, pool_ids, lambdas, "gender", "male", 0.5);
  DebiasCurve sub_curve =
      sweep(base_cav, male_cav, AdjustMode::subtract_concept, ds, pool_ids, lambdas, "gender", "male", 0.5);

  const TcavResult* planted = nullptr;
  double unpl_lo = 1.0, unpl_hi = 0.0;
  for (const auto& r : outcome.results) {
    if (r.genre == "g0") {
      planted = &r;
    } else {
      unpl_lo = std::min(unpl_lo, r.mean);
      unpl_hi = std::max(unpl_hi, r.mean);
    }
  }

  double max_uptick = 0.0;
  for (std::size_t i = 1; i < add_curve.ratios.size(); ++i) {
    max_uptick = std::max(max_uptick, add_curve.ratios[i] - add_curve.ratios[i - 1]);
  }
  double curve_gap = 0.0;
  for (std::size_t i = 0; i < add_curve.ratios.size(); ++i) {
    curve_gap = std::max(curve_gap, std::fabs(add_curve.ratios[i] - sub_curve.ratios[i]));
  }

  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
  };

  const std::vector<Check> checks = {
      {"replicates survive the reliability gate", outcome.n_reliable >= 80,
       std::to_string(outcome.n_reliable) + "/" + std::to_string(kReplicates)},
      {"planted genre flagged significant", planted && planted->significant,
       planted && planted->p_bonferroni ? "p=" + fmt(*planted->p_bonferroni) : "missing"},
      {"planted genre direction negative", planted && planted->direction == Direction::negative,
       planted ? direction_name(planted->direction) : "missing"},
      {"planted genre mean <= 0.35", planted && planted->mean <= 0.35, planted ? fmt(planted->mean) : "missing"},
      {"clean genres stay near 0.5", unpl_lo >= 0.40 && unpl_hi <= 0.72,
       "[" + fmt(unpl_lo) + ", " + fmt(unpl_hi) + "]"},
      {"concept direction recovered", rec_err <= 0.45, "recovery_error=" + fmt(rec_err)},
      {"ranking skewed before adjustment", add_curve.ratios.front() >= 0.60, fmt(add_curve.ratios.front())},
      {"adjustment removes the skew", add_curve.ratios.back() <= 0.45, fmt(add_curve.ratios.back())},
      {"curve non-increasing", max_uptick <= 0.05, "max uptick " + fmt(max_uptick)},
      {"add-female matches subtract-male", curve_gap <= 0.10, "max gap " + fmt(curve_gap)},
  };

  bool all_ok = true;
  for (const auto& c : checks) {
    log << (c.ok ? "[ok]   " : "[FAIL] ") << c.name << " (" << c.detail << ")\n";
    all_ok = all_ok && c.ok;
  }

  if (!report_out.empty()) {
    AuditReport report;
    report.meta.seed = seed;
    report.meta.dataset_fingerprint = dataset_fingerprint(ds);
    report.meta.bonferroni_m = genres.size();
    report.meta.alpha = protocol.alpha;
    if (include_timestamp) report.meta.timestamp = current_timestamp_utc();
    report.meta.config_echo = {{"subcommand", "selftest"},
                               {"dimension", kDim},
                               {"per_label", kPerLabel},
                               {"replicates", kReplicates},
                               {"fraction", protocol.fraction},
                               {"cell_cap", spec.cell_cap},
                               {"plant", kPlant}};
    report.tcav = outcome.results;
    report.attrition["gender=female"] = outcome.n_unreliable;
    report.curves = {add_curve, sub_curve};
    emit(report, report_out, {});
  }
  return all_ok;
}

}  // namespace cavprobe
