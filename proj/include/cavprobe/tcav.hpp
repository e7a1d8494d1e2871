#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavprobe/data_model.hpp"
#include "cavprobe/probe.hpp"
#include "cavprobe/sampler.hpp"

namespace cavprobe {

enum class Direction { positive, negative, none };

const char* direction_name(Direction d);

// Per (concept, genre) outcome of the replicate protocol.
struct TcavResult {
  std::string concept_name;
  std::string genre;
  std::vector<double> scores;  // one per reliable replicate, replicate order
  std::size_t n_reliable = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double t_statistic = 0.0;
  std::optional<double> p_raw;
  std::optional<double> p_bonferroni;
  bool significant = false;
  Direction direction = Direction::none;
  bool degenerate = false;  // zero-variance scores or too few replicates
};

struct ProtocolConfig {
  std::size_t replicates = 500;
  double fraction = 0.25;
  double alpha = 0.05;
  // Bonferroni family size; 0 means "genres scored in this call". Multi-
  // concept runs pass concepts x genres.
  std::size_t bonferroni_m = 0;
  TrainerConfig trainer;
  std::size_t threads = 0;  // 0 = hardware; must not change results
};

struct ProtocolOutcome {
  std::vector<TcavResult> results;       // one per scored genre, input order
  std::size_t n_reliable = 0;
  std::size_t n_unreliable = 0;
  std::vector<double> replicate_test_accuracy;  // all replicates
};

// p_CAV(x) = w.x + b; the logit, no sigmoid.
double project(const Cav& cav, const std::vector<double>& x);

// Fraction of rows with strictly positive projection.
double tcav_score(const Cav& cav, const Eigen::MatrixXd& pool);
double tcav_score(const Cav& cav, const std::vector<std::vector<double>>& pool);

// Trains config.replicates CAVs on balanced subsamples of the split's train
// side, gates each on the split's full test side, and scores every reliable
// CAV against each genre's test pool. Throws AllReplicatesUnreliable when
// nothing survives the gate.
ProtocolOutcome run_protocol(const Dataset& ds, const ConceptSplit& split,
                             const std::vector<std::string>& genres, const ProtocolConfig& config);

}  // namespace cavprobe
