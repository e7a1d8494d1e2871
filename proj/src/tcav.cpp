#include "cavprobe/tcav.hpp"

#include <cmath>

#include "cavprobe/errors.hpp"
#include "cavprobe/parallel.hpp"
#include "cavprobe/stats.hpp"

namespace cavprobe {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::positive: return "positive";
    case Direction::negative: return "negative";
    case Direction::none: return "null";
  }
  return "?";
}

double project(const Cav& cav, const std::vector<double>& x) {
  if (x.size() != cav.w.size()) {
    raise(ErrorCode::dimension_mismatch,
          "vector length " + std::to_string(x.size()) + " vs cav " + std::to_string(cav.w.size()));
  }
  double acc = cav.b;
  for (std::size_t i = 0; i < x.size(); ++i) acc += cav.w[i] * x[i];
  return acc;
}

double tcav_score(const Cav& cav, const Eigen::MatrixXd& pool) {
  if (pool.rows() == 0) raise(ErrorCode::empty_sample_list, "empty pool");
  if (static_cast<std::size_t>(pool.cols()) != cav.w.size()) {
    raise(ErrorCode::dimension_mismatch,
          "pool dimension " + std::to_string(pool.cols()) + " vs cav " + std::to_string(cav.w.size()));
  }
  Eigen::Map<const Eigen::VectorXd> w(cav.w.data(), static_cast<Eigen::Index>(cav.w.size()));
  Eigen::VectorXd z = pool * w;
  std::size_t aligned = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] + cav.b > 0.0) ++aligned;  // strictly positive; 0 is non-aligned
  }
  return static_cast<double>(aligned) / static_cast<double>(pool.rows());
}

double tcav_score(const Cav& cav, const std::vector<std::vector<double>>& pool) {
  if (pool.empty()) raise(ErrorCode::empty_sample_list, "empty pool");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(pool.size()), static_cast<Eigen::Index>(pool.front().size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].size() != pool.front().size()) {
      raise(ErrorCode::dimension_mismatch, "ragged pool");
    }
    for (std::size_t j = 0; j < pool[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pool[i][j];
    }
  }
  return tcav_score(cav, m);
}

namespace {

Eigen::MatrixXd gather(const Dataset& ds, const std::vector<LabeledId>& ids, Eigen::VectorXd* labels) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(ds.dimension));
  if (labels) labels->resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const EmbeddingRecord& rec = ds.at(ids[i].id);
    if (rec.vector.size() != ds.dimension) {
      raise(ErrorCode::dimension_mismatch, "record '" + rec.id + "'");
    }
    for (std::size_t j = 0; j < ds.dimension; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rec.vector[j];
    }
    if (labels) (*labels)[static_cast<Eigen::Index>(i)] = ids[i].label;
  }
  return x;
}

}  // namespace

ProtocolOutcome run_protocol(const Dataset& ds, const ConceptSplit& split,
                             const std::vector<std::string>& genres, const ProtocolConfig& config) {
  if (config.replicates == 0) raise(ErrorCode::invalid_config, "replicates must be >= 1");
  if (genres.empty()) raise(ErrorCode::invalid_config, "no genres to score");

  // Full test side, used to gate every replicate CAV.
  const std::vector<LabeledId> test_ids = split.flatten_test();
  if (test_ids.empty()) raise(ErrorCode::empty_sample_list, "split has an empty test side");
  SampleSet test_set;
  test_set.x = gather(ds, test_ids, &test_set.y);

  // Per-genre scored pools: the test side filtered to the genre, both labels.
  std::vector<Eigen::MatrixXd> pools;
  pools.reserve(genres.size());
  for (const auto& genre : genres) {
    const SplitCell* cell = split.test.cell(genre);
    if (!cell || cell->pos_ids.empty()) {
      raise(ErrorCode::empty_sample_list, "genre '" + genre + "' has an empty test pool");
    }
    std::vector<LabeledId> ids;
    for (const auto& id : cell->pos_ids) ids.push_back({id, 1});
    for (const auto& id : cell->neg_ids) ids.push_back({id, 0});
    pools.push_back(gather(ds, ids, nullptr));
  }

  const std::size_t r_total = config.replicates;
  std::vector<char> reliable(r_total, 0);
  std::vector<double> accuracy(r_total, 0.0);
  // scores[r * genres + g]
  std::vector<double> score_grid(r_total * genres.size(), 0.0);

  parallel_for(r_total, config.threads, [&](std::size_t r) {
    const auto subset = subsample_for_replicate(split, config.fraction, r);
    SampleSet train_set;
    train_set.x = gather(ds, subset, &train_set.y);
    Cav cav = fit(train_set, config.trainer);
    cav.concept_name = split.spec.name;
    cav.replicate_index = r;
    cav.seed = split.spec.seed;
    cav.test_accuracy = evaluate_accuracy(cav, test_set);
    accuracy[r] = cav.test_accuracy;
    if (reliability_gate(cav, config.trainer) != Reliability::reliable) return;
    reliable[r] = 1;
    for (std::size_t g = 0; g < genres.size(); ++g) {
      score_grid[r * genres.size() + g] = tcav_score(cav, pools[g]);
    }
  });

  ProtocolOutcome outcome;
  for (std::size_t r = 0; r < r_total; ++r) {
    outcome.n_reliable += reliable[r] ? 1 : 0;
  }
  outcome.n_unreliable = r_total - outcome.n_reliable;
  outcome.replicate_test_accuracy = accuracy;
  if (outcome.n_reliable == 0) {
    raise(ErrorCode::all_replicates_unreliable,
          "concept '" + split.spec.name + "': all " + std::to_string(r_total) + " replicates failed the gate");
  }

  const std::size_t m = config.bonferroni_m > 0 ? config.bonferroni_m : genres.size();
  for (std::size_t g = 0; g < genres.size(); ++g) {
    TcavResult res;
    res.concept_name = split.spec.name;
    res.genre = genres[g];
    res.scores.reserve(outcome.n_reliable);
    for (std::size_t r = 0; r < r_total; ++r) {
      if (reliable[r]) res.scores.push_back(score_grid[r * genres.size() + g]);
    }
    res.n_reliable = res.scores.size();
    res.mean = stats::mean_of(res.scores);
    if (res.scores.size() < 2) {
      // Degenerate: the t-test is refused, nothing can be called significant.
      res.stddev = 0.0;
      res.ci_low = res.ci_high = res.mean;
      res.degenerate = true;
    } else {
      const auto t = stats::one_sample_t_test(res.scores, 0.5);
      res.stddev = t.stddev;
      res.t_statistic = t.t_statistic;
      res.p_raw = t.p_two_sided;
      res.p_bonferroni = stats::bonferroni(t.p_two_sided, m);
      res.significant = *res.p_bonferroni < config.alpha;
      res.degenerate = t.degenerate;
      const auto ci = stats::corrected_ci(res.scores, config.alpha, m);
      res.ci_low = ci.low;
      res.ci_high = ci.high;
      res.degenerate = res.degenerate || ci.degenerate;
    }
    if (res.significant) {
      res.direction = res.mean > 0.5 ? Direction::positive : Direction::negative;
    }
    outcome.results.push_back(std::move(res));
  }
  return outcome;
}

}  // namespace cavprobe
