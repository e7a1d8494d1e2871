#include <doctest.h>

#include <cmath>

#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"
#include "cavprobe/sampler.hpp"
#include "cavprobe/synth.hpp"
#include "cavprobe/tcav.hpp"

using namespace cavprobe;

namespace {

SynthConfig base_config(std::uint64_t seed) {
  SynthConfig c;
  c.dimension = 64;
  c.genres = {{"g0", 200}, {"g1", 200}};
  c.concepts = {{"gender", "female", "male", 1}};
  c.master_seed = seed;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const auto [a, ta] = generate(base_config(5));
  const auto [b, tb] = generate(base_config(5));
  CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
  const auto [c, tc] = generate(base_config(6));
  CHECK(dataset_fingerprint(a) != dataset_fingerprint(c));
}

TEST_CASE("generated dataset is valid and labeled as configured") {
  auto config = base_config(1);
  config.concepts.push_back({"language", "pt", "other", 2});
  const auto [ds, truth] = generate(config);
  ds.validate();
  CHECK(ds.records.size() == 2 * 2 * 200);
  CHECK(ds.dimension == 64);
  std::size_t females = 0, pt = 0;
  for (const auto& r : ds.records) {
    CHECK_FALSE(r.gender.empty());
    CHECK_FALSE(r.language.empty());
    females += r.gender == "female";
    pt += r.language == "pt";
  }
  CHECK(females == ds.records.size() / 2);
  CHECK(pt == ds.records.size() / 2);
}

TEST_CASE("multiple concept directions are orthonormal") {
  auto config = base_config(7);
  config.concepts.push_back({"language", "pt", "other", 2});
  const auto [ds, truth] = generate(config);
  REQUIRE(truth.concept_directions.size() == 2);
  double dot = 0.0, n0 = 0.0, n1 = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    dot += truth.concept_directions[0][i] * truth.concept_directions[1][i];
    n0 += truth.concept_directions[0][i] * truth.concept_directions[0][i];
    n1 += truth.concept_directions[1][i] * truth.concept_directions[1][i];
  }
  CHECK(std::fabs(dot) <= 1e-10);
  CHECK(std::fabs(n0 - 1.0) <= 1e-12);
  CHECK(std::fabs(n1 - 1.0) <= 1e-12);
}

TEST_CASE("concept signal is linearly separable at the default strength") {
  // beta = 2, sigma = 1: the Bayes boundary sits one sigma from each class,
  // so accuracy tops out near 0.84; the gate threshold clears comfortably.
  const auto [ds, truth] = generate(base_config(11));
  ConceptSpec spec{"gender=female", "gender", "female", 160, 11};
  const ConceptSplit split = build_split(ds, spec);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (const auto& li : split.flatten_train()) {
    xs.push_back(ds.at(li.id).vector);
    ys.push_back(li.label);
  }
  Cav cav = fit(xs, ys, TrainerConfig{});
  std::vector<std::vector<double>> xt;
  std::vector<int> yt;
  for (const auto& li : split.flatten_test()) {
    xt.push_back(ds.at(li.id).vector);
    yt.push_back(li.label);
  }
  cav.test_accuracy = evaluate_accuracy(cav, make_sample_set(xt, yt));
  CHECK(cav.test_accuracy >= 0.8);
  CHECK(reliability_gate(cav, TrainerConfig{}) == Reliability::reliable);
}

TEST_CASE("zero concept strength defeats the reliability gate") {
  auto config = base_config(13);
  config.concept_strength = 0.0;
  const auto [ds, truth] = generate(config);
  ConceptSpec spec{"gender=female", "gender", "female", 100, 13};
  const ConceptSplit split = build_split(ds, spec);
  ProtocolConfig protocol;
  protocol.replicates = 10;
  protocol.fraction = 0.25;
  try {
    run_protocol(ds, split, {"g0", "g1"}, protocol);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::all_replicates_unreliable);
  }
}

TEST_CASE("plants shift the genre mean along the concept direction") {
  auto config = base_config(17);
  config.plants = {{"g0", "gender", 3.0}};
  const auto [ds, truth] = generate(config);
  const auto& d_c = truth.concept_directions[0];
  double g0_mean = 0.0, g1_mean = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (const auto& r : ds.records) {
    double proj = 0.0;
    for (std::size_t i = 0; i < 64; ++i) proj += r.vector[i] * d_c[i];
    if (r.genre == "g0") {
      g0_mean += proj;
      ++n0;
    } else {
      g1_mean += proj;
      ++n1;
    }
  }
  g0_mean /= n0;
  g1_mean /= n1;
  CHECK(g0_mean - g1_mean == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("recovery error geometry") {
  auto config = base_config(19);
  const auto [ds, truth] = generate(config);
  const auto& d_c = truth.concept_directions[0];

  Cav parallel;
  parallel.w.assign(d_c.begin(), d_c.end());
  for (auto& v : parallel.w) v *= -2.5;  // sign and scale are irrelevant
  CHECK(recovery_error(parallel, truth, 0) <= 1e-12);

  Cav orthogonal;
  orthogonal.w.assign(64, 0.0);
  // build a vector orthogonal to d_c
  orthogonal.w[0] = d_c[1];
  orthogonal.w[1] = -d_c[0];
  CHECK(recovery_error(orthogonal, truth, 0) == doctest::Approx(1.0).epsilon(1e-9));

  // w = d_c + noise with |noise| = 0.1 orthogonal: error <= 1 - 1/sqrt(1.01)
  Cav noisy;
  noisy.w.assign(d_c.begin(), d_c.end());
  const double norm01 = std::sqrt(orthogonal.w[0] * orthogonal.w[0] + orthogonal.w[1] * orthogonal.w[1]);
  noisy.w[0] += 0.1 * orthogonal.w[0] / norm01;
  noisy.w[1] += 0.1 * orthogonal.w[1] / norm01;
  CHECK(recovery_error(noisy, truth, 0) <= 0.01);

  Cav zero;
  zero.w.assign(64, 0.0);
  CHECK_THROWS_AS(recovery_error(zero, truth, 0), Error);
  CHECK_THROWS_AS(recovery_error(parallel, truth, 5), Error);
}

TEST_CASE("config validation") {
  auto config = base_config(1);
  SUBCASE("zero count") {
    config.genres[0].count_per_label = 0;
    CHECK_THROWS_AS(generate(config), Error);
  }
  SUBCASE("duplicate genre") {
    config.genres.push_back({"g0", 5});
    CHECK_THROWS_AS(generate(config), Error);
  }
  SUBCASE("bad attribute") {
    config.concepts[0].attribute = "tempo";
    CHECK_THROWS_AS(generate(config), Error);
  }
  SUBCASE("duplicate concept attribute") {
    config.concepts.push_back({"gender", "male", "female", 9});
    CHECK_THROWS_AS(generate(config), Error);
  }
  SUBCASE("plant names unknown genre") {
    config.plants = {{"nope", "gender", 1.0}};
    CHECK_THROWS_AS(generate(config), Error);
  }
  SUBCASE("zero noise") {
    config.noise_sigma = 0.0;
    CHECK_THROWS_AS(generate(config), Error);
  }
}

TEST_CASE("null world keeps genre pools centered") {
  auto config = base_config(23);
  config.genres = {{"g0", 3000}, {"g1", 3000}};
  const auto [ds, truth] = generate(config);
  ConceptSpec spec{"gender=female", "gender", "female", 600, 23};
  const ConceptSplit split = build_split(ds, spec);
  ProtocolConfig protocol;
  protocol.replicates = 20;
  protocol.fraction = 0.02;
  const auto outcome = run_protocol(ds, split, {"g0", "g1"}, protocol);
  for (const auto& r : outcome.results) {
    CHECK(r.mean >= 0.45);
    CHECK(r.mean <= 0.55);
  }
}
