#include <doctest.h>

#include <algorithm>
#include <set>

#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"
#include "cavprobe/sampler.hpp"

using namespace cavprobe;

namespace {

// One genre worth of records with the given class counts for `attribute`.
void add_genre(Dataset& ds, const std::string& genre, std::size_t n_pos, std::size_t n_neg,
               std::size_t n_absent = 0) {
  auto push = [&](const std::string& gender, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      EmbeddingRecord r;
      r.id = genre + "/" + gender + "/" + std::to_string(i);
      r.vector = {static_cast<double>(ds.records.size()), 0.0};
      r.genre = genre;
      r.gender = gender;
      ds.records.push_back(std::move(r));
    }
  };
  push("female", n_pos);
  push("male", n_neg);
  push("", n_absent);
}

Dataset finish(Dataset ds) {
  ds.dimension = 2;
  ds.rebuild_index();
  ds.rebuild_vocabulary();
  return ds;
}

ConceptSpec female_spec(std::size_t cap = 50, std::uint64_t seed = 42) {
  return ConceptSpec{"gender=female", "gender", "female", cap, seed};
}

struct CellSizes {
  std::size_t pos = 0, neg = 0;
};

CellSizes sizes(const SplitSide& side, const std::string& genre) {
  const SplitCell* c = side.cell(genre);
  if (!c) return {};
  return {c->pos_ids.size(), c->neg_ids.size()};
}

}  // namespace

TEST_CASE("abundant cell: cap positives, equal negatives, truncated test") {
  Dataset ds;
  add_genre(ds, "metal", 60, 80);
  ds = finish(ds);
  const ConceptSplit split = build_split(ds, female_spec());
  const auto train = sizes(split.train, "metal");
  const auto test = sizes(split.test, "metal");
  CHECK(train.pos == 50);
  CHECK(train.neg == 50);
  CHECK(test.pos == 10);
  CHECK(test.neg == 10);  // 20 excess negatives discarded
}

TEST_CASE("scarce cell: floor(0.8 m) per class to train, rest to test") {
  Dataset ds;
  add_genre(ds, "jazz", 30, 100);
  ds = finish(ds);
  const ConceptSplit split = build_split(ds, female_spec());
  const auto train = sizes(split.train, "jazz");
  const auto test = sizes(split.test, "jazz");
  CHECK(train.pos == 24);
  CHECK(train.neg == 24);
  CHECK(test.pos == 6);
  CHECK(test.neg == 6);
}

TEST_CASE("single-pair genre becomes test-only") {
  Dataset ds;
  add_genre(ds, "tiny", 1, 1);
  add_genre(ds, "big", 40, 40);
  ds = finish(ds);
  const ConceptSplit split = build_split(ds, female_spec());
  CHECK(split.train.cell("tiny") == nullptr);
  const auto test = sizes(split.test, "tiny");
  CHECK(test.pos == 1);
  CHECK(test.neg == 1);
}

TEST_CASE("genres without both classes contribute nothing") {
  Dataset ds;
  add_genre(ds, "onlypos", 10, 0);
  add_genre(ds, "ok", 10, 10);
  ds = finish(ds);
  const ConceptSplit split = build_split(ds, female_spec());
  CHECK(split.train.cell("onlypos") == nullptr);
  CHECK(split.test.cell("onlypos") == nullptr);
  CHECK(split.train.cell("ok") != nullptr);
}

TEST_CASE("absent-attribute records are excluded") {
  Dataset ds;
  add_genre(ds, "rock", 10, 10, 25);
  ds = finish(ds);
  const ConceptSplit split = build_split(ds, female_spec());
  for (const auto& li : split.flatten_train()) CHECK_FALSE(ds.at(li.id).gender.empty());
  for (const auto& li : split.flatten_test()) CHECK_FALSE(ds.at(li.id).gender.empty());
}

TEST_CASE("split error cases") {
  Dataset ds;
  add_genre(ds, "onlypos", 5, 0);
  ds = finish(ds);
  try {
    build_split(ds, female_spec());
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_eligible_genre);
  }
  try {
    build_split(ds, ConceptSpec{"gender=x", "gender", "nonbinary", 50, 1});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_positive_value);
  }
}

TEST_CASE("splits are deterministic and genre-stable") {
  Dataset ds;
  add_genre(ds, "rock", 33, 71);
  add_genre(ds, "pop", 120, 64);
  ds = finish(ds);
  const auto a = build_split(ds, female_spec());
  const auto b = build_split(ds, female_spec());
  CHECK(a.to_json().dump() == b.to_json().dump());

  // Adding a genre must not reshuffle existing genres' membership.
  Dataset wider;
  add_genre(wider, "rock", 33, 71);
  add_genre(wider, "pop", 120, 64);
  add_genre(wider, "ambient", 9, 14);
  wider = finish(wider);
  const auto c = build_split(wider, female_spec());
  for (const char* genre : {"rock", "pop"}) {
    REQUIRE(a.train.cell(genre) != nullptr);
    REQUIRE(c.train.cell(genre) != nullptr);
    CHECK(a.train.cell(genre)->pos_ids == c.train.cell(genre)->pos_ids);
    CHECK(a.train.cell(genre)->neg_ids == c.train.cell(genre)->neg_ids);
    CHECK(a.test.cell(genre)->pos_ids == c.test.cell(genre)->pos_ids);
  }
}

TEST_CASE("split json round-trip") {
  Dataset ds;
  add_genre(ds, "rock", 17, 23);
  ds = finish(ds);
  const auto split = build_split(ds, female_spec(10, 77));
  const auto back = ConceptSplit::from_json(split.to_json());
  CHECK(back.to_json().dump() == split.to_json().dump());
  CHECK(back.spec.seed == 77);
  CHECK(back.spec.cell_cap == 10);
}

TEST_CASE("replicate subsampling: size, determinism, boundary") {
  Dataset ds;
  add_genre(ds, "rock", 80, 80);
  add_genre(ds, "pop", 60, 90);
  ds = finish(ds);
  const auto split = build_split(ds, female_spec());

  const auto sub = subsample_for_replicate(split, 0.25, 3);
  // cells are capped at 50 -> ceil(12.5) = 13 per class per genre
  CHECK(sub.size() == 4 * 13);
  const auto again = subsample_for_replicate(split, 0.25, 3);
  REQUIRE(again.size() == sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    CHECK(sub[i].id == again[i].id);
    CHECK(sub[i].label == again[i].label);
  }

  // fraction 1.0 selects the whole train side, permuted
  const auto full = subsample_for_replicate(split, 1.0, 0);
  auto train_ids = split.flatten_train();
  CHECK(full.size() == train_ids.size());
  std::set<std::string> a, b;
  for (const auto& li : full) a.insert(li.id);
  for (const auto& li : train_ids) b.insert(li.id);
  CHECK(a == b);
}

TEST_CASE("distinct replicate indices give distinct subsets") {
  Dataset ds;
  add_genre(ds, "rock", 500, 500);
  add_genre(ds, "pop", 500, 500);
  ds = finish(ds);
  const auto split = build_split(ds, female_spec(200));
  std::set<std::string> seen;
  const int n = 100;
  for (int r = 0; r < n; ++r) {
    auto sub = subsample_for_replicate(split, 0.25, static_cast<std::uint64_t>(r));
    std::string key;
    for (const auto& li : sub) {
      key += li.id;
      key += '|';
    }
    seen.insert(std::move(key));
  }
  // <= 1% identical pairs among 100 replicates; with these cell sizes
  // collisions are essentially impossible
  CHECK(seen.size() >= 99);
}

TEST_CASE("subsample error paths") {
  Dataset ds;
  add_genre(ds, "tiny", 1, 1);
  add_genre(ds, "big", 40, 40);
  ds = finish(ds);
  const auto split = build_split(ds, female_spec());
  CHECK_THROWS_AS(subsample_for_replicate(split, 0.0, 0), Error);
  CHECK_THROWS_AS(subsample_for_replicate(split, 1.5, 0), Error);

  // a split whose train side is empty cannot be subsampled
  Dataset only_tiny;
  add_genre(only_tiny, "tiny", 1, 1);
  only_tiny = finish(only_tiny);
  const auto empty_train = build_split(only_tiny, female_spec());
  try {
    subsample_for_replicate(empty_train, 0.25, 0);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::subset_too_small);
  }
}

TEST_CASE("randomized split properties: balance, disjointness, cap") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    Dataset ds;
    const std::size_t n_genres = 1 + rng.below(5);
    for (std::size_t g = 0; g < n_genres; ++g) {
      add_genre(ds, "g" + std::to_string(g), rng.below(120), rng.below(120), rng.below(10));
    }
    ds = finish(ds);
    const std::size_t cap = 1 + rng.below(60);
    ConceptSpec spec = female_spec(cap, rng.next_u64());
    ConceptSplit split;
    try {
      split = build_split(ds, spec);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::no_eligible_genre);
      continue;
    }
    std::set<std::string> train_ids, test_ids;
    for (const auto& cell : split.train.cells) {
      CHECK(cell.pos_ids.size() == cell.neg_ids.size());
      CHECK(cell.pos_ids.size() <= cap);
      for (const auto& id : cell.pos_ids) {
        CHECK(ds.at(id).gender == "female");
        CHECK(train_ids.insert(id).second);
      }
      for (const auto& id : cell.neg_ids) {
        CHECK(ds.at(id).gender == "male");
        CHECK(train_ids.insert(id).second);
      }
    }
    for (const auto& cell : split.test.cells) {
      CHECK(cell.pos_ids.size() == cell.neg_ids.size());
      for (const auto& id : cell.pos_ids) CHECK(test_ids.insert(id).second);
      for (const auto& id : cell.neg_ids) CHECK(test_ids.insert(id).second);
    }
    for (const auto& id : test_ids) CHECK(train_ids.count(id) == 0);
  }
}
