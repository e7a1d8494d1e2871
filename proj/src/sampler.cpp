#include "cavprobe/sampler.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"

namespace cavprobe {

namespace {

constexpr std::uint64_t kSplitTag = 0x53504C4954ULL;      // stream tag: split
constexpr std::uint64_t kReplicateTag = 0x5245504CULL;    // stream tag: replicate

std::vector<std::string> take(const std::vector<std::string>& pool, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(pool[i]);
  return out;
}

}  // namespace

std::size_t SplitSide::total() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.pos_ids.size() + c.neg_ids.size();
  return n;
}

const SplitCell* SplitSide::cell(const std::string& genre) const {
  for (const auto& c : cells) {
    if (c.genre == genre) return &c;
  }
  return nullptr;
}

std::vector<LabeledId> flatten_side(const SplitSide& side) {
  std::vector<LabeledId> out;
  out.reserve(side.total());
  for (const auto& c : side.cells) {
    for (const auto& id : c.pos_ids) out.push_back({id, 1});
    for (const auto& id : c.neg_ids) out.push_back({id, 0});
  }
  return out;
}

std::vector<LabeledId> ConceptSplit::flatten_train() const { return flatten_side(train); }
std::vector<LabeledId> ConceptSplit::flatten_test() const { return flatten_side(test); }

ConceptSplit build_split(const Dataset& ds, const ConceptSpec& spec) {
  if (spec.cell_cap == 0) raise(ErrorCode::invalid_config, "cell_cap must be >= 1");
  auto vocab = ds.attribute_vocabulary.find(spec.attribute);
  if (vocab == ds.attribute_vocabulary.end() || vocab->second.count(spec.positive_value) == 0) {
    raise(ErrorCode::unknown_positive_value,
          "'" + spec.positive_value + "' not present for attribute '" + spec.attribute + "'");
  }

  // Bucket eligible records (concept attribute present, genre present) by genre.
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> by_genre;
  for (const auto& r : ds.records) {
    const std::string& value = r.attribute(spec.attribute);
    if (value.empty() || r.genre.empty()) continue;
    auto& bucket = by_genre[r.genre];
    if (value == spec.positive_value) {
      bucket.first.push_back(r.id);
    } else {
      bucket.second.push_back(r.id);
    }
  }

  ConceptSplit split;
  split.spec = spec;
  split.dimension = ds.dimension;
  for (auto& [genre, bucket] : by_genre) {
    auto& positives = bucket.first;
    auto& negatives = bucket.second;
    const std::size_t m = std::min(positives.size(), negatives.size());
    if (m == 0) continue;

    const std::uint64_t genre_seed = mix_seed({spec.seed, kSplitTag, fnv1a64(genre)});
    Rng pos_rng(mix_seed({genre_seed, 1}));
    Rng neg_rng(mix_seed({genre_seed, 2}));
    pos_rng.shuffle(positives);
    neg_rng.shuffle(negatives);

    std::size_t train_k = m > spec.cell_cap ? spec.cell_cap
                                               : static_cast<std::size_t>(0.8 * static_cast<double>(m));
    // Scarce cells keep a nonempty test pair whenever two pairs exist.
    std::size_t test_pairs = std::min(positives.size() - train_k, negatives.size() - train_k);
    if (test_pairs == 0 && m >= 2 && train_k >= 1) {
      --train_k;
      test_pairs = std::min(positives.size() - train_k, negatives.size() - train_k);
    }

    SplitCell train_cell{genre, {}, {}};
    SplitCell test_cell{genre, {}, {}};
    train_cell.pos_ids.assign(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(train_k));
    train_cell.neg_ids.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(train_k));
    // Remainders are already in shuffled order; keeping the first test_pairs of
    // the larger class discards the excess uniformly at random.
    test_cell.pos_ids.assign(positives.begin() + static_cast<std::ptrdiff_t>(train_k),
                             positives.begin() + static_cast<std::ptrdiff_t>(train_k + test_pairs));
    test_cell.neg_ids.assign(negatives.begin() + static_cast<std::ptrdiff_t>(train_k),
                             negatives.begin() + static_cast<std::ptrdiff_t>(train_k + test_pairs));
    if (!train_cell.pos_ids.empty()) split.train.cells.push_back(std::move(train_cell));
    if (!test_cell.pos_ids.empty()) split.test.cells.push_back(std::move(test_cell));
  }
  if (split.train.cells.empty() && split.test.cells.empty()) {
    raise(ErrorCode::no_eligible_genre, "no genre has both a positive and a negative record");
  }
  return split;
}

std::vector<LabeledId> subsample_for_replicate(const ConceptSplit& split, double fraction,
                                               std::uint64_t replicate_index) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    raise(ErrorCode::invalid_config, "fraction must lie in (0, 1]");
  }
  std::vector<LabeledId> out;
  bool has_pos = false, has_neg = false;
  for (const auto& cell : split.train.cells) {
    const std::size_t n = cell.pos_ids.size();
    if (n == 0) continue;
    const std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    const std::uint64_t cell_seed =
        mix_seed({split.spec.seed, kReplicateTag, replicate_index, fnv1a64(cell.genre)});
    Rng pos_rng(mix_seed({cell_seed, 1}));
    Rng neg_rng(mix_seed({cell_seed, 2}));
    for (const auto& id : take(cell.pos_ids, pos_rng.sample_indices(n, k))) {
      out.push_back({id, 1});
      has_pos = true;
    }
    for (const auto& id : take(cell.neg_ids, neg_rng.sample_indices(n, k))) {
      out.push_back({id, 0});
      has_neg = true;
    }
  }
  if (out.size() < 2 || !has_pos || !has_neg) {
    raise(ErrorCode::subset_too_small,
          "replicate subset has " + std::to_string(out.size()) + " records");
  }
  return out;
}

namespace {

nlohmann::ordered_json side_to_json(const SplitSide& side) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : side.cells) {
    nlohmann::ordered_json jc;
    jc["genre"] = c.genre;
    jc["pos_ids"] = c.pos_ids;
    jc["neg_ids"] = c.neg_ids;
    cells.push_back(std::move(jc));
  }
  return cells;
}

SplitSide side_from_json(const nlohmann::json& j) {
  SplitSide side;
  for (const auto& jc : j) {
    SplitCell c;
    c.genre = jc.at("genre").get<std::string>();
    c.pos_ids = jc.at("pos_ids").get<std::vector<std::string>>();
    c.neg_ids = jc.at("neg_ids").get<std::vector<std::string>>();
    side.cells.push_back(std::move(c));
  }
  return side;
}

nlohmann::ordered_json counts_json(const SplitSide& side) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& c : side.cells) {
    out[c.genre] = {{"positives", c.pos_ids.size()}, {"negatives", c.neg_ids.size()}};
  }
  return out;
}

}  // namespace

nlohmann::ordered_json ConceptSplit::to_json() const {
  nlohmann::ordered_json j;
  j["concept"] = {{"name", spec.name},
                  {"attribute", spec.attribute},
                  {"positive_value", spec.positive_value},
                  {"cell_cap", spec.cell_cap},
                  {"seed", spec.seed}};
  j["dimension"] = dimension;
  j["per_cell_counts"] = {{"train", counts_json(train)}, {"test", counts_json(test)}};
  j["train"] = side_to_json(train);
  j["test"] = side_to_json(test);
  return j;
}

ConceptSplit ConceptSplit::from_json(const nlohmann::json& j) {
  ConceptSplit split;
  const auto& jc = j.at("concept");
  split.spec.name = jc.at("name").get<std::string>();
  split.spec.attribute = jc.at("attribute").get<std::string>();
  split.spec.positive_value = jc.at("positive_value").get<std::string>();
  split.spec.cell_cap = jc.at("cell_cap").get<std::size_t>();
  split.spec.seed = jc.at("seed").get<std::uint64_t>();
  split.dimension = j.at("dimension").get<std::size_t>();
  split.train = side_from_json(j.at("train"));
  split.test = side_from_json(j.at("test"));
  return split;
}

void save_split(const ConceptSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
  out << split.to_json().dump(2) << '\n';
  if (!out) raise(ErrorCode::io_failure, "short write to " + path.string());
}

ConceptSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::malformed_file, path.string() + ": invalid JSON");
  try {
    return ConceptSplit::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::malformed_file, path.string() + ": " + e.what());
  }
}

}  // namespace cavprobe
