#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cavprobe/data_model.hpp"

namespace cavprobe {

// One (genre) stratum of a split side. pos/neg id lists are equal length.
struct SplitCell {
  std::string genre;
  std::vector<std::string> pos_ids;
  std::vector<std::string> neg_ids;
};

struct SplitSide {
  std::vector<SplitCell> cells;  // sorted by genre

  std::size_t total() const;
  const SplitCell* cell(const std::string& genre) const;
};

struct LabeledId {
  std::string id;
  int label = 0;
};

// Genre-balanced, disjoint train/test assignment for one concept.
struct ConceptSplit {
  ConceptSpec spec;
  std::size_t dimension = 0;
  SplitSide train;
  SplitSide test;

  std::vector<LabeledId> flatten_train() const;
  std::vector<LabeledId> flatten_test() const;

  nlohmann::ordered_json to_json() const;
  static ConceptSplit from_json(const nlohmann::json& j);
};

// Per genre: min(cap, m_g) positives + as many negatives to train when
// abundant, floor(0.8*m_g) when scarce; remainder to test, test truncated to
// equal class counts. Genres without both classes contribute nothing.
ConceptSplit build_split(const Dataset& ds, const ConceptSpec& spec);

// Balanced per-genre subset of the train side: ceil(fraction * cell) per
// class, sampled without replacement from a stream derived from
// (spec.seed, replicate_index, genre). Identical arguments always yield
// the identical subset.
std::vector<LabeledId> subsample_for_replicate(const ConceptSplit& split, double fraction,
                                               std::uint64_t replicate_index);

void save_split(const ConceptSplit& split, const std::filesystem::path& path);
ConceptSplit load_split(const std::filesystem::path& path);

}  // namespace cavprobe
