#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cavprobe/data_model.hpp"
#include "cavprobe/probe.hpp"

namespace cavprobe {

struct GenreSpec {
  std::string name;
  std::size_t count_per_label = 0;  // records per concept label
};

struct ConceptDirSpec {
  std::string attribute;        // gender or language
  std::string positive_value;   // e.g. "female"
  std::string negative_value;   // e.g. "male"
  std::uint64_t direction_seed = 0;
};

// Shifts the named genre's mean along the concept direction by `strength`,
// planting a genre-concept alignment of known sign.
struct PlantSpec {
  std::string genre;
  std::string concept_attribute;
  double strength = 0.0;
};

struct SynthConfig {
  std::size_t dimension = 64;
  std::vector<GenreSpec> genres;
  std::vector<ConceptDirSpec> concepts;
  std::uint64_t genre_offsets_seed = 1;
  double genre_offset_scale = 1.0;  // expected norm of each genre mean
  double noise_sigma = 1.0;
  double concept_strength = 2.0;  // separation of positives from negatives
  std::vector<PlantSpec> plants;
  std::uint64_t master_seed = 42;
};

struct GroundTruth {
  // unit concept directions, mutually orthogonal, config order
  std::vector<std::vector<double>> concept_directions;
  std::map<std::string, std::vector<double>> genre_means;  // without plants
  std::vector<PlantSpec> plants;
};

// x = mu_genre + label*strength*d_c + plant*d_c + isotropic noise, fully
// determined by master_seed.
std::pair<Dataset, GroundTruth> generate(const SynthConfig& config);

// 1 - |w . d_c| / |w|, sign-agnostic alignment loss in [0, 2].
double recovery_error(const Cav& cav, const GroundTruth& truth, std::size_t concept_index);

SynthConfig synth_config_from_file(const std::filesystem::path& path);
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);

}  // namespace cavprobe
