#include "cavprobe/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"

namespace cavprobe {

namespace {

constexpr std::uint64_t kDirectionTag = 0x44495221ULL;
constexpr std::uint64_t kOffsetTag = 0x4F464653ULL;
constexpr std::uint64_t kNoiseTag = 0x4E4F4953ULL;

void validate(const SynthConfig& c) {
  if (c.dimension == 0) raise(ErrorCode::invalid_config, "dimension must be >= 1");
  if (c.genres.empty()) raise(ErrorCode::invalid_config, "no genres");
  if (c.concepts.empty()) raise(ErrorCode::invalid_config, "no concepts");
  if (c.noise_sigma <= 0.0) raise(ErrorCode::invalid_config, "noise_sigma must be > 0");
  std::set<std::string> genre_names;
  for (const auto& g : c.genres) {
    if (g.count_per_label == 0) raise(ErrorCode::invalid_config, "genre '" + g.name + "' has zero count");
    if (!genre_names.insert(g.name).second) raise(ErrorCode::invalid_config, "duplicate genre '" + g.name + "'");
  }
  std::set<std::string> attrs;
  for (const auto& cc : c.concepts) {
    if (cc.attribute != "gender" && cc.attribute != "language") {
      raise(ErrorCode::invalid_config, "concept attribute must be gender or language");
    }
    if (cc.positive_value.empty() || cc.negative_value.empty() || cc.positive_value == cc.negative_value) {
      raise(ErrorCode::invalid_config, "concept values must be distinct and nonempty");
    }
    if (!attrs.insert(cc.attribute).second) {
      raise(ErrorCode::invalid_config, "two concepts share attribute '" + cc.attribute + "'");
    }
  }
  for (const auto& p : c.plants) {
    if (genre_names.count(p.genre) == 0) raise(ErrorCode::invalid_config, "plant names unknown genre '" + p.genre + "'");
    if (attrs.count(p.concept_attribute) == 0) {
      raise(ErrorCode::invalid_config, "plant names unknown concept attribute '" + p.concept_attribute + "'");
    }
  }
}

}  // namespace

std::pair<Dataset, GroundTruth> generate(const SynthConfig& config) {
  validate(config);
  const std::size_t d = config.dimension;

  GroundTruth truth;
  truth.plants = config.plants;

  // Unit concept directions, Gram-Schmidt orthogonalized in config order.
  for (std::size_t c = 0; c < config.concepts.size(); ++c) {
    Rng rng(mix_seed({config.master_seed, kDirectionTag, config.concepts[c].direction_seed, c}));
    std::vector<double> dir(d);
    for (auto& v : dir) v = rng.gauss();
    for (const auto& prev : truth.concept_directions) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += dir[i] * prev[i];
      for (std::size_t i = 0; i < d; ++i) dir[i] -= dot * prev[i];
    }
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-9) raise(ErrorCode::invalid_config, "concept directions are not independent");
    for (auto& v : dir) v /= norm;
    truth.concept_directions.push_back(std::move(dir));
  }

  Dataset ds;
  ds.dimension = d;
  const double per_coord = config.genre_offset_scale / std::sqrt(static_cast<double>(d));
  for (const auto& genre : config.genres) {
    std::vector<double> mu(d, 0.0);
    if (config.genre_offset_scale > 0.0) {
      Rng rng(mix_seed({config.master_seed, kOffsetTag, config.genre_offsets_seed, fnv1a64(genre.name)}));
      for (auto& v : mu) v = per_coord * rng.gauss();
    }
    truth.genre_means[genre.name] = mu;

    // Plant shifts apply to the whole genre: both labels move together, which
    // is what makes the genre pool land off-center under the concept CAV.
    std::vector<double> planted = mu;
    for (const auto& p : config.plants) {
      if (p.genre != genre.name) continue;
      for (std::size_t c = 0; c < config.concepts.size(); ++c) {
        if (config.concepts[c].attribute != p.concept_attribute) continue;
        for (std::size_t i = 0; i < d; ++i) planted[i] += p.strength * truth.concept_directions[c][i];
      }
    }

    Rng noise(mix_seed({config.master_seed, kNoiseTag, fnv1a64(genre.name)}));
    const std::size_t total = 2 * genre.count_per_label;
    for (std::size_t i = 0; i < total; ++i) {
      EmbeddingRecord rec;
      rec.id = genre.name + "-" + std::to_string(i);
      rec.genre = genre.name;
      rec.vector = planted;
      // Concept 0 labels come in two blocks; further concepts alternate so
      // they stay balanced within each block.
      std::vector<int> labels(config.concepts.size());
      labels[0] = i < genre.count_per_label ? 0 : 1;
      for (std::size_t c = 1; c < config.concepts.size(); ++c) {
        labels[c] = static_cast<int>((i + c) % 2);
      }
      for (std::size_t c = 0; c < config.concepts.size(); ++c) {
        const auto& cc = config.concepts[c];
        const std::string& value = labels[c] ? cc.positive_value : cc.negative_value;
        if (cc.attribute == "gender") {
          rec.gender = value;
        } else {
          rec.language = value;
        }
        if (labels[c]) {
          for (std::size_t k = 0; k < d; ++k) rec.vector[k] += config.concept_strength * truth.concept_directions[c][k];
        }
      }
      for (std::size_t k = 0; k < d; ++k) rec.vector[k] += config.noise_sigma * noise.gauss();
      ds.records.push_back(std::move(rec));
    }
  }
  ds.rebuild_index();
  ds.rebuild_vocabulary();
  return {std::move(ds), std::move(truth)};
}

double recovery_error(const Cav& cav, const GroundTruth& truth, std::size_t concept_index) {
  if (concept_index >= truth.concept_directions.size()) {
    raise(ErrorCode::invalid_config, "concept index out of range");
  }
  const auto& dir = truth.concept_directions[concept_index];
  if (cav.w.size() != dir.size()) raise(ErrorCode::dimension_mismatch, "cav vs concept direction");
  double dot = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    dot += cav.w[i] * dir[i];
    norm += cav.w[i] * cav.w[i];
  }
  if (norm == 0.0) raise(ErrorCode::zero_vector, "cav has zero weight vector");
  return 1.0 - std::fabs(dot) / std::sqrt(norm);
}

SynthConfig synth_config_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::malformed_file, path.string() + ": invalid JSON");
  try {
    SynthConfig c;
    c.dimension = j.value("dimension", c.dimension);
    for (const auto& jg : j.at("genres")) {
      c.genres.push_back({jg.at("name").get<std::string>(), jg.at("count_per_label").get<std::size_t>()});
    }
    for (const auto& jc : j.at("concepts")) {
      ConceptDirSpec cc;
      cc.attribute = jc.at("attribute").get<std::string>();
      cc.positive_value = jc.at("positive_value").get<std::string>();
      cc.negative_value = jc.at("negative_value").get<std::string>();
      cc.direction_seed = jc.value("direction_seed", 0ULL);
      c.concepts.push_back(std::move(cc));
    }
    c.genre_offsets_seed = j.value("genre_offsets_seed", c.genre_offsets_seed);
    c.genre_offset_scale = j.value("genre_offset_scale", c.genre_offset_scale);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.concept_strength = j.value("concept_strength", c.concept_strength);
    if (j.contains("plants")) {
      for (const auto& jp : j.at("plants")) {
        c.plants.push_back({jp.at("genre").get<std::string>(), jp.at("concept_attribute").get<std::string>(),
                            jp.at("strength").get<double>()});
      }
    }
    c.master_seed = j.value("master_seed", c.master_seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::malformed_file, path.string() + ": " + e.what());
  }
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["concept_directions"] = truth.concept_directions;
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  for (const auto& [name, mu] : truth.genre_means) means[name] = mu;
  j["genre_means"] = means;
  nlohmann::ordered_json plants = nlohmann::ordered_json::array();
  for (const auto& p : truth.plants) {
    plants.push_back({{"genre", p.genre}, {"concept_attribute", p.concept_attribute}, {"strength", p.strength}});
  }
  j["plants"] = plants;
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) raise(ErrorCode::io_failure, "short write to " + path.string());
}

}  // namespace cavprobe
