#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cavprobe {

// One track: embedding vector plus categorical metadata. An empty string in
// genre/gender/language means the attribute is absent for that record.
struct EmbeddingRecord {
  std::string id;
  std::vector<double> vector;
  std::string genre;
  std::string gender;
  std::string language;

  const std::string& attribute(const std::string& name) const;
};

struct Dataset {
  std::size_t dimension = 0;
  std::vector<EmbeddingRecord> records;
  // attribute name -> set of observed (non-absent) values
  std::map<std::string, std::set<std::string>> attribute_vocabulary;
  std::size_t dropped_missing_metadata = 0;

  void rebuild_index();
  void rebuild_vocabulary();
  const EmbeddingRecord* find(const std::string& id) const;
  const EmbeddingRecord& at(const std::string& id) const;  // throws UnknownId

  // Checks dimension, finiteness and id uniqueness; throws on violation.
  void validate() const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// A binary concept: attribute (gender/language) and the value counted as
// positive, plus the balancing parameters of the split builder.
struct ConceptSpec {
  std::string name;
  std::string attribute;
  std::string positive_value;
  std::size_t cell_cap = 50;
  std::uint64_t seed = 42;
};

enum class Format { csv, jsonl, binary };

Format parse_format(const std::string& name);  // "csv" | "jsonl" | "binary"
const char* format_name(Format format);

// Reads embeddings plus the metadata CSV and joins them on id. Embedding
// records without a metadata row are dropped (counted in the result).
Dataset ingest(const std::filesystem::path& embeddings_path, Format format,
               const std::filesystem::path& metadata_path);

// Inverse of ingest; writes the embeddings file and the metadata CSV.
void export_dataset(const Dataset& ds, const std::filesystem::path& embeddings_path, Format format,
                    const std::filesystem::path& metadata_path);

// Order-independent of nothing: hashes dimension, ids, raw vector bytes and
// metadata in record order. Used to stamp reports.
std::uint64_t dataset_fingerprint(const Dataset& ds);

}  // namespace cavprobe
