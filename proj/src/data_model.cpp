#include "cavprobe/data_model.hpp"

#include <array>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"

namespace cavprobe {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'A', 'V', 'E'};
constexpr std::uint8_t kBinaryVersion = 1;

std::string offset_msg(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  return path.string() + ":" + std::to_string(line) + ": " + what;
}

// Minimal RFC-4180-ish CSV: quotes, embedded commas and quoted quotes.
std::vector<std::string> split_csv_line(const std::string& line, const std::filesystem::path& path,
                                        std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty()) raise(ErrorCode::malformed_file, offset_msg(path, line_no, "stray quote"));
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) raise(ErrorCode::malformed_file, offset_msg(path, line_no, "unterminated quote"));
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line_no) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    raise(ErrorCode::malformed_file, offset_msg(path, line_no, "bad float '" + text + "'"));
  }
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_vector(const std::string& id, const std::vector<double>& v, std::size_t dim) {
  if (v.size() != dim) {
    raise(ErrorCode::dimension_mismatch,
          "record '" + id + "' has length " + std::to_string(v.size()) + ", expected " + std::to_string(dim));
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      raise(ErrorCode::non_finite_value, "record '" + id + "' index " + std::to_string(i));
    }
  }
}

struct RawEmbeddings {
  std::size_t dimension = 0;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
};

RawEmbeddings read_csv_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  RawEmbeddings out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) raise(ErrorCode::malformed_file, offset_msg(path, 1, "missing header"));
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line, path, line_no);
  if (header.size() < 2 || header[0] != "id") {
    raise(ErrorCode::malformed_file, offset_msg(path, 1, "expected header id,v0,..."));
  }
  out.dimension = header.size() - 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, path, line_no);
    if (fields.size() != header.size()) {
      raise(ErrorCode::malformed_file,
            offset_msg(path, line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size())));
    }
    std::vector<double> vec(out.dimension);
    for (std::size_t i = 0; i < out.dimension; ++i) vec[i] = parse_double(fields[i + 1], path, line_no);
    out.rows.emplace_back(std::move(fields[0]), std::move(vec));
  }
  return out;
}

RawEmbeddings read_jsonl_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  RawEmbeddings out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") || !obj.contains("vector") ||
        !obj["id"].is_string() || !obj["vector"].is_array()) {
      raise(ErrorCode::malformed_file, offset_msg(path, line_no, "expected {\"id\":..., \"vector\":[...]}"));
    }
    std::vector<double> vec;
    vec.reserve(obj["vector"].size());
    for (const auto& x : obj["vector"]) {
      if (!x.is_number()) raise(ErrorCode::malformed_file, offset_msg(path, line_no, "non-numeric vector entry"));
      vec.push_back(x.get<double>());
    }
    if (out.rows.empty()) out.dimension = vec.size();
    out.rows.emplace_back(obj["id"].get<std::string>(), std::move(vec));
  }
  return out;
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    raise(ErrorCode::malformed_file, path.string() + ": truncated at byte " + std::to_string(in.tellg() == -1 ? -1 : static_cast<long long>(in.tellg())));
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

RawEmbeddings read_binary_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  std::array<char, 4> magic;
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    raise(ErrorCode::malformed_file, path.string() + ": bad magic at byte 0");
  }
  const auto version = read_le<std::uint8_t>(in, path);
  if (version != kBinaryVersion) {
    raise(ErrorCode::malformed_file, path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto dim = read_le<std::uint32_t>(in, path);
  const auto count = read_le<std::uint64_t>(in, path);
  if (dim == 0) raise(ErrorCode::malformed_file, path.string() + ": zero dimension");
  RawEmbeddings out;
  out.dimension = dim;
  out.rows.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto id_len = read_le<std::uint16_t>(in, path);
    std::string id(id_len, '\0');
    if (id_len > 0 && !in.read(id.data(), id_len)) {
      raise(ErrorCode::malformed_file, path.string() + ": truncated id in record " + std::to_string(r));
    }
    std::vector<double> vec(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      const auto bits = read_le<std::uint32_t>(in, path);
      float f;
      std::memcpy(&f, &bits, sizeof(f));
      vec[i] = static_cast<double>(f);
    }
    out.rows.emplace_back(std::move(id), std::move(vec));
  }
  return out;
}

struct MetadataRow {
  std::string genre, gender, language;
};

std::unordered_map<std::string, MetadataRow> read_metadata_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  std::unordered_map<std::string, MetadataRow> out;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) raise(ErrorCode::malformed_file, offset_msg(path, 1, "missing header"));
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line, path, line_no);
  if (header != std::vector<std::string>{"id", "genre", "gender", "language"}) {
    raise(ErrorCode::malformed_file, offset_msg(path, 1, "expected header id,genre,gender,language"));
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, path, line_no);
    if (fields.size() != 4) {
      raise(ErrorCode::malformed_file, offset_msg(path, line_no, "expected 4 fields"));
    }
    if (out.count(fields[0]) != 0) {
      raise(ErrorCode::duplicate_id, "metadata id '" + fields[0] + "' repeated (" + path.string() + ")");
    }
    out.emplace(std::move(fields[0]), MetadataRow{std::move(fields[1]), std::move(fields[2]), std::move(fields[3])});
  }
  return out;
}

}  // namespace

const std::string& EmbeddingRecord::attribute(const std::string& name) const {
  if (name == "genre") return genre;
  if (name == "gender") return gender;
  if (name == "language") return language;
  raise(ErrorCode::missing_attribute, "unknown attribute '" + name + "'");
}

void Dataset::rebuild_index() {
  index_.clear();
  index_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = index_.emplace(records[i].id, i);
    if (!inserted) raise(ErrorCode::duplicate_id, "id '" + records[i].id + "'");
  }
}

void Dataset::rebuild_vocabulary() {
  attribute_vocabulary.clear();
  auto add = [this](const char* name, const std::string& value) {
    if (!value.empty()) attribute_vocabulary[name].insert(value);
  };
  for (const auto& r : records) {
    add("genre", r.genre);
    add("gender", r.gender);
    add("language", r.language);
  }
}

const EmbeddingRecord* Dataset::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records[it->second];
}

const EmbeddingRecord& Dataset::at(const std::string& id) const {
  const EmbeddingRecord* r = find(id);
  if (!r) raise(ErrorCode::unknown_id, "'" + id + "'");
  return *r;
}

void Dataset::validate() const {
  if (records.empty()) raise(ErrorCode::empty_dataset, "no records");
  if (dimension == 0) raise(ErrorCode::invalid_config, "dimension must be >= 1");
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& r : records) {
    check_vector(r.id, r.vector, dimension);
    if (!seen.emplace(r.id, 1).second) raise(ErrorCode::duplicate_id, "id '" + r.id + "'");
  }
}

Format parse_format(const std::string& name) {
  if (name == "csv") return Format::csv;
  if (name == "jsonl") return Format::jsonl;
  if (name == "binary") return Format::binary;
  raise(ErrorCode::unknown_format, "'" + name + "' (expected csv, jsonl or binary)");
}

const char* format_name(Format format) {
  switch (format) {
    case Format::csv: return "csv";
    case Format::jsonl: return "jsonl";
    case Format::binary: return "binary";
  }
  return "?";
}

Dataset ingest(const std::filesystem::path& embeddings_path, Format format,
               const std::filesystem::path& metadata_path) {
  RawEmbeddings raw;
  switch (format) {
    case Format::csv: raw = read_csv_embeddings(embeddings_path); break;
    case Format::jsonl: raw = read_jsonl_embeddings(embeddings_path); break;
    case Format::binary: raw = read_binary_embeddings(embeddings_path); break;
  }
  auto metadata = read_metadata_csv(metadata_path);

  Dataset ds;
  if (!raw.rows.empty() && raw.dimension == 0) {
    raise(ErrorCode::malformed_file, embeddings_path.string() + ": zero-dimensional vectors");
  }
  ds.dimension = raw.dimension;
  std::unordered_map<std::string, std::size_t> seen;
  seen.reserve(raw.rows.size());
  for (auto& [id, vec] : raw.rows) {
    if (!seen.emplace(id, 1).second) {
      raise(ErrorCode::duplicate_id, "id '" + id + "' (" + embeddings_path.string() + ")");
    }
    check_vector(id, vec, ds.dimension);
    auto meta = metadata.find(id);
    if (meta == metadata.end()) {
      ++ds.dropped_missing_metadata;
      continue;
    }
    EmbeddingRecord rec;
    rec.id = id;
    rec.vector = std::move(vec);
    rec.genre = meta->second.genre;
    rec.gender = meta->second.gender;
    rec.language = meta->second.language;
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) {
    raise(ErrorCode::empty_dataset, embeddings_path.string() + " joined with " + metadata_path.string());
  }
  ds.rebuild_index();
  ds.rebuild_vocabulary();
  return ds;
}

void export_dataset(const Dataset& ds, const std::filesystem::path& embeddings_path, Format format,
                    const std::filesystem::path& metadata_path) {
  {
    std::ofstream meta(metadata_path);
    if (!meta) raise(ErrorCode::io_failure, "cannot write " + metadata_path.string());
    meta << "id,genre,gender,language\n";
    for (const auto& r : ds.records) {
      meta << csv_escape(r.id) << ',' << csv_escape(r.genre) << ',' << csv_escape(r.gender) << ','
           << csv_escape(r.language) << '\n';
    }
    if (!meta) raise(ErrorCode::io_failure, "short write to " + metadata_path.string());
  }
  std::ofstream out(embeddings_path, format == Format::binary ? std::ios::binary : std::ios::out);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + embeddings_path.string());
  switch (format) {
    case Format::csv: {
      out << "id";
      for (std::size_t i = 0; i < ds.dimension; ++i) out << ",v" << i;
      out << '\n';
      for (const auto& r : ds.records) {
        out << csv_escape(r.id);
        for (double v : r.vector) out << ',' << format_double(v);
        out << '\n';
      }
      break;
    }
    case Format::jsonl: {
      for (const auto& r : ds.records) {
        nlohmann::ordered_json obj;
        obj["id"] = r.id;
        obj["vector"] = r.vector;
        out << obj.dump() << '\n';
      }
      break;
    }
    case Format::binary: {
      out.write(kMagic.data(), kMagic.size());
      write_le<std::uint8_t>(out, kBinaryVersion);
      write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dimension));
      write_le<std::uint64_t>(out, ds.records.size());
      for (const auto& r : ds.records) {
        if (r.id.size() > 0xFFFF) raise(ErrorCode::invalid_config, "id too long for binary format: " + r.id);
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.id.size()));
        out.write(r.id.data(), static_cast<std::streamsize>(r.id.size()));
        for (double v : r.vector) {
          const float f = static_cast<float>(v);
          std::uint32_t bits;
          std::memcpy(&bits, &f, sizeof(bits));
          write_le<std::uint32_t>(out, bits);
        }
      }
      break;
    }
  }
  if (!out) raise(ErrorCode::io_failure, "short write to " + embeddings_path.string());
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ULL;
    }
  };
  auto mix_str = [&](const std::string& s) {
    const std::uint64_t n = s.size();
    mix_bytes(&n, sizeof(n));
    mix_bytes(s.data(), s.size());
  };
  const std::uint64_t dim = ds.dimension;
  mix_bytes(&dim, sizeof(dim));
  for (const auto& r : ds.records) {
    mix_str(r.id);
    mix_bytes(r.vector.data(), r.vector.size() * sizeof(double));
    mix_str(r.genre);
    mix_str(r.gender);
    mix_str(r.language);
  }
  return h;
}

}  // namespace cavprobe
