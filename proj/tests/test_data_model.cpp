#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cavprobe/data_model.hpp"
#include "cavprobe/errors.hpp"
#include "cavprobe/rng.hpp"

using namespace cavprobe;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "cavprobe_dm_tests";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Dataset make_dataset(std::size_t n, std::size_t dim, std::uint64_t seed, bool f32_clean) {
  Dataset ds;
  ds.dimension = dim;
  Rng rng(seed);
  const char* genres[] = {"rock", "pop", "hiphop"};
  const char* genders[] = {"male", "female", ""};
  const char* langs[] = {"en", "pt", ""};
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = "trk-" + std::to_string(i);
    r.vector.resize(dim);
    for (auto& v : r.vector) {
      v = rng.gauss();
      if (f32_clean) v = static_cast<double>(static_cast<float>(v));
    }
    r.genre = genres[rng.below(3)];
    r.gender = genders[rng.below(3)];
    r.language = langs[rng.below(3)];
    ds.records.push_back(std::move(r));
  }
  ds.rebuild_index();
  ds.rebuild_vocabulary();
  return ds;
}

bool same_metadata(const Dataset& a, const Dataset& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.id != rb.id || ra.genre != rb.genre || ra.gender != rb.gender || ra.language != rb.language) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("ingest joins embeddings with metadata") {
  const auto emb = temp_dir() / "ok.csv";
  const auto meta = temp_dir() / "ok.meta.csv";
  write_file(emb,
             "id,v0,v1,v2,v3\n"
             "a,1,2,3,4\n"
             "b,5,6,7,8\n"
             "c,-1,-2,-3,-4\n");
  write_file(meta,
             "id,genre,gender,language\n"
             "a,rock,male,en\n"
             "b,pop,female,\n"
             "c,rock,,pt\n");
  const Dataset ds = ingest(emb, Format::csv, meta);
  CHECK(ds.dimension == 4);
  CHECK(ds.records.size() == 3);
  CHECK(ds.records[0].id == "a");  // order preserved
  CHECK(ds.records[1].id == "b");
  CHECK(ds.at("b").gender == "female");
  CHECK(ds.at("b").language.empty());
  CHECK(ds.attribute_vocabulary.at("genre") == std::set<std::string>{"pop", "rock"});
  CHECK(ds.attribute_vocabulary.at("language") == std::set<std::string>{"en", "pt"});
  CHECK(ds.dropped_missing_metadata == 0);
}

TEST_CASE("ingest drops embedding records without metadata") {
  const auto emb = temp_dir() / "drop.csv";
  const auto meta = temp_dir() / "drop.meta.csv";
  write_file(emb, "id,v0\na,1\nb,2\nc,3\nd,4\ne,5\n");
  write_file(meta, "id,genre,gender,language\na,r,m,en\nb,r,m,en\nc,r,m,en\nd,r,m,en\n");
  const Dataset ds = ingest(emb, Format::csv, meta);
  CHECK(ds.records.size() == 4);
  CHECK(ds.dropped_missing_metadata == 1);
}

TEST_CASE("ingest error taxonomy") {
  const auto meta = temp_dir() / "err.meta.csv";
  write_file(meta, "id,genre,gender,language\na,r,m,en\nb,r,m,en\n");

  const auto wrong_len = temp_dir() / "wrong_len.csv";
  write_file(wrong_len, "id,v0,v1,v2,v3\na,1,2,3,4\nb,1,2,3\n");
  CHECK_THROWS_WITH_AS(ingest(wrong_len, Format::csv, meta), doctest::Contains("b"), Error);
  try {
    ingest(wrong_len, Format::csv, meta);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::malformed_file);  // column count caught at parse
  }

  const auto nonfinite = temp_dir() / "nonfinite.jsonl";
  write_file(nonfinite, "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[1,2,3,1e999]}\n");
  CHECK_THROWS_AS(ingest(nonfinite, Format::jsonl, meta), Error);

  const auto dup = temp_dir() / "dup.csv";
  write_file(dup, "id,v0\na,1\na,2\n");
  try {
    ingest(dup, Format::csv, meta);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::duplicate_id);
  }

  const auto empty_join = temp_dir() / "empty_join.csv";
  write_file(empty_join, "id,v0\nz,1\n");
  try {
    ingest(empty_join, Format::csv, meta);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_dataset);
  }

  const auto ragged_jsonl = temp_dir() / "ragged.jsonl";
  write_file(ragged_jsonl, "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1,2,3]}\n");
  try {
    ingest(ragged_jsonl, Format::jsonl, meta);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::dimension_mismatch);
  }

  const auto bad_line = temp_dir() / "bad_line.csv";
  write_file(bad_line, "id,v0,v1\na,1,2\nb,1,notanumber\n");
  try {
    ingest(bad_line, Format::csv, meta);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::malformed_file);
    CHECK(std::string(e.what()).find(":3") != std::string::npos);  // line offset reported
  }
}

TEST_CASE("binary format round-trips bit-exactly") {
  const Dataset ds = make_dataset(40, 7, 99, /*f32_clean=*/true);
  const auto emb = temp_dir() / "rt.cave";
  const auto meta = temp_dir() / "rt.meta.csv";
  export_dataset(ds, emb, Format::binary, meta);
  const Dataset back = ingest(emb, Format::binary, meta);
  REQUIRE(back.records.size() == ds.records.size());
  CHECK(same_metadata(ds, back));
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    for (std::size_t j = 0; j < ds.dimension; ++j) {
      CHECK(ds.records[i].vector[j] == back.records[i].vector[j]);
    }
  }
  CHECK(dataset_fingerprint(ds) == dataset_fingerprint(back));
}

TEST_CASE("text formats round-trip within 1e-12 relative") {
  const Dataset ds = make_dataset(30, 5, 123, /*f32_clean=*/false);
  for (Format f : {Format::csv, Format::jsonl}) {
    const auto emb = temp_dir() / (std::string("rt_text.") + format_name(f));
    const auto meta = temp_dir() / (std::string("rt_text.") + format_name(f) + ".meta.csv");
    export_dataset(ds, emb, f, meta);
    const Dataset back = ingest(emb, f, meta);
    REQUIRE(back.records.size() == ds.records.size());
    CHECK(same_metadata(ds, back));
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      for (std::size_t j = 0; j < ds.dimension; ++j) {
        const double a = ds.records[i].vector[j];
        const double b = back.records[i].vector[j];
        CHECK(std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(a)));
      }
    }
  }
}

TEST_CASE("export twice produces identical bytes") {
  const Dataset ds = make_dataset(20, 4, 7, true);
  for (Format f : {Format::csv, Format::jsonl, Format::binary}) {
    const auto e1 = temp_dir() / (std::string("det1.") + format_name(f));
    const auto e2 = temp_dir() / (std::string("det2.") + format_name(f));
    export_dataset(ds, e1, f, temp_dir() / "det1.meta.csv");
    export_dataset(ds, e2, f, temp_dir() / "det2.meta.csv");
    CHECK(read_file(e1) == read_file(e2));
  }
}

TEST_CASE("metadata with quoted fields") {
  const auto emb = temp_dir() / "quoted.csv";
  const auto meta = temp_dir() / "quoted.meta.csv";
  write_file(emb, "id,v0\na,1\n");
  write_file(meta, "id,genre,gender,language\na,\"rock, classic\",male,en\n");
  const Dataset ds = ingest(emb, Format::csv, meta);
  CHECK(ds.at("a").genre == "rock, classic");
  // and the writer quotes it back
  const auto emb2 = temp_dir() / "quoted2.csv";
  const auto meta2 = temp_dir() / "quoted2.meta.csv";
  export_dataset(ds, emb2, Format::csv, meta2);
  const Dataset back = ingest(emb2, Format::csv, meta2);
  CHECK(back.at("a").genre == "rock, classic");
}

TEST_CASE("binary reader rejects corrupted files") {
  const Dataset ds = make_dataset(10, 3, 5, true);
  const auto emb = temp_dir() / "corrupt.cave";
  const auto meta = temp_dir() / "corrupt.meta.csv";
  export_dataset(ds, emb, Format::binary, meta);
  std::string bytes = read_file(emb);

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    write_file(emb, bytes);
    CHECK_THROWS_AS(ingest(emb, Format::binary, meta), Error);
  }
  SUBCASE("truncated") {
    write_file(emb, bytes.substr(0, bytes.size() / 2));
    try {
      ingest(emb, Format::binary, meta);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::malformed_file);
    }
  }
  SUBCASE("bad version") {
    bytes[4] = 9;
    write_file(emb, bytes);
    CHECK_THROWS_AS(ingest(emb, Format::binary, meta), Error);
  }
}

TEST_CASE("export to an unwritable path raises IoFailure") {
  const Dataset ds = make_dataset(3, 2, 1, true);
  try {
    export_dataset(ds, "/nonexistent-dir/out.csv", Format::csv, "/nonexistent-dir/out.meta.csv");
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io_failure);
  }
}

TEST_CASE("unknown format name") {
  CHECK_THROWS_AS(parse_format("parquet"), Error);
  CHECK(parse_format("csv") == Format::csv);
}

TEST_CASE("dataset validate catches broken invariants") {
  Dataset ds = make_dataset(5, 3, 11, true);
  ds.validate();
  SUBCASE("wrong length") {
    ds.records[2].vector.pop_back();
    CHECK_THROWS_AS(ds.validate(), Error);
  }
  SUBCASE("non-finite") {
    ds.records[1].vector[0] = std::nan("");
    CHECK_THROWS_AS(ds.validate(), Error);
  }
  SUBCASE("duplicate id") {
    ds.records[3].id = ds.records[0].id;
    CHECK_THROWS_AS(ds.validate(), Error);
  }
}
