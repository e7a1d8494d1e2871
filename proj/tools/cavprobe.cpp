// cavprobe: diagnose and mitigate concept bias in frozen embedding spaces.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 statistical degeneracy escalated by --strict.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cavprobe/data_model.hpp"
#include "cavprobe/debias.hpp"
#include "cavprobe/errors.hpp"
#include "cavprobe/report.hpp"
#include "cavprobe/sampler.hpp"
#include "cavprobe/selftest.hpp"
#include "cavprobe/synth.hpp"
#include "cavprobe/tcav.hpp"

namespace {

using namespace cavprobe;

struct GlobalOpts {
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  bool verbose = false;
  bool strict = false;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CAVPROBE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      // fall through to the built-in default
    }
  }
  return 42;
}

// "gender=female" -> ConceptSpec
ConceptSpec parse_concept(const std::string& text, std::size_t cell_cap, std::uint64_t seed) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= text.size()) {
    raise(ErrorCode::invalid_config, "concept '" + text + "' (expected attribute=value)");
  }
  ConceptSpec spec;
  spec.name = text;
  spec.attribute = text.substr(0, eq);
  spec.positive_value = text.substr(eq + 1);
  spec.cell_cap = cell_cap;
  spec.seed = seed;
  if (spec.attribute != "gender" && spec.attribute != "language") {
    raise(ErrorCode::invalid_config, "concept attribute must be gender or language, got '" + spec.attribute + "'");
  }
  return spec;
}

std::vector<ConceptSpec> expand_concepts(const Dataset& ds, const std::vector<std::string>& given,
                                         bool all, std::size_t min_support, std::size_t cell_cap,
                                         std::uint64_t seed) {
  std::vector<ConceptSpec> specs;
  for (const auto& text : given) specs.push_back(parse_concept(text, cell_cap, seed));
  if (all) {
    for (const char* attr : {"gender", "language"}) {
      auto vocab = ds.attribute_vocabulary.find(attr);
      if (vocab == ds.attribute_vocabulary.end()) continue;
      for (const auto& value : vocab->second) {
        std::size_t support = 0;
        for (const auto& r : ds.records) {
          if (r.attribute(attr) == value) ++support;
        }
        if (support < min_support) continue;
        const std::string name = std::string(attr) + "=" + value;
        bool already = false;
        for (const auto& s : specs) already = already || s.name == name;
        if (!already) specs.push_back(parse_concept(name, cell_cap, seed));
      }
    }
  }
  if (specs.empty()) raise(ErrorCode::invalid_config, "no concepts given; use --concept or --concepts-all");
  return specs;
}

std::vector<std::string> resolve_genres(const ConceptSplit& split, const std::vector<std::string>& requested) {
  if (requested.size() == 1 && requested.front() == "all") {
    std::vector<std::string> out;
    for (const auto& cell : split.test.cells) {
      if (!cell.pos_ids.empty()) out.push_back(cell.genre);
    }
    return out;
  }
  return requested;
}

int run_score(const GlobalOpts& global, const std::string& emb, const std::string& format,
              const std::string& meta, const std::vector<std::string>& concept_args, bool concepts_all,
              std::size_t min_support, const std::vector<std::string>& genre_args, std::size_t replicates,
              double fraction, std::size_t cell_cap, double l2, double reliability, const std::string& out,
              const std::string& csv_dir, const std::string& scores_dir, const std::string& split_out,
              bool no_timestamp) {
  Dataset ds = ingest(emb, parse_format(format), meta);
  if (global.verbose && ds.dropped_missing_metadata > 0) {
    std::cerr << "warning: dropped " << ds.dropped_missing_metadata << " records without metadata\n";
  }
  auto specs = expand_concepts(ds, concept_args, concepts_all, min_support, cell_cap, global.seed);

  // Build all splits first so the Bonferroni family spans the whole run.
  std::vector<ConceptSplit> splits;
  std::vector<std::vector<std::string>> genre_lists;
  std::size_t m = 0;
  for (const auto& spec : specs) {
    ConceptSplit split = build_split(ds, spec);
    auto genres = resolve_genres(split, genre_args);
    m += genres.size();
    genre_lists.push_back(std::move(genres));
    splits.push_back(std::move(split));
  }

  AuditReport report;
  report.meta.seed = global.seed;
  report.meta.dataset_fingerprint = dataset_fingerprint(ds);
  report.meta.bonferroni_m = m;
  report.meta.alpha = 0.05;
  if (!no_timestamp) report.meta.timestamp = current_timestamp_utc();
  report.meta.config_echo = {{"subcommand", "score"},   {"replicates", replicates},
                             {"fraction", fraction},    {"cell_cap", cell_cap},
                             {"l2_lambda", l2},         {"reliability_threshold", reliability},
                             {"min_support", min_support}};

  bool degenerate_seen = false;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    ProtocolConfig config;
    config.replicates = replicates;
    config.fraction = fraction;
    config.bonferroni_m = m;
    config.trainer.l2_lambda = l2;
    config.trainer.reliability_threshold = reliability;
    config.threads = global.threads;
    if (!split_out.empty()) {
      const auto path = splits.size() == 1
                            ? std::filesystem::path(split_out)
                            : std::filesystem::path(split_out + "." + sanitize_for_filename(specs[i].name));
      save_split(splits[i], path);
    }
    try {
      ProtocolOutcome outcome = run_protocol(ds, splits[i], genre_lists[i], config);
      for (const auto& r : outcome.results) degenerate_seen = degenerate_seen || r.degenerate;
      if (!scores_dir.empty()) {
        std::filesystem::create_directories(scores_dir);
        write_scores_csv(outcome.results,
                         std::filesystem::path(scores_dir) /
                             ("scores_" + sanitize_for_filename(specs[i].name) + ".csv"));
      }
      report.attrition[specs[i].name] = outcome.n_unreliable;
      for (auto& r : outcome.results) report.tcav.push_back(std::move(r));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::all_replicates_unreliable) throw;
      // Reported, not fatal: the remaining concepts still run.
      std::cerr << "warning: " << e.what() << "\n";
      report.attrition[specs[i].name] = replicates;
      degenerate_seen = true;
    }
  }

  emit(report, out, csv_dir);
  if (global.verbose) std::cerr << "report written to " << out << "\n";
  if (degenerate_seen && global.strict) return 3;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept-bias audits for frozen embedding spaces"};
  app.require_subcommand(1);

  GlobalOpts global;
  global.seed = default_seed();
  app.add_option("--seed", global.seed, "master seed (env CAVPROBE_SEED)")->capture_default_str();
  app.add_option("--threads", global.threads, "worker threads; 0 = all cores, never affects results")
      ->capture_default_str();
  app.add_flag("--verbose", global.verbose, "chatty progress on stderr");
  app.add_flag("--strict", global.strict, "exit 3 on statistical degeneracy warnings");

  // --- synth ---
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic embedding dataset with known geometry");
  std::string synth_config_path, synth_out_emb, synth_out_meta, synth_out_truth, synth_format = "binary";
  synth_cmd->add_option("--config", synth_config_path, "SynthConfig JSON")->required();
  synth_cmd->add_option("--out-emb", synth_out_emb, "embeddings output path")->required();
  synth_cmd->add_option("--out-meta", synth_out_meta, "metadata CSV output path")->required();
  synth_cmd->add_option("--out-truth", synth_out_truth, "ground truth JSON output path");
  synth_cmd->add_option("--format", synth_format, "csv|jsonl|binary")->capture_default_str();

  // --- ingest ---
  auto* ingest_cmd = app.add_subcommand("ingest", "validate embeddings + metadata, optionally convert format");
  std::string in_emb, in_format = "csv", in_meta, out_emb, out_format, out_meta;
  ingest_cmd->add_option("--emb", in_emb, "embeddings file")->required();
  ingest_cmd->add_option("--format", in_format, "csv|jsonl|binary")->capture_default_str();
  ingest_cmd->add_option("--meta", in_meta, "metadata CSV")->required();
  ingest_cmd->add_option("--out-emb", out_emb, "converted embeddings output");
  ingest_cmd->add_option("--out-format", out_format, "output format (defaults to input format)");
  ingest_cmd->add_option("--out-meta", out_meta, "metadata output (defaults alongside --out-emb)");

  // --- split ---
  auto* split_cmd = app.add_subcommand("split", "build a balanced concept train/test split");
  std::string sp_emb, sp_format = "csv", sp_meta, sp_concept, sp_out;
  std::size_t sp_cap = 50;
  split_cmd->add_option("--emb", sp_emb, "embeddings file")->required();
  split_cmd->add_option("--format", sp_format, "csv|jsonl|binary")->capture_default_str();
  split_cmd->add_option("--meta", sp_meta, "metadata CSV")->required();
  split_cmd->add_option("--concept", sp_concept, "attribute=value, e.g. gender=female")->required();
  split_cmd->add_option("--cell-cap", sp_cap, "max training samples per (label, genre) cell")->capture_default_str();
  split_cmd->add_option("--split-out", sp_out, "split JSON output path")->required();

  // --- train ---
  auto* train_cmd = app.add_subcommand("train", "fit a CAV on a split's train side");
  std::string tr_emb, tr_format = "csv", tr_meta, tr_split, tr_out;
  double tr_l2 = 1.0;
  bool tr_standardize = false;
  train_cmd->add_option("--emb", tr_emb, "embeddings file")->required();
  train_cmd->add_option("--format", tr_format, "csv|jsonl|binary")->capture_default_str();
  train_cmd->add_option("--meta", tr_meta, "metadata CSV")->required();
  train_cmd->add_option("--split", tr_split, "split JSON from `cavprobe split`")->required();
  train_cmd->add_option("--l2", tr_l2, "L2 strength on w (scaled by 1/n)")->capture_default_str();
  train_cmd->add_flag("--standardize", tr_standardize, "standardize features, folded back into (w, b)");
  train_cmd->add_option("--out", tr_out, "CAV JSON output path")->required();

  // --- score ---
  auto* score_cmd = app.add_subcommand("score", "run the replicate protocol and emit a TCAV report");
  std::string sc_emb, sc_format = "csv", sc_meta, sc_out = "report.json", sc_csv_dir, sc_scores_dir, sc_split_out;
  std::vector<std::string> sc_concepts, sc_genres = {"all"};
  bool sc_all = false, sc_no_timestamp = false;
  std::size_t sc_replicates = 500, sc_cap = 50, sc_min_support = 50;
  double sc_fraction = 0.25, sc_l2 = 1.0, sc_reliability = 0.65;
  score_cmd->add_option("--dataset,--emb", sc_emb, "embeddings file")->required();
  score_cmd->add_option("--format", sc_format, "csv|jsonl|binary")->capture_default_str();
  score_cmd->add_option("--meta", sc_meta, "metadata CSV")->required();
  score_cmd->add_option("--concept", sc_concepts, "attribute=value (repeatable)");
  score_cmd->add_flag("--concepts-all", sc_all, "one concept per attribute value with enough support");
  score_cmd->add_option("--min-support", sc_min_support, "minimum positives for --concepts-all")
      ->capture_default_str();
  score_cmd->add_option("--genres", sc_genres, "genre list or 'all'")->capture_default_str();
  score_cmd->add_option("--replicates", sc_replicates, "CAVs per concept")->capture_default_str();
  score_cmd->add_option("--fraction", sc_fraction, "train subset per replicate")->capture_default_str();
  score_cmd->add_option("--cell-cap", sc_cap, "max training samples per (label, genre) cell")
      ->capture_default_str();
  score_cmd->add_option("--l2", sc_l2, "L2 strength")->capture_default_str();
  score_cmd->add_option("--reliability-threshold", sc_reliability, "test-accuracy gate")->capture_default_str();
  score_cmd->add_option("--out", sc_out, "report JSON path")->capture_default_str();
  score_cmd->add_option("--csv-dir", sc_csv_dir, "also write per-concept CSV tables here");
  score_cmd->add_option("--scores-out", sc_scores_dir, "dump raw replicate-by-genre score matrices here");
  score_cmd->add_option("--split-out", sc_split_out, "save the concept split(s) for replay");
  score_cmd->add_flag("--no-timestamp", sc_no_timestamp, "omit the timestamp for byte-reproducible reports");

  // --- debias ---
  auto* debias_cmd = app.add_subcommand("debias", "concept-vector interpolation ranking sweep");
  std::string db_emb, db_format = "csv", db_meta, db_base, db_adjust, db_mode = "add", db_pool,
              db_track, db_lambdas = "0:1:0.05", db_out = "curve.csv";
  double db_top = 0.5;
  debias_cmd->add_option("--emb", db_emb, "embeddings file")->required();
  debias_cmd->add_option("--format", db_format, "csv|jsonl|binary")->capture_default_str();
  debias_cmd->add_option("--meta", db_meta, "metadata CSV")->required();
  debias_cmd->add_option("--base", db_base, "base CAV JSON")->required();
  debias_cmd->add_option("--adjust", db_adjust, "adjustment CAV JSON")->required();
  debias_cmd->add_option("--mode", db_mode, "add|subtract")->capture_default_str();
  debias_cmd->add_option("--pool", db_pool, "pool filter, e.g. genre=hiphop (empty = all records)");
  debias_cmd->add_option("--lambdas", db_lambdas, "start:stop:step")->capture_default_str();
  debias_cmd->add_option("--top-fraction", db_top, "ranked fraction to inspect")->capture_default_str();
  debias_cmd->add_option("--track", db_track, "attribute=value whose share is tracked")->required();
  debias_cmd->add_option("--out", db_out, "curve CSV path")->capture_default_str();

  // --- selftest ---
  auto* selftest_cmd = app.add_subcommand("selftest", "synthetic end-to-end pipeline with oracle checks");
  std::string st_out;
  bool st_no_timestamp = false;
  selftest_cmd->add_option("--out", st_out, "write the selftest audit report here");
  selftest_cmd->add_flag("--no-timestamp", st_no_timestamp, "omit the timestamp in the report");

  // --- check-report ---
  auto* check_cmd = app.add_subcommand("check-report", "verify a report's internal consistency");
  std::string ck_report;
  check_cmd->add_option("--report", ck_report, "report JSON")->required();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth_cmd->parsed()) {
      SynthConfig config = synth_config_from_file(synth_config_path);
      auto [ds, truth] = generate(config);
      export_dataset(ds, synth_out_emb, parse_format(synth_format), synth_out_meta);
      if (!synth_out_truth.empty()) save_ground_truth(truth, synth_out_truth);
      if (global.verbose) {
        std::cerr << "generated " << ds.records.size() << " records of dimension " << ds.dimension << "\n";
      }
      return 0;
    }
    if (ingest_cmd->parsed()) {
      Dataset ds = ingest(in_emb, parse_format(in_format), in_meta);
      std::cout << "records: " << ds.records.size() << "\ndimension: " << ds.dimension
                << "\ndropped_missing_metadata: " << ds.dropped_missing_metadata
                << "\nfingerprint: " << dataset_fingerprint(ds) << "\n";
      for (const auto& [attr, values] : ds.attribute_vocabulary) {
        std::cout << attr << ": " << values.size() << " values\n";
      }
      if (!out_emb.empty()) {
        const Format f = parse_format(out_format.empty() ? in_format : out_format);
        const std::string meta_path = out_meta.empty() ? out_emb + ".meta.csv" : out_meta;
        export_dataset(ds, out_emb, f, meta_path);
      }
      return 0;
    }
    if (split_cmd->parsed()) {
      Dataset ds = ingest(sp_emb, parse_format(sp_format), sp_meta);
      ConceptSpec spec = parse_concept(sp_concept, sp_cap, global.seed);
      save_split(build_split(ds, spec), sp_out);
      return 0;
    }
    if (train_cmd->parsed()) {
      Dataset ds = ingest(tr_emb, parse_format(tr_format), tr_meta);
      ConceptSplit split = load_split(tr_split);
      TrainerConfig config;
      config.l2_lambda = tr_l2;
      config.standardize = tr_standardize;
      std::vector<std::vector<double>> xs;
      std::vector<int> ys;
      for (const auto& li : split.flatten_train()) {
        xs.push_back(ds.at(li.id).vector);
        ys.push_back(li.label);
      }
      Cav cav = fit(xs, ys, config);
      cav.concept_name = split.spec.name;
      cav.seed = split.spec.seed;
      std::vector<std::vector<double>> xt;
      std::vector<int> yt;
      for (const auto& li : split.flatten_test()) {
        xt.push_back(ds.at(li.id).vector);
        yt.push_back(li.label);
      }
      if (!xt.empty()) cav.test_accuracy = evaluate_accuracy(cav, make_sample_set(xt, yt));
      save_cav(cav, tr_out);
      if (global.verbose) {
        std::cerr << "train_accuracy=" << cav.train_accuracy << " test_accuracy=" << cav.test_accuracy
                  << (cav.converged ? "" : " (not converged)") << "\n";
      }
      if (global.strict && !cav.converged) return 3;
      return 0;
    }
    if (score_cmd->parsed()) {
      return run_score(global, sc_emb, sc_format, sc_meta, sc_concepts, sc_all, sc_min_support, sc_genres,
                       sc_replicates, sc_fraction, sc_cap, sc_l2, sc_reliability, sc_out, sc_csv_dir,
                       sc_scores_dir, sc_split_out, sc_no_timestamp);
    }
    if (debias_cmd->parsed()) {
      Dataset ds = ingest(db_emb, parse_format(db_format), db_meta);
      Cav base = load_cav(db_base);
      Cav adjustment = load_cav(db_adjust);
      std::vector<std::string> pool_ids;
      if (db_pool.empty()) {
        for (const auto& r : ds.records) pool_ids.push_back(r.id);
      } else if (db_pool.front() == '@') {
        // id list, one per line
        std::ifstream ids(db_pool.substr(1));
        if (!ids) raise(ErrorCode::io_failure, "cannot open pool id list " + db_pool.substr(1));
        std::string id;
        while (std::getline(ids, id)) {
          if (!id.empty() && id.back() == '\r') id.pop_back();
          if (!id.empty()) pool_ids.push_back(id);
        }
      } else {
        const auto eq = db_pool.find('=');
        if (eq == std::string::npos) {
          raise(ErrorCode::invalid_config, "pool must be attribute=value or @ids-file");
        }
        const std::string attr = db_pool.substr(0, eq);
        const std::string value = db_pool.substr(eq + 1);
        for (const auto& r : ds.records) {
          if (r.attribute(attr) == value) pool_ids.push_back(r.id);
        }
      }
      const auto eq = db_track.find('=');
      if (eq == std::string::npos) raise(ErrorCode::invalid_config, "--track must be attribute=value");
      DebiasCurve curve = sweep(base, adjustment, parse_adjust_mode(db_mode), ds, pool_ids,
                                parse_lambda_grid(db_lambdas), db_track.substr(0, eq), db_track.substr(eq + 1),
                                db_top);
      write_curve_csv(curve, db_out);
      return 0;
    }
    if (selftest_cmd->parsed()) {
      const bool ok = run_selftest(global.seed, global.threads, st_out, !st_no_timestamp, std::cout);
      std::cout << (ok ? "selftest: all checks passed\n" : "selftest: FAILED\n");
      return ok ? 0 : 2;
    }
    if (check_cmd->parsed()) {
      const auto problems = check_report(load_report(ck_report));
      for (const auto& p : problems) std::cerr << "inconsistent: " << p << "\n";
      std::cout << (problems.empty() ? "report is self-consistent\n" : "report has inconsistencies\n");
      return problems.empty() ? 0 : 2;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
