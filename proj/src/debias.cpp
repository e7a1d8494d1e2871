#include "cavprobe/debias.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cavprobe/errors.hpp"

namespace cavprobe {

const char* adjust_mode_name(AdjustMode mode) {
  return mode == AdjustMode::add_concept ? "add" : "subtract";
}

AdjustMode parse_adjust_mode(const std::string& name) {
  if (name == "add") return AdjustMode::add_concept;
  if (name == "subtract") return AdjustMode::subtract_concept;
  raise(ErrorCode::invalid_config, "mode '" + name + "' (expected add or subtract)");
}

AdjustedCav adjust(const Cav& base, const Cav& adjustment, double lambda, AdjustMode mode) {
  if (base.w.size() != adjustment.w.size()) {
    raise(ErrorCode::dimension_mismatch, "base dim " + std::to_string(base.w.size()) + " vs adjustment " +
                                             std::to_string(adjustment.w.size()));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    raise(ErrorCode::lambda_out_of_range, std::to_string(lambda));
  }
  AdjustedCav out;
  out.base_name = base.concept_name;
  out.adjustment_name = adjustment.concept_name;
  out.lambda = lambda;
  out.mode = mode;
  const double sign = mode == AdjustMode::add_concept ? 1.0 : -1.0;
  out.w.resize(base.w.size());
  if (lambda == 0.0) {
    out.w = base.w;  // boundary exactness: bit-for-bit the base
    out.b = base.b;
    return out;
  }
  for (std::size_t i = 0; i < base.w.size(); ++i) {
    out.w[i] = (1.0 - lambda) * base.w[i] + sign * lambda * adjustment.w[i];
  }
  out.b = (1.0 - lambda) * base.b + sign * lambda * adjustment.b;
  return out;
}

std::vector<std::string> rank(const std::vector<double>& w, double b, const Dataset& ds,
                              const std::vector<std::string>& pool_ids) {
  if (pool_ids.empty()) raise(ErrorCode::empty_sample_list, "empty pool");
  struct Entry {
    double projection;
    const std::string* id;
  };
  std::vector<Entry> entries;
  entries.reserve(pool_ids.size());
  for (const auto& id : pool_ids) {
    const EmbeddingRecord& rec = ds.at(id);
    if (rec.vector.size() != w.size()) {
      raise(ErrorCode::dimension_mismatch, "record '" + id + "'");
    }
    double p = b;
    for (std::size_t i = 0; i < w.size(); ++i) p += w[i] * rec.vector[i];
    entries.push_back({p, &id});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b2) {
    if (a.projection != b2.projection) return a.projection > b2.projection;
    return *a.id < *b2.id;
  });
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(*e.id);
  return out;
}

std::vector<std::string> rank(const Cav& cav, const Dataset& ds, const std::vector<std::string>& pool_ids) {
  return rank(cav.w, cav.b, ds, pool_ids);
}

std::vector<std::string> rank(const AdjustedCav& cav, const Dataset& ds,
                              const std::vector<std::string>& pool_ids) {
  return rank(cav.w, cav.b, ds, pool_ids);
}

double demographic_ratio(const std::vector<std::string>& ranking, const Dataset& ds,
                         const std::string& attribute, const std::string& value, double top_fraction) {
  if (ranking.empty()) raise(ErrorCode::empty_sample_list, "empty ranking");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    raise(ErrorCode::invalid_config, "top_fraction must lie in (0, 1]");
  }
  const std::size_t top =
      static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(ranking.size())));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) {
    const EmbeddingRecord& rec = ds.at(ranking[i]);
    const std::string& actual = rec.attribute(attribute);
    if (actual.empty()) {
      raise(ErrorCode::missing_attribute, "record '" + rec.id + "' lacks attribute '" + attribute + "'");
    }
    if (actual == value) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(top);
}

DebiasCurve sweep(const Cav& base, const Cav& adjustment, AdjustMode mode, const Dataset& ds,
                  const std::vector<std::string>& pool_ids, const std::vector<double>& lambdas,
                  const std::string& attribute, const std::string& value, double top_fraction) {
  if (lambdas.empty()) raise(ErrorCode::invalid_config, "empty lambda grid");
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > lambdas[i - 1])) raise(ErrorCode::invalid_config, "lambdas must be strictly increasing");
  }
  DebiasCurve curve;
  curve.lambdas = lambdas;
  curve.top_fraction = top_fraction;
  curve.attribute = attribute;
  curve.attribute_value_tracked = value;
  curve.base_name = base.concept_name;
  curve.adjustment_name = adjustment.concept_name;
  curve.mode = mode;
  curve.ratios.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const AdjustedCav adj = adjust(base, adjustment, lambda, mode);
    curve.ratios.push_back(demographic_ratio(rank(adj, ds, pool_ids), ds, attribute, value, top_fraction));
  }
  return curve;
}

void write_curve_csv(const DebiasCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
  out << "lambda,ratio\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.lambdas[i], curve.ratios[i]);
    out << buf;
  }
  if (!out) raise(ErrorCode::io_failure, "short write to " + path.string());
}

std::vector<double> parse_lambda_grid(const std::string& text) {
  // start:stop:step
  const auto c1 = text.find(':');
  const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos) {
    raise(ErrorCode::invalid_config, "lambda grid '" + text + "' (expected start:stop:step)");
  }
  double start, stop, step;
  try {
    start = std::stod(text.substr(0, c1));
    stop = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
    step = std::stod(text.substr(c2 + 1));
  } catch (const std::exception&) {
    raise(ErrorCode::invalid_config, "lambda grid '" + text + "'");
  }
  if (step <= 0.0 || stop < start) raise(ErrorCode::invalid_config, "lambda grid '" + text + "'");
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = start + step * i;
    if (v > stop + 1e-12) break;
    out.push_back(std::min(v, stop));
  }
  return out;
}

}  // namespace cavprobe
