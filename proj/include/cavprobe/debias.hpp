#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cavprobe/data_model.hpp"
#include "cavprobe/probe.hpp"

namespace cavprobe {

enum class AdjustMode { add_concept, subtract_concept };

const char* adjust_mode_name(AdjustMode mode);
AdjustMode parse_adjust_mode(const std::string& name);  // "add" | "subtract"

// (1-lambda)*base +- lambda*adjustment, applied to w and b alike, no
// renormalization. lambda = 0 reproduces the base exactly.
struct AdjustedCav {
  std::string base_name;
  std::string adjustment_name;
  double lambda = 0.0;
  AdjustMode mode = AdjustMode::add_concept;
  std::vector<double> w;
  double b = 0.0;
};

AdjustedCav adjust(const Cav& base, const Cav& adjustment, double lambda, AdjustMode mode);

// Ids sorted by descending projection w.x + b; ties broken by ascending id.
std::vector<std::string> rank(const std::vector<double>& w, double b, const Dataset& ds,
                              const std::vector<std::string>& pool_ids);
std::vector<std::string> rank(const Cav& cav, const Dataset& ds, const std::vector<std::string>& pool_ids);
std::vector<std::string> rank(const AdjustedCav& cav, const Dataset& ds,
                              const std::vector<std::string>& pool_ids);

// Share of the top ceil(top_fraction * N) ranked ids whose attribute equals
// value. Every pool record must carry the attribute.
double demographic_ratio(const std::vector<std::string>& ranking, const Dataset& ds,
                         const std::string& attribute, const std::string& value, double top_fraction);

struct DebiasCurve {
  std::vector<double> lambdas;  // strictly increasing
  std::vector<double> ratios;
  double top_fraction = 0.5;
  std::string attribute;
  std::string attribute_value_tracked;
  std::string base_name;
  std::string adjustment_name;
  AdjustMode mode = AdjustMode::add_concept;
};

DebiasCurve sweep(const Cav& base, const Cav& adjustment, AdjustMode mode, const Dataset& ds,
                  const std::vector<std::string>& pool_ids, const std::vector<double>& lambdas,
                  const std::string& attribute, const std::string& value, double top_fraction);

// Columns lambda,ratio.
void write_curve_csv(const DebiasCurve& curve, const std::filesystem::path& path);

// "0:1:0.05" -> {0, 0.05, ..., 1}
std::vector<double> parse_lambda_grid(const std::string& text);

}  // namespace cavprobe
