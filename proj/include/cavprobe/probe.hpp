#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cavprobe/data_model.hpp"

namespace cavprobe {

enum class StepRule { fixed, backtracking };

struct TrainerConfig {
  double l2_lambda = 1.0;           // on w only, scaled by 1/n; never on b
  std::size_t max_iterations = 1000;
  double gradient_tolerance = 1e-7;  // infinity norm
  StepRule step_rule = StepRule::backtracking;
  double reliability_threshold = 0.65;
  bool standardize = false;  // folded back into (w, b) on output
};

// Learned concept direction: the normal vector of the fitted decision
// boundary plus its intercept and training provenance.
struct Cav {
  std::string concept_name;
  std::vector<double> w;
  double b = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double final_loss = 0.0;
  std::optional<std::uint64_t> replicate_index;
  std::uint64_t seed = 0;
  TrainerConfig config;
};

enum class Reliability { reliable, unreliable };

// Labels are 0/1. Matrix rows are samples.
struct SampleSet {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

SampleSet make_sample_set(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys);

// Mean negative log-likelihood of sigma(w.x + b) plus l2_lambda/(2n) * |w|^2.
double logistic_loss(const SampleSet& s, const Eigen::VectorXd& w, double b, double l2_lambda);
void logistic_gradient(const SampleSet& s, const Eigen::VectorXd& w, double b, double l2_lambda,
                       Eigen::VectorXd& grad_w, double& grad_b);

using FitObserver = std::function<void(std::size_t iteration, double loss)>;

// Newton direction with either backtracking (Armijo) or full fixed steps,
// started from zero. Convexity makes the result initialization-independent;
// hitting max_iterations clears `converged` instead of failing.
Cav fit(const SampleSet& samples, const TrainerConfig& config, const FitObserver& observer = nullptr);
Cav fit(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
        const TrainerConfig& config, const FitObserver& observer = nullptr);

// Variant with an explicit starting point (used by convexity checks).
Cav fit_from(const SampleSet& samples, const TrainerConfig& config, const Eigen::VectorXd& w0,
             double b0, const FitObserver& observer = nullptr);

// Fraction of samples with sign(w.x + b > 0) equal to the label.
double evaluate_accuracy(const Cav& cav, const SampleSet& samples);

Reliability reliability_gate(const Cav& cav, const TrainerConfig& config);

double sigmoid(double z);

void save_cav(const Cav& cav, const std::filesystem::path& path);
Cav load_cav(const std::filesystem::path& path);

}  // namespace cavprobe
