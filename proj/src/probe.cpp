#include "cavprobe/probe.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cavprobe/errors.hpp"

namespace cavprobe {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  if (z > 35.0) return z;
  if (z < -35.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1 for constant features
};

Standardizer compute_standardizer(const Eigen::MatrixXd& x) {
  Standardizer s;
  s.mean = x.colwise().mean();
  Eigen::VectorXd var = (x.rowwise() - s.mean.transpose()).array().square().colwise().mean();
  s.scale = var.array().sqrt();
  for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
    if (s.scale[i] == 0.0) s.scale[i] = 1.0;
  }
  return s;
}

}  // namespace

SampleSet make_sample_set(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  if (xs.empty()) raise(ErrorCode::empty_sample_list, "no samples");
  if (xs.size() != ys.size()) raise(ErrorCode::invalid_config, "xs and ys lengths differ");
  const std::size_t dim = xs.front().size();
  SampleSet s;
  s.x.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(dim));
  s.y.resize(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != dim) {
      raise(ErrorCode::dimension_mismatch, "sample " + std::to_string(i) + " has length " +
                                               std::to_string(xs[i].size()) + ", expected " + std::to_string(dim));
    }
    for (std::size_t j = 0; j < dim; ++j) s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    s.y[static_cast<Eigen::Index>(i)] = ys[i] != 0 ? 1.0 : 0.0;
  }
  return s;
}

double logistic_loss(const SampleSet& s, const Eigen::VectorXd& w, double b, double l2_lambda) {
  const Eigen::Index n = s.x.rows();
  Eigen::VectorXd z = s.x * w;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z[i] + b;
    loss += softplus(zi) - s.y[i] * zi;
  }
  loss /= static_cast<double>(n);
  loss += l2_lambda / (2.0 * static_cast<double>(n)) * w.squaredNorm();
  return loss;
}

void logistic_gradient(const SampleSet& s, const Eigen::VectorXd& w, double b, double l2_lambda,
                       Eigen::VectorXd& grad_w, double& grad_b) {
  const Eigen::Index n = s.x.rows();
  Eigen::VectorXd z = s.x * w;
  Eigen::VectorXd residual(n);
  for (Eigen::Index i = 0; i < n; ++i) residual[i] = sigmoid(z[i] + b) - s.y[i];
  grad_w = (s.x.transpose() * residual) / static_cast<double>(n);
  grad_w += (l2_lambda / static_cast<double>(n)) * w;
  grad_b = residual.sum() / static_cast<double>(n);
}

namespace {

Cav fit_impl(const SampleSet& raw, const TrainerConfig& config, const Eigen::VectorXd& w0, double b0,
             const FitObserver& observer) {
  const Eigen::Index n = raw.x.rows();
  const Eigen::Index d = raw.x.cols();
  if (n == 0) raise(ErrorCode::empty_sample_list, "no samples");
  if (d == 0) raise(ErrorCode::invalid_config, "zero-dimensional samples");
  if (config.l2_lambda < 0.0) raise(ErrorCode::invalid_config, "l2_lambda must be >= 0");
  const double pos = raw.y.sum();
  if (pos == 0.0 || pos == static_cast<double>(n)) {
    raise(ErrorCode::single_class_input, "need at least one sample of each class");
  }

  SampleSet work;
  Standardizer std_xf;
  const SampleSet* s = &raw;
  if (config.standardize) {
    std_xf = compute_standardizer(raw.x);
    work.x = (raw.x.rowwise() - std_xf.mean.transpose()).array().rowwise() / std_xf.scale.transpose().array();
    work.y = raw.y;
    s = &work;
  }

  Eigen::VectorXd w = w0;
  double b = b0;
  double loss = logistic_loss(*s, w, b, config.l2_lambda);
  if (!std::isfinite(loss)) raise(ErrorCode::non_finite_loss, "non-finite loss at initialization");

  Eigen::VectorXd grad_w(d);
  double grad_b = 0.0;
  bool converged = false;
  std::size_t iter = 0;
  const double nd = static_cast<double>(n);

  for (; iter < config.max_iterations; ++iter) {
    logistic_gradient(*s, w, b, config.l2_lambda, grad_w, grad_b);
    const double grad_inf = std::max(grad_w.lpNorm<Eigen::Infinity>(), std::fabs(grad_b));
    if (grad_inf <= config.gradient_tolerance) {
      converged = true;
      break;
    }

    // Newton system on (w, b) with the L2 term on the w block only.
    Eigen::VectorXd z = s->x * w;
    Eigen::VectorXd weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(z[i] + b);
      weight[i] = std::max(p * (1.0 - p), 1e-12);
    }
    Eigen::MatrixXd xw = s->x.array().colwise() * weight.array();
    Eigen::MatrixXd h(d + 1, d + 1);
    h.topLeftCorner(d, d).noalias() = (s->x.transpose() * xw) / nd;
    h.topLeftCorner(d, d).diagonal().array() += config.l2_lambda / nd;
    Eigen::VectorXd cross = xw.colwise().sum() / nd;
    h.block(0, d, d, 1) = cross;
    h.block(d, 0, 1, d) = cross.transpose();
    h(d, d) = weight.sum() / nd;

    Eigen::VectorXd g(d + 1);
    g.head(d) = grad_w;
    g[d] = grad_b;

    Eigen::VectorXd step;
    double damping = 0.0;
    for (;;) {
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
      damping = damping == 0.0 ? 1e-8 : damping * 10.0;
      if (damping > 1e6) {
        step = g;  // gradient fallback
        break;
      }
      h.diagonal().array() += damping;
    }

    const double directional = g.dot(step);
    double t = 1.0;
    Eigen::VectorXd w_next;
    double b_next, loss_next;
    if (config.step_rule == StepRule::backtracking) {
      bool accepted = false;
      for (int back = 0; back < 60; ++back) {
        w_next = w - t * step.head(d);
        b_next = b - t * step[d];
        loss_next = logistic_loss(*s, w_next, b_next, config.l2_lambda);
        if (std::isfinite(loss_next) && loss_next <= loss - 1e-4 * t * directional) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;  // stalled at machine precision short of the tolerance
    } else {
      w_next = w - step.head(d);
      b_next = b - step[d];
      loss_next = logistic_loss(*s, w_next, b_next, config.l2_lambda);
      if (!std::isfinite(loss_next)) {
        raise(ErrorCode::non_finite_loss, "diverged at iteration " + std::to_string(iter));
      }
    }
    w = std::move(w_next);
    b = b_next;
    loss = loss_next;
    if (observer) observer(iter, loss);
  }

  Cav cav;
  cav.config = config;
  cav.converged = converged;
  cav.iterations = iter;
  cav.final_loss = loss;
  if (config.standardize) {
    // Fold x -> (x - mean)/scale into (w, b) so projections apply to raw vectors.
    Eigen::VectorXd w_raw = w.array() / std_xf.scale.array();
    cav.b = b - w_raw.dot(std_xf.mean);
    cav.w.assign(w_raw.data(), w_raw.data() + w_raw.size());
  } else {
    cav.b = b;
    cav.w.assign(w.data(), w.data() + w.size());
  }
  cav.train_accuracy = evaluate_accuracy(cav, raw);
  return cav;
}

}  // namespace

Cav fit(const SampleSet& samples, const TrainerConfig& config, const FitObserver& observer) {
  return fit_impl(samples, config, Eigen::VectorXd::Zero(samples.x.cols()), 0.0, observer);
}

Cav fit(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
        const TrainerConfig& config, const FitObserver& observer) {
  return fit(make_sample_set(xs, ys), config, observer);
}

Cav fit_from(const SampleSet& samples, const TrainerConfig& config, const Eigen::VectorXd& w0,
             double b0, const FitObserver& observer) {
  if (w0.size() != samples.x.cols()) raise(ErrorCode::dimension_mismatch, "initial w has wrong length");
  return fit_impl(samples, config, w0, b0, observer);
}

double evaluate_accuracy(const Cav& cav, const SampleSet& samples) {
  const Eigen::Index n = samples.x.rows();
  if (n == 0) raise(ErrorCode::empty_sample_list, "no samples to evaluate");
  if (static_cast<std::size_t>(samples.x.cols()) != cav.w.size()) {
    raise(ErrorCode::dimension_mismatch, "cav dimension " + std::to_string(cav.w.size()) + " vs samples " +
                                             std::to_string(samples.x.cols()));
  }
  Eigen::Map<const Eigen::VectorXd> w(cav.w.data(), static_cast<Eigen::Index>(cav.w.size()));
  Eigen::VectorXd z = samples.x * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int predicted = z[i] + cav.b > 0.0 ? 1 : 0;
    if (predicted == static_cast<int>(samples.y[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

Reliability reliability_gate(const Cav& cav, const TrainerConfig& config) {
  return cav.test_accuracy >= config.reliability_threshold ? Reliability::reliable : Reliability::unreliable;
}

namespace {

nlohmann::ordered_json config_to_json(const TrainerConfig& c) {
  return {{"l2_lambda", c.l2_lambda},
          {"max_iterations", c.max_iterations},
          {"gradient_tolerance", c.gradient_tolerance},
          {"step_rule", c.step_rule == StepRule::backtracking ? "backtracking" : "fixed"},
          {"reliability_threshold", c.reliability_threshold},
          {"standardize", c.standardize}};
}

TrainerConfig config_from_json(const nlohmann::json& j) {
  TrainerConfig c;
  c.l2_lambda = j.at("l2_lambda").get<double>();
  c.max_iterations = j.at("max_iterations").get<std::size_t>();
  c.gradient_tolerance = j.at("gradient_tolerance").get<double>();
  c.step_rule = j.at("step_rule").get<std::string>() == "fixed" ? StepRule::fixed : StepRule::backtracking;
  c.reliability_threshold = j.at("reliability_threshold").get<double>();
  c.standardize = j.at("standardize").get<bool>();
  return c;
}

}  // namespace

void save_cav(const Cav& cav, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["concept"] = cav.concept_name;
  j["dim"] = cav.w.size();
  j["w"] = cav.w;
  j["b"] = cav.b;
  j["train_accuracy"] = cav.train_accuracy;
  j["test_accuracy"] = cav.test_accuracy;
  j["converged"] = cav.converged;
  j["iterations"] = cav.iterations;
  j["final_loss"] = cav.final_loss;
  j["config"] = config_to_json(cav.config);
  j["seed"] = cav.seed;
  if (cav.replicate_index) {
    j["replicate_index"] = *cav.replicate_index;
  } else {
    j["replicate_index"] = nullptr;
  }
  std::ofstream out(path);
  if (!out) raise(ErrorCode::io_failure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) raise(ErrorCode::io_failure, "short write to " + path.string());
}

Cav load_cav(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::io_failure, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) raise(ErrorCode::malformed_file, path.string() + ": invalid JSON");
  try {
    Cav cav;
    cav.concept_name = j.at("concept").get<std::string>();
    cav.w = j.at("w").get<std::vector<double>>();
    cav.b = j.at("b").get<double>();
    cav.train_accuracy = j.at("train_accuracy").get<double>();
    cav.test_accuracy = j.at("test_accuracy").get<double>();
    cav.converged = j.at("converged").get<bool>();
    cav.iterations = j.at("iterations").get<std::size_t>();
    cav.final_loss = j.at("final_loss").get<double>();
    cav.config = config_from_json(j.at("config"));
    cav.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("replicate_index").is_null()) cav.replicate_index = j.at("replicate_index").get<std::uint64_t>();
    if (cav.w.size() != j.at("dim").get<std::size_t>()) {
      raise(ErrorCode::dimension_mismatch, path.string() + ": dim field disagrees with w length");
    }
    return cav;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::malformed_file, path.string() + ": " + e.what());
  }
}

}  // namespace cavprobe
