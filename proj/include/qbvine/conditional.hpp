#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbvine/errors.hpp"
#include "qbvine/model.hpp"
#include "qbvine/normal.hpp"
#include "qbvine/rng.hpp"

namespace qbvine {

enum class Task { Regression, Classification };

inline std::string to_string(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

inline Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::Regression;
  if (s == "classification") return Task::Classification;
  throw std::invalid_argument("unknown task: " + s);
}

// Binary labels to a continuous scale: class 0 maps to -10, class 1 to +10,
// plus unit Gaussian noise to break ties on the distribution scale.
inline std::vector<double> transform_labels(const std::vector<int>& y,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, {seed_tag::kLabelNoise}));
  std::vector<double> out;
  out.reserve(y.size());
  for (int label : y) {
    if (label != 0 && label != 1)
      throw DataError("transform_labels: labels must be 0 or 1");
    out.push_back((label == 1 ? 10.0 : -10.0) + draw_std_normal(rng));
  }
  return out;
}

inline constexpr double kClassAnchorNegative = -10.0;
inline constexpr double kClassAnchorPositive = 10.0;

struct ClassPrediction {
  double prob_positive = 0.5;
  int label = 0;
  bool degenerate = false;  // both anchor densities vanished; prior rate returned
};

// Conditional density model p(y | x) = c(y, x) p_y(y) / c(x): one joint
// QB-Vine over (y, x_1..x_d) with y in column 0, and a feature-only vine
// sharing the x marginal fits. For one-dimensional feature sets the feature
// copula is identically 1.
class ConditionalModel {
public:
  static ConditionalModel fit(const std::vector<std::vector<double>>& features,
                              const std::vector<double>& y, Task task,
                              const QbVineConfig& config) {
    if (features.size() != y.size())
      throw DataError("fit_conditional: feature/target length mismatch");
    ConditionalModel cm;
    cm.task_ = task;

    std::vector<double> y_cont = y;
    if (task == Task::Classification) {
      std::vector<int> labels;
      labels.reserve(y.size());
      std::size_t t0 = 0, t1 = 0;
      for (double v : y) {
        if (v == 0.0) {
          labels.push_back(0);
          ++t0;
        } else if (v == 1.0) {
          labels.push_back(1);
          ++t1;
        } else {
          throw DataError("fit_conditional: classification targets must be 0 or 1");
        }
      }
      if (t0 == 0 || t1 == 0)
        throw DataError("fit_conditional: both classes must be present");
      cm.q_ = static_cast<double>(t0) / static_cast<double>(t0 + t1);
      y_cont = transform_labels(labels, config.seed);
    }

    std::vector<std::vector<double>> joint_rows(features.size());
    for (std::size_t r = 0; r < features.size(); ++r) {
      joint_rows[r].reserve(features[r].size() + 1);
      joint_rows[r].push_back(y_cont[r]);
      for (double v : features[r]) joint_rows[r].push_back(v);
    }
    cm.joint_ = QbVineModel::fit(joint_rows, config);

    // feature copula on the x pseudo-observations, marginal fits shared
    const std::size_t d_x = features.front().size();
    if (d_x >= 2) {
      std::vector<std::vector<double>> x_cols(
          cm.joint_.pseudo_obs().begin() + 1, cm.joint_.pseudo_obs().end());
      double fb = cm.joint_.report().bandwidth;
      double fb_score = cm.joint_.report().bandwidth_score;
      if (!config.share_bandwidth) {
        BandwidthSelection sel = select_vine_bandwidth(
            x_cols, config, derive_seed(config.seed, {seed_tag::kFeatureVine}));
        fb = sel.bandwidth;
        fb_score = sel.score;
      }
      VineStructure structure = select_structure(x_cols);
      cm.feature_vine_.emplace(
          fit_vine(x_cols, structure, fb, config.truncation_tau, config.threads));
      cm.feature_bandwidth_ = fb;
      cm.feature_bandwidth_score_ = fb_score;
    }
    return cm;
  }

  Task task() const { return task_; }
  double q() const { return q_; }
  const QbVineModel& joint() const { return joint_; }
  const std::optional<VineModel>& feature_vine() const { return feature_vine_; }
  double feature_bandwidth() const { return feature_bandwidth_; }
  int feature_dimension() const { return joint_.dimension() - 1; }

  double conditional_log_density(double y_value, const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != feature_dimension())
      throw std::invalid_argument("conditional_log_density: dimension mismatch");
    std::vector<double> point(x.size() + 1);
    point[0] = y_value;
    for (std::size_t j = 0; j < x.size(); ++j) point[j + 1] = x[j];
    const std::vector<double> u = joint_.pseudo_point(point);
    double ld = joint_.vine().log_density(u) + joint_.marginal_log_density(0, y_value);
    if (feature_vine_) {
      const std::vector<double> ux(u.begin() + 1, u.end());
      ld -= feature_vine_->log_density(ux);
    }
    return ld;
  }

  // Class probability from the conditional densities at the noise-free
  // anchors y = -10 and y = +10.
  ClassPrediction predict_class(const std::vector<double>& x) const {
    if (task_ != Task::Classification)
      throw std::invalid_argument("predict_class: model was fitted for regression");
    const double ld_neg = conditional_log_density(kClassAnchorNegative, x);
    const double ld_pos = conditional_log_density(kClassAnchorPositive, x);
    ClassPrediction pred;
    if (!std::isfinite(ld_neg) && !std::isfinite(ld_pos)) {
      pred.degenerate = true;
      pred.prob_positive = 1.0 - q_;
    } else {
      pred.prob_positive = 1.0 / (1.0 + std::exp(ld_neg - ld_pos));
    }
    pred.label = pred.prob_positive >= 0.5 ? 1 : 0;
    return pred;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"format", "qbvine-model"},
                     {"version", 1},
                     {"kind", "conditional"},
                     {"task", to_string(task_)},
                     {"q", q_},
                     {"joint", joint_.to_json()}};
    if (feature_vine_) {
      j["feature_vine"] = detail::vine_to_json(*feature_vine_);
      j["feature_bandwidth"] = feature_bandwidth_;
      j["feature_bandwidth_score"] = feature_bandwidth_score_;
    }
    return j;
  }

  static ConditionalModel from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "qbvine-model" || j.value("kind", "") != "conditional")
      throw DataError("model file: not a conditional qbvine model");
    ConditionalModel cm;
    cm.task_ = task_from_string(j.at("task").get<std::string>());
    cm.q_ = j.at("q").get<double>();
    cm.joint_ = QbVineModel::from_json(j.at("joint"));
    if (j.contains("feature_vine")) {
      cm.feature_vine_.emplace(detail::vine_from_json(j.at("feature_vine")));
      cm.feature_bandwidth_ = j.at("feature_bandwidth").get<double>();
      cm.feature_bandwidth_score_ = j.value("feature_bandwidth_score", 0.0);
    }
    return cm;
  }

private:
  Task task_ = Task::Regression;
  double q_ = 0.5;
  QbVineModel joint_;
  std::optional<VineModel> feature_vine_;
  double feature_bandwidth_ = 0.0;
  double feature_bandwidth_score_ = 0.0;
};

inline ConditionalModel fit_conditional(const std::vector<std::vector<double>>& features,
                                        const std::vector<double>& y, Task task,
                                        const QbVineConfig& config) {
  return ConditionalModel::fit(features, y, task, config);
}

}  // namespace qbvine
