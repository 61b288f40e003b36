#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qbvine {

struct ScoreReport {
  double mean = 0.0;
  std::vector<double> per_point;
  std::size_t n_points = 0;
  double beta = 1.0;
};

namespace detail {

inline double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double pow_distance(const std::vector<double>& a, const std::vector<double>& b,
                           double beta) {
  const double sq = sq_distance(a, b);
  if (beta == 1.0) return std::sqrt(sq);
  if (beta == 2.0) return sq;
  return std::pow(sq, 0.5 * beta);
}

}  // namespace detail

// Monte-Carlo estimator of the energy score of the sample cloud {y_j}
// against a single observation x:
//
//   (2/m) sum_j ||y_j - x||^beta  -  1/(m(m-1)) sum_{j != k} ||y_j - y_k||^beta
//
// Unbiased for S_E^beta when the y_j are i.i.d. draws from the model.
inline double energy_score(const std::vector<std::vector<double>>& samples,
                           const std::vector<double>& x, double beta = 1.0) {
  const std::size_t m = samples.size();
  if (m < 2) throw std::invalid_argument("energy_score: need at least 2 samples");
  if (!(beta > 0.0 && beta <= 2.0))
    throw std::invalid_argument("energy_score: beta must lie in (0,2]");
  for (const auto& y : samples)
    if (y.size() != x.size())
      throw std::invalid_argument("energy_score: dimension mismatch");

  double data_term = 0.0;
  for (const auto& y : samples) data_term += detail::pow_distance(y, x, beta);
  data_term *= 2.0 / static_cast<double>(m);

  double pair_term = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = j + 1; k < m; ++k)
      pair_term += detail::pow_distance(samples[j], samples[k], beta);
  pair_term *= 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));

  return data_term - pair_term;
}

// Empirical score of the samples against a whole dataset: the mean of the
// per-observation energy scores.
inline ScoreReport energy_score_total(const std::vector<std::vector<double>>& samples,
                                      const std::vector<std::vector<double>>& data,
                                      double beta = 1.0) {
  if (data.empty()) throw std::invalid_argument("energy_score_total: empty data");
  ScoreReport report;
  report.beta = beta;
  report.n_points = data.size();
  report.per_point.reserve(data.size());

  // The pairwise sample term does not depend on the observation; hoist it.
  const std::size_t m = samples.size();
  if (m < 2) throw std::invalid_argument("energy_score_total: need at least 2 samples");
  if (!(beta > 0.0 && beta <= 2.0))
    throw std::invalid_argument("energy_score_total: beta must lie in (0,2]");
  double pair_term = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = j + 1; k < m; ++k)
      pair_term += detail::pow_distance(samples[j], samples[k], beta);
  pair_term *= 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1));

  double total = 0.0;
  for (const auto& x : data) {
    for (const auto& y : samples)
      if (y.size() != x.size())
        throw std::invalid_argument("energy_score_total: dimension mismatch");
    double data_term = 0.0;
    for (const auto& y : samples) data_term += detail::pow_distance(y, x, beta);
    data_term *= 2.0 / static_cast<double>(m);
    report.per_point.push_back(data_term - pair_term);
    total += report.per_point.back();
  }
  report.mean = total / static_cast<double>(data.size());
  return report;
}

// Scalar-parameter version of the unbiased energy-score gradient: given
// samples y_j(theta) and their derivatives dy_j/dtheta, returns
// d/dtheta of the Monte-Carlo estimator above. Kept as a reference for
// gradient-based tuning; the grid-search tuners do not call it.
inline double energy_score_gradient(const std::vector<std::vector<double>>& samples,
                                    const std::vector<std::vector<double>>& jacobians,
                                    const std::vector<double>& x, double beta = 1.0) {
  const std::size_t m = samples.size();
  if (m < 2) throw std::invalid_argument("energy_score_gradient: need at least 2 samples");
  if (jacobians.size() != m)
    throw std::invalid_argument("energy_score_gradient: one jacobian per sample required");
  if (!(beta > 0.0 && beta <= 2.0))
    throw std::invalid_argument("energy_score_gradient: beta must lie in (0,2]");

  // d/dtheta ||u||^beta = beta * ||u||^(beta-2) * u . du/dtheta
  auto grad_norm = [beta](const std::vector<double>& u, const std::vector<double>& du) {
    double sq = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      sq += u[i] * u[i];
      dot += u[i] * du[i];
    }
    if (sq == 0.0) return 0.0;
    return beta * std::pow(sq, 0.5 * beta - 1.0) * dot;
  };

  double g = 0.0;
  std::vector<double> diff(x.size()), ddiff(x.size());
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = samples[j][i] - x[i];
    g += 2.0 / static_cast<double>(m) * grad_norm(diff, jacobians[j]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t k = 0; k < m; ++k) {
      if (j == k) continue;
      for (std::size_t i = 0; i < x.size(); ++i) {
        diff[i] = samples[j][i] - samples[k][i];
        ddiff[i] = jacobians[j][i] - jacobians[k][i];
      }
      g -= grad_norm(diff, ddiff) / (static_cast<double>(m) * static_cast<double>(m - 1));
    }
  }
  return g;
}

// Mean negative log predictive density over a test set. Inputs are log
// densities; a -inf entry (zero density) propagates to a +inf score.
inline double log_predictive_score(const std::vector<double>& log_densities) {
  if (log_densities.empty())
    throw std::invalid_argument("log_predictive_score: empty input");
  double s = 0.0;
  for (double ld : log_densities) s += -ld;
  return s / static_cast<double>(log_densities.size());
}

}  // namespace qbvine
