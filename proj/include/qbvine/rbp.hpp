#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qbvine/errors.hpp"
#include "qbvine/initial.hpp"
#include "qbvine/inverse_cdf.hpp"
#include "qbvine/normal.hpp"
#include "qbvine/parallel.hpp"
#include "qbvine/rng.hpp"
#include "qbvine/scoring.hpp"

namespace qbvine {

// Clamp applied to cached v values; wide enough to be statistically
// invisible, tight enough to keep probit transforms finite.
inline constexpr double kProbClamp = 1e-12;
// Tail guard for intermediate recursion state.
inline constexpr double kTailGuard = 1e-15;

inline double clamp_prob(double u, double eps = kProbClamp) {
  return std::clamp(u, eps, 1.0 - eps);
}

// Step weight of the recursion: alpha_k = (2 - 1/k) / (k + 1).
inline double alpha_weight(std::int64_t k) {
  if (k < 1) throw std::invalid_argument("alpha_weight: k must be >= 1");
  const double kd = static_cast<double>(k);
  return (2.0 - 1.0 / kd) / (kd + 1.0);
}

// Conditional Gaussian copula distribution
//   H_rho(u, v) = Phi((Phi^-1(u) - rho Phi^-1(v)) / sqrt(1 - rho^2)).
// rho == 0 short-circuits to u so the independent update is exact.
inline double h_rho(double u, double v, double rho) {
  if (!(std::fabs(rho) < 1.0))
    throw std::invalid_argument("h_rho: |rho| must be < 1");
  if (!(u > 0.0 && u < 1.0) || !(v > 0.0 && v < 1.0))
    throw std::invalid_argument("h_rho: u, v must lie in (0,1)");
  if (rho == 0.0) return u;
  const double s = std_normal_quantile(u);
  const double t = std_normal_quantile(v);
  return std_normal_cdf((s - rho * t) / std::sqrt(1.0 - rho * rho));
}

// Bivariate Gaussian copula density in closed form:
//   (1-rho^2)^{-1/2} exp(-(rho^2(s^2+t^2) - 2 rho s t) / (2(1-rho^2)))
// with s = Phi^-1(u), t = Phi^-1(v). rho == 0 short-circuits to 1.
inline double gaussian_copula_density(double u, double v, double rho) {
  if (!(std::fabs(rho) < 1.0))
    throw std::invalid_argument("gaussian_copula_density: |rho| must be < 1");
  if (!(u > 0.0 && u < 1.0) || !(v > 0.0 && v < 1.0))
    throw std::invalid_argument("gaussian_copula_density: u, v must lie in (0,1)");
  if (rho == 0.0) return 1.0;
  const double s = std_normal_quantile(u);
  const double t = std_normal_quantile(v);
  const double r2 = rho * rho;
  const double expo = -(r2 * (s * s + t * t) - 2.0 * rho * s * t) / (2.0 * (1.0 - r2));
  return std::exp(expo) / std::sqrt(1.0 - r2);
}

// Fitted univariate recursive predictive. Caches v_k = P^{(k-1)}(x^k) and
// the probit images of the v_k, so cdf and pdf evaluate in O(n) per query
// with one quantile transform per step.
class PredictiveMarginal {
public:
  PredictiveMarginal(std::vector<double> observations, double rho,
                     InitialPredictive initial)
      : rho_(rho), initial_(initial), train_seq_(std::move(observations)) {
    if (train_seq_.empty())
      throw std::invalid_argument("PredictiveMarginal: no observations");
    if (!(std::fabs(rho_) < 1.0))
      throw std::invalid_argument("PredictiveMarginal: |rho| must be < 1");
    for (double x : train_seq_)
      if (!std::isfinite(x))
        throw std::invalid_argument("PredictiveMarginal: non-finite observation");
    init_constants();
    const std::size_t n = train_seq_.size();
    cached_v_.reserve(n);
    cached_qv_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      double u = clamp_prob(initial_.cdf(train_seq_[k]), kTailGuard);
      for (std::size_t j = 0; j < k; ++j) u = step_cdf(u, j);
      const double v = clamp_prob(u);
      cached_v_.push_back(v);
      cached_qv_.push_back(std_normal_quantile(v));
    }
  }

  double cdf(double x) const {
    double u = clamp_prob(initial_.cdf(x), kTailGuard);
    if (rho_ == 0.0) return u;  // every update is the identity mixture
    for (std::size_t k = 0; k < cached_v_.size(); ++k) u = step_cdf(u, k);
    return u;
  }

  double log_pdf(double x) const {
    if (rho_ == 0.0) return initial_.log_pdf(x);
    double u = clamp_prob(initial_.cdf(x), kTailGuard);
    double lp = initial_.log_pdf(x);
    for (std::size_t k = 0; k < cached_v_.size(); ++k) {
      const double s = std_normal_quantile(u);
      const double qv = cached_qv_[k];
      const double cop =
          inv_sqrt1mr2_ *
          std::exp(-(rho_ * rho_ * (s * s + qv * qv) - 2.0 * rho_ * s * qv) * half_inv_1mr2_);
      lp += std::log((1.0 - alphas_[k]) + alphas_[k] * cop);
      const double h = std_normal_cdf((s - rho_ * qv) * inv_sqrt1mr2_);
      u = clamp_prob((1.0 - alphas_[k]) * u + alphas_[k] * h, kTailGuard);
    }
    return lp;
  }

  double pdf(double x) const { return std::exp(log_pdf(x)); }

  double rho() const { return rho_; }
  const InitialPredictive& initial() const { return initial_; }
  const std::vector<double>& train_seq() const { return train_seq_; }
  const std::vector<double>& cached_v() const { return cached_v_; }
  const std::vector<double>& alphas() const { return alphas_; }

  // Rebuilds a fitted marginal from serialized state without rerunning the
  // O(n^2) recursion.
  static PredictiveMarginal restore(std::vector<double> observations, double rho,
                                    InitialPredictive initial,
                                    std::vector<double> cached_v) {
    if (observations.empty() || observations.size() != cached_v.size())
      throw std::invalid_argument("PredictiveMarginal::restore: bad state");
    PredictiveMarginal m(rho, initial);
    m.train_seq_ = std::move(observations);
    m.cached_v_ = std::move(cached_v);
    m.init_constants();
    m.cached_qv_.reserve(m.cached_v_.size());
    for (double v : m.cached_v_) {
      if (!(v > 0.0 && v < 1.0))
        throw std::invalid_argument("PredictiveMarginal::restore: v outside (0,1)");
      m.cached_qv_.push_back(std_normal_quantile(v));
    }
    return m;
  }

private:
  PredictiveMarginal(double rho, InitialPredictive initial)
      : rho_(rho), initial_(initial) {
    if (!(std::fabs(rho_) < 1.0))
      throw std::invalid_argument("PredictiveMarginal: |rho| must be < 1");
  }

  void init_constants() {
    inv_sqrt1mr2_ = 1.0 / std::sqrt(1.0 - rho_ * rho_);
    half_inv_1mr2_ = 0.5 / (1.0 - rho_ * rho_);
    const std::size_t n = train_seq_.size();
    alphas_.resize(n);
    for (std::size_t k = 0; k < n; ++k)
      alphas_[k] = alpha_weight(static_cast<std::int64_t>(k) + 1);
  }

  double step_cdf(double u, std::size_t k) const {
    if (rho_ == 0.0) return u;
    const double s = std_normal_quantile(u);
    const double h = std_normal_cdf((s - rho_ * cached_qv_[k]) * inv_sqrt1mr2_);
    return clamp_prob((1.0 - alphas_[k]) * u + alphas_[k] * h, kTailGuard);
  }

  double rho_;
  InitialPredictive initial_;
  std::vector<double> train_seq_;
  std::vector<double> cached_v_;
  std::vector<double> cached_qv_;
  std::vector<double> alphas_;
  double inv_sqrt1mr2_ = 1.0;
  double half_inv_1mr2_ = 0.5;
};

inline PredictiveMarginal fit_marginal(const std::vector<double>& observations,
                                       double rho, const InitialPredictive& initial) {
  return PredictiveMarginal(observations, rho, initial);
}

// Equal-weight mixture of recursive predictives fitted on permutations of
// the same data. Member 0 keeps the input order, so n_perms == 1 is exactly
// the plain single fit.
class AveragedMarginal {
public:
  AveragedMarginal() = default;

  AveragedMarginal(const std::vector<double>& data, double rho,
                   const InitialPredictive& initial, int n_perms,
                   std::uint64_t seed, unsigned threads = 1) {
    if (n_perms < 1)
      throw std::invalid_argument("AveragedMarginal: n_perms must be >= 1");
    const std::size_t n = data.size();
    const auto count = static_cast<std::size_t>(n_perms);
    permutations_.resize(count);
    for (std::size_t p = 0; p < count; ++p) {
      if (p == 0) {
        permutations_[p].resize(n);
        for (std::size_t i = 0; i < n; ++i) permutations_[p][i] = i;
      } else {
        Rng rng(derive_seed(seed, {seed_tag::kPermutation, p}));
        permutations_[p] = rng.permutation(n);
      }
    }
    std::vector<std::optional<PredictiveMarginal>> slots(count);
    parallel_for(count, threads, [&](std::size_t p) {
      std::vector<double> ordered(n);
      for (std::size_t i = 0; i < n; ++i) ordered[i] = data[permutations_[p][i]];
      slots[p].emplace(std::move(ordered), rho, initial);
    });
    members_.reserve(count);
    for (auto& s : slots) members_.push_back(std::move(*s));
  }

  double cdf(double x) const {
    double s = 0.0;
    for (const auto& m : members_) s += m.cdf(x);
    return s / static_cast<double>(members_.size());
  }

  double log_pdf(double x) const {
    // log of the mixture density via log-sum-exp over members
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> lps;
    lps.reserve(members_.size());
    for (const auto& m : members_) {
      lps.push_back(m.log_pdf(x));
      mx = std::max(mx, lps.back());
    }
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double lp : lps) s += std::exp(lp - mx);
    return mx + std::log(s) - std::log(static_cast<double>(members_.size()));
  }

  double pdf(double x) const { return std::exp(log_pdf(x)); }

  const std::vector<PredictiveMarginal>& members() const { return members_; }
  const std::vector<std::vector<std::size_t>>& permutations() const {
    return permutations_;
  }
  double rho() const { return members_.front().rho(); }
  const InitialPredictive& initial() const { return members_.front().initial(); }

  static AveragedMarginal from_members(std::vector<PredictiveMarginal> members,
                                       std::vector<std::vector<std::size_t>> perms) {
    if (members.empty()) throw std::invalid_argument("AveragedMarginal: no members");
    AveragedMarginal a;
    a.members_ = std::move(members);
    a.permutations_ = std::move(perms);
    return a;
  }

private:
  std::vector<PredictiveMarginal> members_;
  std::vector<std::vector<std::size_t>> permutations_;
};

inline AveragedMarginal average_marginals(const std::vector<double>& data, double rho,
                                          const InitialPredictive& initial,
                                          int n_perms, std::uint64_t seed,
                                          unsigned threads = 1) {
  return AveragedMarginal(data, rho, initial, n_perms, seed, threads);
}

namespace detail {

inline double sample_sd(const std::vector<double>& data) {
  const double n = static_cast<double>(data.size());
  double mean = 0.0;
  for (double x : data) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : data) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / std::max(1.0, n - 1.0));
}

}  // namespace detail

struct RhoSelection {
  double rho = 0.0;
  double score = 0.0;
  std::vector<double> grid_scores;
};

inline std::vector<double> default_rho_grid() {
  std::vector<double> g(50);
  for (int i = 0; i < 50; ++i) g[i] = 0.1 + (0.99 - 0.1) * i / 49.0;
  return g;
}

// Energy score of one candidate rho: fit on the data as ordered, push
// uniforms through the interpolated inverse cdf, and score the draws
// against every training point. The uniform stream depends only on the
// seed, so all candidates see common random numbers.
inline double score_rho_candidate(const std::vector<double>& data, double rho,
                                  const InitialPredictive& initial, int n_samples,
                                  std::uint64_t seed, double beta = 1.0,
                                  int grid_size = 512, double eta_sds = 3.0) {
  PredictiveMarginal m(data, rho, initial);
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const double eta = eta_sds * detail::sample_sd(data);
  InterpolatedInverseCdf inv = build_inverse_cdf(
      [&m](double x) { return m.cdf(x); }, *lo_it, *hi_it, eta, grid_size);

  Rng rng(derive_seed(seed, {seed_tag::kRhoSelect}));
  std::vector<std::vector<double>> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) samples.push_back({inv(rng.uniform())});

  std::vector<std::vector<double>> points;
  points.reserve(data.size());
  for (double x : data) points.push_back({x});
  return energy_score_total(samples, points, beta).mean;
}

// Grid search for rho minimising the energy score between model draws and
// the training data. Ties break toward the smaller rho.
inline RhoSelection select_rho(const std::vector<double>& data,
                               const InitialPredictive& initial,
                               const std::vector<double>& grid, int n_samples,
                               std::uint64_t seed, double beta = 1.0,
                               int grid_size = 512, double eta_sds = 3.0,
                               unsigned threads = 1) {
  if (grid.empty()) throw std::invalid_argument("select_rho: empty grid");
  for (double r : grid)
    if (!(std::fabs(r) < 1.0))
      throw std::invalid_argument("select_rho: grid values must satisfy |rho| < 1");
  if (n_samples < 2) throw std::invalid_argument("select_rho: n_samples must be >= 2");
  if (data.size() < 2) throw DataError("select_rho: need at least 2 observations");
  if (!(detail::sample_sd(data) > 0.0))
    throw DataError("select_rho: degenerate all-equal data");

  RhoSelection sel;
  sel.grid_scores.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    sel.grid_scores[i] = score_rho_candidate(data, grid[i], initial, n_samples, seed,
                                             beta, grid_size, eta_sds);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (sel.grid_scores[i] < sel.grid_scores[best]) best = i;
  sel.rho = grid[best];
  sel.score = sel.grid_scores[best];
  return sel;
}

}  // namespace qbvine
