#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "qbvine/dataset.hpp"
#include "qbvine/errors.hpp"
#include "qbvine/normal.hpp"
#include "qbvine/rng.hpp"

namespace qbvine {

// Four-component non-isotropic Gaussian mixture benchmark:
// weights (0.2, 0.3, 0.1, 0.4), means uniform on [-50, 50]^d, covariances
// Wishart(d, I_d). Means and covariances are drawn from the seed.
struct GmmSpec {
  int dimension = 2;
  std::uint64_t seed = 0;
  std::vector<double> weights{0.2, 0.3, 0.1, 0.4};
};

// Frozen mixture with exact log-density evaluation.
class GmmOracle {
public:
  GmmOracle(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
            std::vector<Eigen::MatrixXd> covariances)
      : weights_(std::move(weights)), means_(std::move(means)) {
    for (const auto& cov : covariances) {
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success)
        throw NumericError("GmmOracle: covariance is not positive definite");
      cholesky_.push_back(llt.matrixL());
      double log_det = 0.0;
      for (int i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(cholesky_.back()(i, i));
      log_dets_.push_back(log_det);
    }
    covariances_ = std::move(covariances);
  }

  double log_density(const std::vector<double>& x) const {
    const int d = static_cast<int>(means_.front().size());
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = x[static_cast<std::size_t>(i)];
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> comps(weights_.size());
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const Eigen::VectorXd diff = v - means_[k];
      const Eigen::VectorXd z = cholesky_[k].triangularView<Eigen::Lower>().solve(diff);
      comps[k] = std::log(weights_[k]) - 0.5 * z.squaredNorm() -
                 0.5 * (d * kLogTwoPi + log_dets_[k]);
      mx = std::max(mx, comps[k]);
    }
    double s = 0.0;
    for (double c : comps) s += std::exp(c - mx);
    return mx + std::log(s);
  }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }

private:
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> cholesky_;
  std::vector<double> log_dets_;
};

namespace detail {

// chi-square draw via the sum of df squared normals; df here is at most a
// few hundred so the direct sum is fine.
inline double draw_chi_square(Rng& rng, int df) {
  double s = 0.0;
  for (int i = 0; i < df; ++i) {
    const double z = draw_std_normal(rng);
    s += z * z;
  }
  return s;
}

// Wishart(df = d, scale = I_d) via the Bartlett decomposition.
inline Eigen::MatrixXd draw_wishart_identity(Rng& rng, int d) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(draw_chi_square(rng, d - i));
    for (int j = 0; j < i; ++j) a(i, j) = draw_std_normal(rng);
  }
  return a * a.transpose();
}

}  // namespace detail

// Builds the mixture for a spec. Retries a fresh Wishart draw (bounded) if
// a sampled covariance fails its Cholesky factorisation.
inline GmmOracle build_gmm(const GmmSpec& spec) {
  if (spec.dimension < 1) throw std::invalid_argument("build_gmm: dimension must be >= 1");
  double wsum = 0.0;
  for (double w : spec.weights) {
    if (!(w > 0.0)) throw std::invalid_argument("build_gmm: weights must be positive");
    wsum += w;
  }
  if (std::fabs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("build_gmm: weights must sum to 1");

  Rng rng(derive_seed(spec.seed, {seed_tag::kGmm}));
  const int d = spec.dimension;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (std::size_t k = 0; k < spec.weights.size(); ++k) {
    Eigen::VectorXd mu(d);
    for (int i = 0; i < d; ++i) mu(i) = -50.0 + 100.0 * rng.uniform();
    means.push_back(mu);

    Eigen::MatrixXd cov;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      cov = detail::draw_wishart_identity(rng, d);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      ok = (llt.info() == Eigen::Success);
    }
    if (!ok) throw NumericError("build_gmm: could not draw a positive definite covariance");
    covs.push_back(cov);
  }
  return GmmOracle(spec.weights, std::move(means), std::move(covs));
}

// n draws from the mixture plus the exact oracle. Draws depend only on
// (spec.seed, row index), so the sequence is stable under any n.
inline std::pair<Dataset, GmmOracle> gmm_generate(const GmmSpec& spec, std::size_t n) {
  if (n < 1) throw std::invalid_argument("gmm_generate: n must be >= 1");
  GmmOracle oracle = build_gmm(spec);
  const int d = spec.dimension;

  // component cdf for the categorical draw
  std::vector<double> cum(oracle.weights().size());
  double acc = 0.0;
  for (std::size_t k = 0; k < cum.size(); ++k) {
    acc += oracle.weights()[k];
    cum[k] = acc;
  }

  Dataset ds;
  for (int j = 0; j < d; ++j) ds.column_names.push_back("x" + std::to_string(j + 1));
  ds.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(spec.seed, {seed_tag::kGmm, 1, i}));
    const double uk = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < cum.size() && uk > cum[k]) ++k;
    Eigen::VectorXd z(d);
    for (int c = 0; c < d; ++c) z(c) = draw_std_normal(rng);
    Eigen::LLT<Eigen::MatrixXd> llt(oracle.covariances()[k]);
    const Eigen::VectorXd x = oracle.means()[k] + llt.matrixL() * z;
    ds.values[i].resize(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) ds.values[i][static_cast<std::size_t>(c)] = x(c);
  }
  return {std::move(ds), std::move(oracle)};
}

}  // namespace qbvine
