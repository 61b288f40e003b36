#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qbvine {

inline double cauchy_cdf(double x, double loc, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("cauchy_cdf: scale must be > 0");
  return 0.5 + std::atan((x - loc) / scale) / std::numbers::pi;
}

inline double cauchy_quantile(double p, double loc, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("cauchy_quantile: scale must be > 0");
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("cauchy_quantile: p must lie in (0,1)");
  return loc + scale * std::tan(std::numbers::pi * (p - 0.5));
}

inline double cauchy_pdf(double x, double loc, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("cauchy_pdf: scale must be > 0");
  const double z = (x - loc) / scale;
  return 1.0 / (std::numbers::pi * scale * (1.0 + z * z));
}

inline double cauchy_log_pdf(double x, double loc, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("cauchy_log_pdf: scale must be > 0");
  const double z = (x - loc) / scale;
  return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

}  // namespace qbvine
