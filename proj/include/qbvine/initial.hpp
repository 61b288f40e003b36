#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "qbvine/cauchy.hpp"
#include "qbvine/normal.hpp"

namespace qbvine {

enum class InitialKind { Cauchy, Normal, UniformOverRange };

inline std::string to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::Cauchy: return "cauchy";
    case InitialKind::Normal: return "normal";
    case InitialKind::UniformOverRange: return "uniform";
  }
  return "cauchy";
}

inline InitialKind initial_kind_from_string(const std::string& s) {
  if (s == "cauchy") return InitialKind::Cauchy;
  if (s == "normal") return InitialKind::Normal;
  if (s == "uniform") return InitialKind::UniformOverRange;
  throw std::invalid_argument("unknown initial predictive kind: " + s);
}

// Initial predictive distribution P(0) for the recursion. Cauchy and Normal
// are location/scale; UniformOverRange spans [a, b] (typically the data
// range plus a margin).
struct InitialPredictive {
  InitialKind kind = InitialKind::Cauchy;
  double a = 0.0;  // location, or lower bound for the uniform
  double b = 1.0;  // scale, or upper bound for the uniform

  static InitialPredictive cauchy(double loc = 0.0, double scale = 1.0) {
    return {InitialKind::Cauchy, loc, scale};
  }
  static InitialPredictive normal(double loc = 0.0, double scale = 1.0) {
    return {InitialKind::Normal, loc, scale};
  }
  static InitialPredictive uniform(double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("InitialPredictive: empty range");
    return {InitialKind::UniformOverRange, lo, hi};
  }

  double cdf(double x) const {
    switch (kind) {
      case InitialKind::Cauchy: return cauchy_cdf(x, a, b);
      case InitialKind::Normal: return std_normal_cdf((x - a) / b);
      case InitialKind::UniformOverRange: {
        if (x <= a) return 0.0;
        if (x >= b) return 1.0;
        return (x - a) / (b - a);
      }
    }
    return 0.0;
  }

  double pdf(double x) const {
    switch (kind) {
      case InitialKind::Cauchy: return cauchy_pdf(x, a, b);
      case InitialKind::Normal: return std_normal_pdf((x - a) / b) / b;
      case InitialKind::UniformOverRange:
        return (x >= a && x <= b) ? 1.0 / (b - a) : 0.0;
    }
    return 0.0;
  }

  double log_pdf(double x) const {
    switch (kind) {
      case InitialKind::Cauchy: return cauchy_log_pdf(x, a, b);
      case InitialKind::Normal: return std_normal_log_pdf((x - a) / b) - std::log(b);
      case InitialKind::UniformOverRange:
        return (x >= a && x <= b) ? -std::log(b - a)
                                  : -std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("InitialPredictive::quantile: p must lie in (0,1)");
    switch (kind) {
      case InitialKind::Cauchy: return cauchy_quantile(p, a, b);
      case InitialKind::Normal: return a + b * std_normal_quantile(p);
      case InitialKind::UniformOverRange: return a + p * (b - a);
    }
    return 0.0;
  }
};

}  // namespace qbvine
