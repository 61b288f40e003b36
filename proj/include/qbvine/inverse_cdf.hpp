#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "qbvine/errors.hpp"

namespace qbvine {

// Piecewise-linear approximation of a quantile function, built from a
// context set of (value, cdf) knots over an eta-extended support. The first
// knot carries cdf 0 and the last carries cdf 1 by construction, so draws
// never escape the extended support.
class InterpolatedInverseCdf {
public:
  struct Knot {
    double y;
    double c;
  };

  // Takes ownership of an already-valid context set. Knots must have
  // strictly increasing y, non-decreasing c that starts at exactly 0 and
  // ends at exactly 1; flat cdf stretches are collapsed keeping the
  // leftmost y so the interpolation domain is strictly increasing in c.
  explicit InterpolatedInverseCdf(std::vector<Knot> knots, double eta = 0.0,
                                  int grid_size = 0)
      : eta_(eta), grid_size_(grid_size) {
    if (knots.size() < 2)
      throw std::invalid_argument("InterpolatedInverseCdf: need at least 2 knots");
    if (knots.front().c != 0.0 || knots.back().c != 1.0)
      throw std::invalid_argument(
          "InterpolatedInverseCdf: boundary knots must carry cdf 0 and 1");
    knots_.reserve(knots.size());
    knots_.push_back(knots.front());
    for (std::size_t i = 1; i < knots.size(); ++i) {
      const Knot& k = knots[i];
      if (!(k.y > knots_.back().y))
        throw std::invalid_argument(
            "InterpolatedInverseCdf: y values must be strictly increasing");
      if (k.c < knots_.back().c)
        throw std::invalid_argument(
            "InterpolatedInverseCdf: cdf values must be non-decreasing");
      if (k.c == knots_.back().c) continue;  // flat region: keep the leftmost y
      knots_.push_back(k);
    }
    if (knots_.size() < 2 || knots_.back().c != 1.0)
      throw std::invalid_argument("InterpolatedInverseCdf: degenerate context set");
  }

  // Linear interpolation over the segment with c_j < c <= c_{j+1}. Exact at
  // every knot and monotone non-decreasing over (0,1).
  double operator()(double c) const {
    if (!(c > 0.0 && c < 1.0))
      throw std::invalid_argument("InterpolatedInverseCdf: c must lie in (0,1)");
    // first knot with knot.c >= c; its predecessor has c_j < c
    auto it = std::lower_bound(
        knots_.begin(), knots_.end(), c,
        [](const Knot& k, double value) { return k.c < value; });
    const Knot& hi = *it;
    const Knot& lo = *(it - 1);
    return (lo.y * (hi.c - c) + hi.y * (c - lo.c)) / (hi.c - lo.c);
  }

  const std::vector<Knot>& knots() const { return knots_; }
  double support_min() const { return knots_.front().y; }
  double support_max() const { return knots_.back().y; }
  double eta() const { return eta_; }
  int grid_size() const { return grid_size_; }

private:
  std::vector<Knot> knots_;
  double eta_;
  int grid_size_;
};

// Builds the context set for cdf_eval on a uniform grid of K interior points
// over [support_min - eta, support_max + eta], with the boundary pairs
// forced to cdf 0 and 1. Rejects cdfs that decrease by more than 1e-9
// between grid points; smaller wiggles are monotonised in place.
inline InterpolatedInverseCdf build_inverse_cdf(
    const std::function<double(double)>& cdf_eval, double support_min,
    double support_max, double eta, int grid_size) {
  if (grid_size < 2)
    throw std::invalid_argument("build_inverse_cdf: grid_size must be >= 2");
  if (!(eta >= 0.0)) throw std::invalid_argument("build_inverse_cdf: eta must be >= 0");
  if (!(support_max >= support_min))
    throw std::invalid_argument("build_inverse_cdf: empty support");

  const double lo = support_min - eta;
  const double hi = support_max + eta;
  if (!(hi > lo))
    throw std::invalid_argument("build_inverse_cdf: degenerate extended support");

  std::vector<InterpolatedInverseCdf::Knot> knots;
  knots.reserve(static_cast<std::size_t>(grid_size) + 2);
  knots.push_back({lo, 0.0});
  const double step = (hi - lo) / (grid_size + 1);
  double prev_c = 0.0;
  for (int i = 1; i <= grid_size; ++i) {
    const double y = lo + step * i;
    double c = cdf_eval(y);
    if (!std::isfinite(c))
      throw NumericError("build_inverse_cdf: cdf evaluated to a non-finite value");
    if (c < prev_c - 1e-9)
      throw NumericError("build_inverse_cdf: cdf decreases along the grid");
    c = std::clamp(c, prev_c, 1.0);
    knots.push_back({y, c});
    prev_c = c;
  }
  knots.push_back({hi, 1.0});
  return InterpolatedInverseCdf(std::move(knots), eta, grid_size);
}

}  // namespace qbvine
