#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbvine/errors.hpp"
#include "qbvine/kendall.hpp"
#include "qbvine/pair_copula.hpp"
#include "qbvine/parallel.hpp"
#include "qbvine/rbp.hpp"
#include "qbvine/rng.hpp"

namespace qbvine {

// One edge of a regular vine. The conditioned pair is stored with
// first < second; the first conditioned variable always feeds the first
// argument of the pair copula. parent_first / parent_second are the indices
// of the previous-level edges supplying the conditional pseudo-observations
// of `first` and `second` (unused at tree level 1).
struct VineEdge {
  int first = -1;
  int second = -1;
  std::vector<int> conditioning;
  int level = 1;
  double tau = 0.0;
  int parent_first = -1;
  int parent_second = -1;

  std::vector<int> constraint() const {
    std::vector<int> c = conditioning;
    c.push_back(first);
    c.push_back(second);
    std::sort(c.begin(), c.end());
    return c;
  }
};

struct VineStructure {
  int dimension = 0;
  std::vector<VineEdge> edges;          // ordered by level, then selection order
  std::vector<std::vector<int>> levels; // edge ids per tree level (1-based levels)

  std::size_t edge_count() const { return edges.size(); }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

inline double tau_to_rho(double tau) {
  const double t = std::clamp(tau, -1.0 + 1e-9, 1.0 - 1e-9);
  return std::sin(0.5 * std::numbers::pi * t);
}

struct CandidateEdge {
  int node_a = 0;
  int node_b = 0;
  VineEdge edge;
  double weight = 0.0;
};

inline bool candidate_before(const CandidateEdge& x, const CandidateEdge& y) {
  if (x.weight != y.weight) return x.weight > y.weight;
  if (x.edge.first != y.edge.first) return x.edge.first < y.edge.first;
  if (x.edge.second != y.edge.second) return x.edge.second < y.edge.second;
  return x.edge.conditioning < y.edge.conditioning;
}

}  // namespace detail

// Greedy level-by-level structure selection: at each tree level a maximum
// spanning tree on |Kendall tau| weights, restricted to edges satisfying the
// proximity condition. Conditional pseudo-observations for the deeper-level
// weights are propagated with Gaussian-copula h-functions using
// rho = sin(pi tau / 2), which keeps selection free of the KDE bandwidth.
inline VineStructure select_structure(const std::vector<std::vector<double>>& columns) {
  const int d = static_cast<int>(columns.size());
  if (d < 2) throw std::invalid_argument("select_structure: need at least 2 dimensions");
  const std::size_t n = columns.front().size();
  if (n < 2) throw std::invalid_argument("select_structure: need at least 2 rows");
  for (const auto& col : columns) {
    if (col.size() != n) throw std::invalid_argument("select_structure: ragged columns");
    for (double u : col)
      if (!(u > 0.0 && u < 1.0))
        throw std::invalid_argument("select_structure: entries must lie in (0,1)");
  }

  VineStructure vs;
  vs.dimension = d;

  // Per current-level node: the constraint set, the endpoint keys in the
  // previous level's graph, and the conditional columns keyed by the
  // conditioned variable they belong to.
  struct Node {
    std::vector<int> constraint;
    int end_a = -1, end_b = -1;       // endpoint keys one level down
    int var_a = -1, var_b = -1;       // conditioned variables with columns
    std::vector<double> col_a, col_b; // conditional pseudo-observations
    int edge_id = -1;                 // id of the edge this node wraps (level >= 2)
  };

  std::vector<Node> nodes(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    nodes[static_cast<std::size_t>(i)].constraint = {i};
    nodes[static_cast<std::size_t>(i)].var_a = i;
    nodes[static_cast<std::size_t>(i)].col_a = columns[static_cast<std::size_t>(i)];
  }

  auto column_for = [](const Node& node, int var) -> const std::vector<double>& {
    if (var == node.var_a) return node.col_a;
    if (var == node.var_b) return node.col_b;
    throw NumericError("select_structure: conditioned variable has no column");
  };

  for (int level = 1; level <= d - 1; ++level) {
    const int n_nodes = static_cast<int>(nodes.size());
    std::vector<detail::CandidateEdge> candidates;
    for (int a = 0; a < n_nodes; ++a) {
      for (int b = a + 1; b < n_nodes; ++b) {
        const Node& na = nodes[static_cast<std::size_t>(a)];
        const Node& nb = nodes[static_cast<std::size_t>(b)];
        if (level >= 2) {
          const bool adjacent = na.end_a == nb.end_a || na.end_a == nb.end_b ||
                                na.end_b == nb.end_a || na.end_b == nb.end_b;
          if (!adjacent) continue;
        }
        detail::CandidateEdge cand;
        cand.node_a = a;
        cand.node_b = b;
        std::vector<int> inter, only_a, only_b;
        std::set_intersection(na.constraint.begin(), na.constraint.end(),
                              nb.constraint.begin(), nb.constraint.end(),
                              std::back_inserter(inter));
        std::set_difference(na.constraint.begin(), na.constraint.end(),
                            nb.constraint.begin(), nb.constraint.end(),
                            std::back_inserter(only_a));
        std::set_difference(nb.constraint.begin(), nb.constraint.end(),
                            na.constraint.begin(), na.constraint.end(),
                            std::back_inserter(only_b));
        if (only_a.size() != 1 || only_b.size() != 1)
          throw NumericError("select_structure: proximity bookkeeping failed");
        const int va = only_a.front();
        const int vb = only_b.front();
        cand.edge.first = std::min(va, vb);
        cand.edge.second = std::max(va, vb);
        cand.edge.conditioning = inter;
        cand.edge.level = level;
        const auto& col_va = column_for(na, va);
        const auto& col_vb = column_for(nb, vb);
        cand.edge.tau = (va <= vb) ? kendall_tau(col_va, col_vb)
                                   : kendall_tau(col_vb, col_va);
        cand.weight = std::fabs(cand.edge.tau);
        cand.edge.parent_first = (va <= vb) ? a : b;   // node index for now
        cand.edge.parent_second = (va <= vb) ? b : a;
        candidates.push_back(std::move(cand));
      }
    }
    std::sort(candidates.begin(), candidates.end(), detail::candidate_before);

    detail::UnionFind uf(static_cast<std::size_t>(n_nodes));
    std::vector<detail::CandidateEdge> picked;
    for (auto& cand : candidates) {
      if (static_cast<int>(picked.size()) == n_nodes - 1) break;
      if (uf.unite(cand.node_a, cand.node_b)) picked.push_back(std::move(cand));
    }
    if (static_cast<int>(picked.size()) != n_nodes - 1)
      throw NumericError("select_structure: level graph is not connected");

    std::vector<Node> next_nodes;
    next_nodes.reserve(picked.size());
    vs.levels.emplace_back();
    for (auto& cand : picked) {
      VineEdge edge = cand.edge;
      // rewrite node indices into edge ids of the previous level
      const Node& pf = nodes[static_cast<std::size_t>(edge.parent_first)];
      const Node& ps = nodes[static_cast<std::size_t>(edge.parent_second)];
      edge.parent_first = (level >= 2) ? pf.edge_id : -1;
      edge.parent_second = (level >= 2) ? ps.edge_id : -1;

      const int edge_id = static_cast<int>(vs.edges.size());
      vs.levels.back().push_back(edge_id);

      Node node;
      node.constraint = edge.constraint();
      node.end_a = cand.node_a;
      node.end_b = cand.node_b;
      node.edge_id = edge_id;
      node.var_a = edge.first;
      node.var_b = edge.second;
      vs.edges.push_back(edge);
      next_nodes.push_back(std::move(node));
    }

    // fill conditional columns after ids settle (needs the picked edges)
    if (level < d - 1) {
      for (std::size_t pi = 0; pi < picked.size(); ++pi) {
        const VineEdge& edge = vs.edges[static_cast<std::size_t>(vs.levels.back()[pi])];
        const Node& na = nodes[static_cast<std::size_t>(picked[pi].node_a)];
        const Node& nb = nodes[static_cast<std::size_t>(picked[pi].node_b)];
        // locate the node carrying each conditioned variable
        const Node& node_of_first = (na.var_a == edge.first || na.var_b == edge.first) ? na : nb;
        const Node& node_of_second = (&node_of_first == &na) ? nb : na;
        const auto& col_first = column_for(node_of_first, edge.first);
        const auto& col_second = column_for(node_of_second, edge.second);
        const double rho = detail::tau_to_rho(edge.tau);
        Node& node = next_nodes[pi];
        node.col_a.resize(n);
        node.col_b.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
          const double uf_ = clamp_prob(col_first[r]);
          const double us_ = clamp_prob(col_second[r]);
          node.col_a[r] = clamp_prob(h_rho(uf_, us_, rho));
          node.col_b[r] = clamp_prob(h_rho(us_, uf_, rho));
        }
      }
    }
    nodes = std::move(next_nodes);
  }
  return vs;
}

// Sampling/Rosenblatt bookkeeping: a variable order and, per position, the
// chain of edges whose h-functions condition that variable on all earlier
// ones. Derived by peeling the structure from the top tree downward.
struct SamplingPlan {
  std::vector<int> order;               // order[i] = variable sampled at position i
  std::vector<std::vector<int>> chains; // chains[i] = edge ids at levels 1..i
};

inline SamplingPlan build_sampling_plan(const VineStructure& vs) {
  const int d = vs.dimension;
  SamplingPlan plan;
  plan.order.assign(static_cast<std::size_t>(d), -1);
  plan.chains.assign(static_cast<std::size_t>(d), {});

  std::vector<bool> removed(vs.edges.size(), false);
  std::vector<bool> peeled(static_cast<std::size_t>(d), false);

  for (int pos = d - 1; pos >= 1; --pos) {
    // unique surviving edge at tree level == pos
    int top = -1;
    for (int id : vs.levels[static_cast<std::size_t>(pos - 1)]) {
      if (!removed[static_cast<std::size_t>(id)]) {
        if (top != -1) throw NumericError("build_sampling_plan: ambiguous top edge");
        top = id;
      }
    }
    if (top == -1) throw NumericError("build_sampling_plan: missing top edge");

    const VineEdge& te = vs.edges[static_cast<std::size_t>(top)];
    const int x = std::max(te.first, te.second);  // deterministic peel choice
    plan.order[static_cast<std::size_t>(pos)] = x;
    peeled[static_cast<std::size_t>(x)] = true;

    std::vector<int> chain(static_cast<std::size_t>(pos), -1);
    int e = top;
    for (int level = pos; level >= 1; --level) {
      chain[static_cast<std::size_t>(level - 1)] = e;
      removed[static_cast<std::size_t>(e)] = true;
      if (level > 1) {
        const VineEdge& ve = vs.edges[static_cast<std::size_t>(e)];
        e = (x == ve.first) ? ve.parent_first : ve.parent_second;
      }
    }
    plan.chains[static_cast<std::size_t>(pos)] = std::move(chain);
  }
  for (int i = 0; i < d; ++i)
    if (!peeled[static_cast<std::size_t>(i)]) plan.order[0] = i;
  return plan;
}

// Fitted simplified vine: a structure plus one KDE pair copula per edge
// (or the independence copula where |tau| falls under the truncation
// threshold). Immutable after construction.
class VineModel {
public:
  struct FittedEdge {
    std::optional<PairCopulaKde> copula;  // nullopt = independence copula
    double fit_tau = 0.0;
  };

  VineModel(VineStructure structure, std::vector<FittedEdge> fitted, double bandwidth,
            std::vector<std::pair<std::vector<double>, std::vector<double>>> cache = {})
      : structure_(std::move(structure)),
        fitted_(std::move(fitted)),
        bandwidth_(bandwidth),
        pseudo_obs_cache_(std::move(cache)) {
    if (fitted_.size() != structure_.edges.size())
      throw std::invalid_argument("VineModel: one fitted copula per edge required");
    plan_ = build_sampling_plan(structure_);
  }

  const VineStructure& structure() const { return structure_; }
  const std::vector<FittedEdge>& fitted_edges() const { return fitted_; }
  double bandwidth() const { return bandwidth_; }
  const SamplingPlan& plan() const { return plan_; }
  int dimension() const { return structure_.dimension; }
  const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
  pseudo_obs_cache() const {
    return pseudo_obs_cache_;
  }

  // Conditional coordinates of a query point at every edge, recomputed by
  // h-function descent.
  struct EdgeValues {
    double in1, in2, out1, out2;
  };

  std::vector<EdgeValues> descend(const std::vector<double>& u) const {
    check_point(u);
    std::vector<EdgeValues> vals(structure_.edges.size());
    for (std::size_t e = 0; e < structure_.edges.size(); ++e) {
      const VineEdge& edge = structure_.edges[e];
      double in1, in2;
      if (edge.level == 1) {
        in1 = clamp_prob(u[static_cast<std::size_t>(edge.first)]);
        in2 = clamp_prob(u[static_cast<std::size_t>(edge.second)]);
      } else {
        in1 = out_value(vals, edge.parent_first, edge.first);
        in2 = out_value(vals, edge.parent_second, edge.second);
      }
      vals[e].in1 = in1;
      vals[e].in2 = in2;
      const FittedEdge& fe = fitted_[e];
      if (fe.copula) {
        vals[e].out1 = clamp_prob(fe.copula->h1(in1, in2));
        vals[e].out2 = clamp_prob(fe.copula->h2(in2, in1));
      } else {
        vals[e].out1 = in1;
        vals[e].out2 = in2;
      }
    }
    return vals;
  }

  double log_density(const std::vector<double>& u) const {
    const auto vals = descend(u);
    double ld = 0.0;
    for (std::size_t e = 0; e < fitted_.size(); ++e)
      if (fitted_[e].copula)
        ld += fitted_[e].copula->log_density(vals[e].in1, vals[e].in2);
    return ld;
  }

  // Triangular map u -> w with w uniform i.i.d. under the fitted copula.
  std::vector<double> rosenblatt(const std::vector<double>& u) const {
    const auto vals = descend(u);
    std::vector<double> w(u.size());
    w[0] = clamp_prob(u[static_cast<std::size_t>(plan_.order[0])]);
    for (std::size_t i = 1; i < u.size(); ++i) {
      const int top = plan_.chains[i].back();
      const int x = plan_.order[i];
      const VineEdge& te = structure_.edges[static_cast<std::size_t>(top)];
      w[i] = (x == te.first) ? vals[static_cast<std::size_t>(top)].out1
                             : vals[static_cast<std::size_t>(top)].out2;
    }
    return w;
  }

  // Inverse of the triangular map: turns i.i.d. uniforms into one draw from
  // the fitted copula.
  std::vector<double> inverse_rosenblatt(const std::vector<double>& w) const {
    const int d = structure_.dimension;
    if (static_cast<int>(w.size()) != d)
      throw std::invalid_argument("inverse_rosenblatt: dimension mismatch");
    std::vector<double> u(static_cast<std::size_t>(d),
                          std::numeric_limits<double>::quiet_NaN());
    std::vector<EdgeValues> memo(structure_.edges.size());
    std::vector<bool> have(structure_.edges.size(), false);

    u[static_cast<std::size_t>(plan_.order[0])] = clamp_prob(w[0]);
    for (int i = 1; i < d; ++i) {
      const int x = plan_.order[static_cast<std::size_t>(i)];
      double t = clamp_prob(w[static_cast<std::size_t>(i)]);
      const auto& chain = plan_.chains[static_cast<std::size_t>(i)];
      for (int m = i; m >= 1; --m) {
        const int eid = chain[static_cast<std::size_t>(m - 1)];
        const VineEdge& edge = structure_.edges[static_cast<std::size_t>(eid)];
        const bool x_first = (x == edge.first);
        double partner;
        if (edge.level == 1) {
          const int pv = x_first ? edge.second : edge.first;
          partner = u[static_cast<std::size_t>(pv)];
        } else {
          partner = x_first ? lazy_out(u, memo, have, edge.parent_second, edge.second)
                            : lazy_out(u, memo, have, edge.parent_first, edge.first);
        }
        const FittedEdge& fe = fitted_[static_cast<std::size_t>(eid)];
        if (fe.copula)
          t = x_first ? fe.copula->h1_inverse(t, partner)
                      : fe.copula->h2_inverse(t, partner);
        t = clamp_prob(t);
      }
      u[static_cast<std::size_t>(x)] = t;
    }
    return u;
  }

  // count x d matrix of draws, deterministic per seed and thread count.
  std::vector<std::vector<double>> sample(std::size_t count, std::uint64_t seed,
                                          unsigned threads = 1) const {
    if (count < 1) throw std::invalid_argument("VineModel::sample: count must be >= 1");
    std::vector<std::vector<double>> out(count);
    parallel_for(count, threads, [&](std::size_t i) {
      Rng rng(derive_seed(seed, {seed_tag::kVineSample, i}));
      std::vector<double> w(static_cast<std::size_t>(structure_.dimension));
      for (double& x : w) x = rng.uniform();
      out[i] = inverse_rosenblatt(w);
    });
    return out;
  }

private:
  void check_point(const std::vector<double>& u) const {
    if (static_cast<int>(u.size()) != structure_.dimension)
      throw std::invalid_argument("VineModel: dimension mismatch");
    for (double x : u)
      if (!(x > 0.0 && x < 1.0))
        throw std::invalid_argument("VineModel: coordinates must lie strictly in (0,1)");
  }

  double out_value(const std::vector<EdgeValues>& vals, int edge_id, int var) const {
    const VineEdge& pe = structure_.edges[static_cast<std::size_t>(edge_id)];
    return (var == pe.first) ? vals[static_cast<std::size_t>(edge_id)].out1
                             : vals[static_cast<std::size_t>(edge_id)].out2;
  }

  double lazy_out(const std::vector<double>& u, std::vector<EdgeValues>& memo,
                  std::vector<bool>& have, int edge_id, int var) const {
    const auto e = static_cast<std::size_t>(edge_id);
    if (!have[e]) {
      const VineEdge& edge = structure_.edges[e];
      double in1, in2;
      if (edge.level == 1) {
        in1 = u[static_cast<std::size_t>(edge.first)];
        in2 = u[static_cast<std::size_t>(edge.second)];
      } else {
        in1 = lazy_out(u, memo, have, edge.parent_first, edge.first);
        in2 = lazy_out(u, memo, have, edge.parent_second, edge.second);
      }
      memo[e].in1 = in1;
      memo[e].in2 = in2;
      const FittedEdge& fe = fitted_[e];
      if (fe.copula) {
        memo[e].out1 = clamp_prob(fe.copula->h1(in1, in2));
        memo[e].out2 = clamp_prob(fe.copula->h2(in2, in1));
      } else {
        memo[e].out1 = in1;
        memo[e].out2 = in2;
      }
      have[e] = true;
    }
    const VineEdge& edge = structure_.edges[e];
    return (var == edge.first) ? memo[e].out1 : memo[e].out2;
  }

  VineStructure structure_;
  std::vector<FittedEdge> fitted_;
  double bandwidth_ = 1.0;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pseudo_obs_cache_;
  SamplingPlan plan_;
};

// Fits KDE pair copulas tree by tree: level 1 on the raw pseudo-observation
// columns, deeper levels on h-function transforms of their parents' inputs
// (the simplified-vine assumption). Edges whose input |tau| falls below
// truncation_tau get the independence copula.
inline VineModel fit_vine(const std::vector<std::vector<double>>& columns,
                          const VineStructure& structure, double bandwidth,
                          double truncation_tau = 0.0, unsigned threads = 1) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("fit_vine: bandwidth must be > 0");
  const int d = structure.dimension;
  if (static_cast<int>(columns.size()) != d)
    throw std::invalid_argument("fit_vine: column count != structure dimension");
  const std::size_t n = columns.front().size();
  for (const auto& col : columns)
    if (col.size() != n) throw std::invalid_argument("fit_vine: ragged columns");

  const std::size_t n_edges = structure.edges.size();
  std::vector<VineModel::FittedEdge> fitted(n_edges);
  std::vector<std::pair<std::vector<double>, std::vector<double>>> cache(n_edges);
  // out columns per edge, feeding the next level
  std::vector<std::pair<std::vector<double>, std::vector<double>>> outs(n_edges);

  for (const auto& level_ids : structure.levels) {
    // edge fits within one level are independent
    parallel_for(level_ids.size(), threads, [&](std::size_t li) {
      const int eid = level_ids[li];
      const auto e = static_cast<std::size_t>(eid);
      const VineEdge& edge = structure.edges[e];
      std::vector<double> in1, in2;
      if (edge.level == 1) {
        in1 = columns[static_cast<std::size_t>(edge.first)];
        in2 = columns[static_cast<std::size_t>(edge.second)];
        for (double& x : in1) x = clamp_prob(x);
        for (double& x : in2) x = clamp_prob(x);
      } else {
        const auto& pf = structure.edges[static_cast<std::size_t>(edge.parent_first)];
        const auto& po = outs[static_cast<std::size_t>(edge.parent_first)];
        in1 = (edge.first == pf.first) ? po.first : po.second;
        const auto& ps = structure.edges[static_cast<std::size_t>(edge.parent_second)];
        const auto& so = outs[static_cast<std::size_t>(edge.parent_second)];
        in2 = (edge.second == ps.first) ? so.first : so.second;
      }

      const double fit_tau = kendall_tau(in1, in2);
      fitted[e].fit_tau = fit_tau;
      const bool independent = std::fabs(fit_tau) < truncation_tau;
      if (!independent) {
        std::vector<std::pair<double, double>> pairs(n);
        for (std::size_t r = 0; r < n; ++r) pairs[r] = {in1[r], in2[r]};
        fitted[e].copula.emplace(pairs, bandwidth);
      }

      auto& out = outs[e];
      out.first.resize(n);
      out.second.resize(n);
      if (independent) {
        out.first = in1;
        out.second = in2;
      } else {
        const PairCopulaKde& c = *fitted[e].copula;
        for (std::size_t r = 0; r < n; ++r) {
          out.first[r] = clamp_prob(c.h1(in1[r], in2[r]));
          out.second[r] = clamp_prob(c.h2(in2[r], in1[r]));
        }
      }
      cache[e] = {std::move(in1), std::move(in2)};
    });
  }
  return VineModel(structure, std::move(fitted), bandwidth, std::move(cache));
}

// Plain-text R-vine array for inspection: one row per variable in sampling
// order; row i lists the variable followed by its conditioning-chain
// partners at tree levels 1..i-1.
inline std::string structure_to_text(const VineStructure& vs) {
  const SamplingPlan plan = build_sampling_plan(vs);
  std::ostringstream os;
  os << vs.dimension << "\n";
  for (std::size_t i = 0; i < plan.order.size(); ++i) {
    os << plan.order[i];
    for (std::size_t m = 0; m < plan.chains[i].size(); ++m) {
      const VineEdge& e = vs.edges[static_cast<std::size_t>(plan.chains[i][m])];
      const int partner = (plan.order[i] == e.first) ? e.second : e.first;
      os << " " << partner;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace qbvine
