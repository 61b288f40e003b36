#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbvine/dataset.hpp"
#include "qbvine/errors.hpp"
#include "qbvine/initial.hpp"
#include "qbvine/inverse_cdf.hpp"
#include "qbvine/parallel.hpp"
#include "qbvine/rbp.hpp"
#include "qbvine/rng.hpp"
#include "qbvine/vine.hpp"

namespace qbvine {

namespace seed_tag {
constexpr std::uint64_t kDimension = 0x09;
constexpr std::uint64_t kFeatureVine = 0x0a;
}  // namespace seed_tag

// Pipeline hyperparameters. Defaults follow the experiment protocol: rho on
// a 50-point grid over [0.1, 0.99] scored with 100 draws, marginals averaged
// over 10 permutations, bandwidth by 10-fold CV, Cauchy initials.
struct QbVineConfig {
  std::vector<InitialKind> initial_kinds;  // empty = Cauchy everywhere; one entry broadcasts
  std::vector<double> rho_grid = default_rho_grid();
  int n_perms = 10;
  std::vector<double> bandwidth_grid = default_bandwidth_grid();
  int cv_folds = 10;
  int energy_samples = 100;
  double beta = 1.0;
  std::uint64_t seed = 0;
  double truncation_tau = 0.0;
  int inverse_grid_size = 512;
  double eta_sds = 3.0;
  bool standardize = true;
  bool share_bandwidth = false;  // conditional models: reuse the joint vine's bandwidth
  unsigned threads = 1;

  InitialPredictive initial_for(std::size_t dim) const {
    InitialKind kind = InitialKind::Cauchy;
    if (initial_kinds.size() == 1) kind = initial_kinds.front();
    else if (dim < initial_kinds.size()) kind = initial_kinds[dim];
    switch (kind) {
      case InitialKind::Cauchy: return InitialPredictive::cauchy(0.0, 1.0);
      case InitialKind::Normal: return InitialPredictive::normal(0.0, 1.0);
      case InitialKind::UniformOverRange:
        // range is resolved against the (standardized) column at fit time
        return InitialPredictive::uniform(-1.0, 1.0);
    }
    return InitialPredictive::cauchy(0.0, 1.0);
  }

  void validate() const {
    if (rho_grid.empty()) throw std::invalid_argument("config: rho_grid is empty");
    if (bandwidth_grid.empty())
      throw std::invalid_argument("config: bandwidth_grid is empty");
    if (n_perms < 1) throw std::invalid_argument("config: n_perms must be >= 1");
    if (cv_folds < 2) throw std::invalid_argument("config: cv_folds must be >= 2");
    if (energy_samples < 2)
      throw std::invalid_argument("config: energy_samples must be >= 2");
    if (!(beta > 0.0 && beta <= 2.0))
      throw std::invalid_argument("config: beta must lie in (0,2]");
    if (inverse_grid_size < 2)
      throw std::invalid_argument("config: inverse_grid_size must be >= 2");
    if (!(eta_sds > 0.0)) throw std::invalid_argument("config: eta_sds must be > 0");
    if (!(truncation_tau >= 0.0 && truncation_tau < 1.0))
      throw std::invalid_argument("config: truncation_tau must lie in [0,1)");
  }
};

struct FitReport {
  std::vector<double> rhos;
  std::vector<double> rho_scores;
  double bandwidth = 0.0;
  double bandwidth_score = 0.0;
  std::vector<double> bandwidth_grid_scores;
  std::uint64_t seed = 0;
  std::size_t n_rows = 0;
  int dimension = 0;
};

namespace detail {

inline std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {seed_tag::kFoldAssign}));
  std::vector<std::size_t> order = rng.permutation(n);
  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i)
    fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold_of;
}

}  // namespace detail

// Cross-validated bandwidth for a vine over the given pseudo-observation
// columns: per fold, the structure is selected on the training rows once and
// each candidate bandwidth is scored by the energy score between vine draws
// and the held-out rows (copula scale).
inline BandwidthSelection select_vine_bandwidth(
    const std::vector<std::vector<double>>& columns, const QbVineConfig& config,
    std::uint64_t seed) {
  const std::size_t d = columns.size();
  const std::size_t n = columns.front().size();
  const int folds = config.cv_folds;
  if (static_cast<std::size_t>(folds) > n)
    throw DataError("select_vine_bandwidth: more folds than rows");

  const std::vector<int> fold_of = detail::fold_assignment(n, folds, seed);

  // per-fold training structures (bandwidth independent)
  std::vector<VineStructure> fold_structures(static_cast<std::size_t>(folds));
  std::vector<std::vector<std::vector<double>>> fold_train_cols(
      static_cast<std::size_t>(folds));
  std::vector<std::vector<std::vector<double>>> fold_heldout(
      static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    auto& cols = fold_train_cols[static_cast<std::size_t>(f)];
    cols.assign(d, {});
    auto& held = fold_heldout[static_cast<std::size_t>(f)];
    for (std::size_t r = 0; r < n; ++r) {
      if (fold_of[r] == f) {
        std::vector<double> row(d);
        for (std::size_t j = 0; j < d; ++j) row[j] = columns[j][r];
        held.push_back(std::move(row));
      } else {
        for (std::size_t j = 0; j < d; ++j) cols[j].push_back(columns[j][r]);
      }
    }
    fold_structures[static_cast<std::size_t>(f)] = select_structure(cols);
  }

  const std::size_t combos = config.bandwidth_grid.size() * static_cast<std::size_t>(folds);
  std::vector<double> combo_scores(combos);
  parallel_for(combos, config.threads, [&](std::size_t c) {
    const std::size_t gi = c / static_cast<std::size_t>(folds);
    const auto f = static_cast<std::size_t>(c % static_cast<std::size_t>(folds));
    VineModel vine = fit_vine(fold_train_cols[f], fold_structures[f],
                              config.bandwidth_grid[gi], config.truncation_tau, 1);
    const auto draws = vine.sample(
        static_cast<std::size_t>(config.energy_samples),
        derive_seed(seed, {seed_tag::kCvSample, static_cast<std::uint64_t>(f)}), 1);
    combo_scores[c] = energy_score_total(draws, fold_heldout[f], config.beta).mean;
  });

  BandwidthSelection sel;
  sel.grid_scores.resize(config.bandwidth_grid.size());
  for (std::size_t gi = 0; gi < config.bandwidth_grid.size(); ++gi) {
    double s = 0.0;
    for (int f = 0; f < folds; ++f)
      s += combo_scores[gi * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)];
    sel.grid_scores[gi] = s / folds;
  }
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < sel.grid_scores.size(); ++gi)
    if (sel.grid_scores[gi] < sel.grid_scores[best]) best = gi;
  sel.bandwidth = config.bandwidth_grid[best];
  sel.score = sel.grid_scores[best];
  return sel;
}

// Joint density model: d recursive predictive marginals composed with a
// simplified vine copula on their pseudo-observations.
class QbVineModel {
public:
  static constexpr double kPseudoClamp = 1e-10;

  static QbVineModel fit(const std::vector<std::vector<double>>& rows,
                         const QbVineConfig& config) {
    config.validate();
    const std::size_t n = rows.size();
    if (n < 10) throw DataError("fit: need at least 10 rows");
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    if (d < 2) throw DataError("fit: need at least 2 dimensions");
    for (const auto& row : rows)
      if (row.size() != d) throw DataError("fit: ragged rows");
    if (n < static_cast<std::size_t>(config.cv_folds))
      throw DataError("fit: fewer rows than cv_folds");
    if (!config.initial_kinds.empty() && config.initial_kinds.size() != 1 &&
        config.initial_kinds.size() != d)
      throw std::invalid_argument("fit: initial_kinds must have size 1 or d");

    QbVineModel m;
    m.config_ = config;
    m.report_.seed = config.seed;
    m.report_.n_rows = n;
    m.report_.dimension = static_cast<int>(d);

    // standardization (identity when disabled)
    m.std_.mean.assign(d, 0.0);
    m.std_.sd.assign(d, 1.0);
    std::vector<std::vector<double>> cols(d, std::vector<double>(n));
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t r = 0; r < n; ++r) cols[j][r] = rows[r][j];
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (double x : cols[j]) mean += x;
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (double x : cols[j]) ss += (x - mean) * (x - mean);
      const double sd = std::sqrt(ss / static_cast<double>(n > 1 ? n - 1 : 1));
      if (!(sd > 0.0))
        throw DataError("fit: column " + std::to_string(j + 1) + " is constant");
      if (config.standardize) {
        m.std_.mean[j] = mean;
        m.std_.sd[j] = sd;
        for (double& x : cols[j]) x = (x - mean) / sd;
      }
    }

    // stage 1: per-dimension rho selection and permutation-averaged fits
    m.report_.rhos.resize(d);
    m.report_.rho_scores.resize(d);
    m.marginals_.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      InitialPredictive initial = config.initial_for(j);
      if (initial.kind == InitialKind::UniformOverRange) {
        const auto [lo, hi] = std::minmax_element(cols[j].begin(), cols[j].end());
        const double margin =
            config.eta_sds * qbvine::detail::sample_sd(cols[j]);
        initial = InitialPredictive::uniform(*lo - margin, *hi + margin);
      }
      const std::uint64_t dim_seed =
          derive_seed(config.seed, {seed_tag::kDimension, j});
      RhoSelection sel = select_rho(cols[j], initial, config.rho_grid,
                                    config.energy_samples, dim_seed, config.beta,
                                    config.inverse_grid_size, config.eta_sds,
                                    config.threads);
      m.report_.rhos[j] = sel.rho;
      m.report_.rho_scores[j] = sel.score;
      m.marginals_[j] = AveragedMarginal(cols[j], sel.rho, initial, config.n_perms,
                                         dim_seed, config.threads);
    }

    // stage 2: pseudo-observations through the averaged cdfs
    m.pseudo_obs_.assign(d, std::vector<double>(n));
    parallel_for(d, config.threads, [&](std::size_t j) {
      for (std::size_t r = 0; r < n; ++r)
        m.pseudo_obs_[j][r] = clamp_prob(m.marginals_[j].cdf(cols[j][r]), kPseudoClamp);
    });

    // stage 3: bandwidth by cross-validated energy score on the joint vine
    BandwidthSelection bsel = select_vine_bandwidth(m.pseudo_obs_, config, config.seed);
    m.report_.bandwidth = bsel.bandwidth;
    m.report_.bandwidth_score = bsel.score;
    m.report_.bandwidth_grid_scores = bsel.grid_scores;

    // stage 4: structure selection and final vine fit
    VineStructure structure = select_structure(m.pseudo_obs_);
    m.vine_.emplace(fit_vine(m.pseudo_obs_, structure, bsel.bandwidth,
                             config.truncation_tau, config.threads));

    // stage 5: interpolated inverse cdfs for sampling
    for (std::size_t j = 0; j < d; ++j) {
      const auto [lo, hi] = std::minmax_element(cols[j].begin(), cols[j].end());
      const double eta = config.eta_sds * qbvine::detail::sample_sd(cols[j]);
      const AveragedMarginal& marginal = m.marginals_[j];
      m.inverse_samplers_.push_back(build_inverse_cdf(
          [&marginal](double x) { return marginal.cdf(x); }, *lo, *hi, eta,
          config.inverse_grid_size));
    }
    return m;
  }

  int dimension() const { return report_.dimension; }
  const QbVineConfig& config() const { return config_; }
  const FitReport& report() const { return report_; }
  const Standardization& standardization() const { return std_; }
  const std::vector<AveragedMarginal>& marginals() const { return marginals_; }
  const VineModel& vine() const { return *vine_; }
  const std::vector<std::vector<double>>& pseudo_obs() const { return pseudo_obs_; }
  const std::vector<InterpolatedInverseCdf>& inverse_samplers() const {
    return inverse_samplers_;
  }

  double to_standardized(std::size_t dim, double x) const {
    return (x - std_.mean[dim]) / std_.sd[dim];
  }

  // log marginal predictive density on the original data scale
  double marginal_log_density(std::size_t dim, double x) const {
    return marginals_[dim].log_pdf(to_standardized(dim, x)) - std::log(std_.sd[dim]);
  }

  std::vector<double> pseudo_point(const std::vector<double>& x) const {
    std::vector<double> u(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
      u[j] = clamp_prob(marginals_[j].cdf(to_standardized(j, x[j])), kPseudoClamp);
    return u;
  }

  // Sklar composition: sum of marginal log densities plus the vine copula
  // log density at the pseudo-observations.
  double joint_log_density(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != dimension())
      throw std::invalid_argument("joint_log_density: dimension mismatch");
    double ld = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) ld += marginal_log_density(j, x[j]);
    return ld + vine_->log_density(pseudo_point(x));
  }

  // count x d draws on the original data scale.
  std::vector<std::vector<double>> sample(std::size_t count, std::uint64_t seed,
                                          unsigned threads = 1) const {
    auto u_rows = vine_->sample(count, seed, threads);
    for (auto& row : u_rows)
      for (std::size_t j = 0; j < row.size(); ++j)
        row[j] = inverse_samplers_[j](row[j]) * std_.sd[j] + std_.mean[j];
    return u_rows;
  }

  nlohmann::json to_json() const;
  static QbVineModel from_json(const nlohmann::json& j);

private:
  friend class ConditionalModel;

  QbVineConfig config_;
  Standardization std_;
  std::vector<AveragedMarginal> marginals_;
  std::vector<InterpolatedInverseCdf> inverse_samplers_;
  std::optional<VineModel> vine_;
  FitReport report_;
  std::vector<std::vector<double>> pseudo_obs_;
};

// ---- JSON serialization -------------------------------------------------

inline void to_json(nlohmann::json& j, const QbVineConfig& c) {
  std::vector<std::string> kinds;
  for (auto k : c.initial_kinds) kinds.push_back(to_string(k));
  j = nlohmann::json{{"initial_kinds", kinds},
                     {"rho_grid", c.rho_grid},
                     {"n_perms", c.n_perms},
                     {"bandwidth_grid", c.bandwidth_grid},
                     {"cv_folds", c.cv_folds},
                     {"energy_samples", c.energy_samples},
                     {"beta", c.beta},
                     {"seed", c.seed},
                     {"truncation_tau", c.truncation_tau},
                     {"inverse_grid_size", c.inverse_grid_size},
                     {"eta_sds", c.eta_sds},
                     {"standardize", c.standardize},
                     {"share_bandwidth", c.share_bandwidth}};
}

inline void from_json(const nlohmann::json& j, QbVineConfig& c) {
  c = QbVineConfig{};
  if (j.contains("initial_kinds")) {
    c.initial_kinds.clear();
    for (const auto& s : j.at("initial_kinds"))
      c.initial_kinds.push_back(initial_kind_from_string(s.get<std::string>()));
  }
  if (j.contains("rho_grid")) c.rho_grid = j.at("rho_grid").get<std::vector<double>>();
  if (j.contains("n_perms")) c.n_perms = j.at("n_perms").get<int>();
  if (j.contains("bandwidth_grid"))
    c.bandwidth_grid = j.at("bandwidth_grid").get<std::vector<double>>();
  if (j.contains("cv_folds")) c.cv_folds = j.at("cv_folds").get<int>();
  if (j.contains("energy_samples")) c.energy_samples = j.at("energy_samples").get<int>();
  if (j.contains("beta")) c.beta = j.at("beta").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("truncation_tau")) c.truncation_tau = j.at("truncation_tau").get<double>();
  if (j.contains("inverse_grid_size"))
    c.inverse_grid_size = j.at("inverse_grid_size").get<int>();
  if (j.contains("eta_sds")) c.eta_sds = j.at("eta_sds").get<double>();
  if (j.contains("standardize")) c.standardize = j.at("standardize").get<bool>();
  if (j.contains("share_bandwidth")) c.share_bandwidth = j.at("share_bandwidth").get<bool>();
}

inline void to_json(nlohmann::json& j, const FitReport& r) {
  j = nlohmann::json{{"rhos", r.rhos},
                     {"rho_scores", r.rho_scores},
                     {"bandwidth", r.bandwidth},
                     {"bandwidth_score", r.bandwidth_score},
                     {"bandwidth_grid_scores", r.bandwidth_grid_scores},
                     {"seed", r.seed},
                     {"n_rows", r.n_rows},
                     {"dimension", r.dimension}};
}

inline void from_json(const nlohmann::json& j, FitReport& r) {
  j.at("rhos").get_to(r.rhos);
  j.at("rho_scores").get_to(r.rho_scores);
  j.at("bandwidth").get_to(r.bandwidth);
  j.at("bandwidth_score").get_to(r.bandwidth_score);
  j.at("bandwidth_grid_scores").get_to(r.bandwidth_grid_scores);
  j.at("seed").get_to(r.seed);
  j.at("n_rows").get_to(r.n_rows);
  j.at("dimension").get_to(r.dimension);
}

namespace detail {

inline nlohmann::json vine_to_json(const VineModel& vine) {
  nlohmann::json edges = nlohmann::json::array();
  const auto& vs = vine.structure();
  for (std::size_t e = 0; e < vs.edges.size(); ++e) {
    const VineEdge& edge = vs.edges[e];
    const auto& fe = vine.fitted_edges()[e];
    nlohmann::json je{{"first", edge.first},
                      {"second", edge.second},
                      {"conditioning", edge.conditioning},
                      {"level", edge.level},
                      {"tau", edge.tau},
                      {"parent_first", edge.parent_first},
                      {"parent_second", edge.parent_second},
                      {"fit_tau", fe.fit_tau},
                      {"independent", !fe.copula.has_value()}};
    if (fe.copula) {
      je["latent_s"] = fe.copula->latent_s();
      je["latent_t"] = fe.copula->latent_t();
    }
    edges.push_back(std::move(je));
  }
  return nlohmann::json{{"dimension", vs.dimension},
                        {"levels", vs.levels},
                        {"bandwidth", vine.bandwidth()},
                        {"edges", std::move(edges)}};
}

inline VineModel vine_from_json(const nlohmann::json& j) {
  VineStructure vs;
  vs.dimension = j.at("dimension").get<int>();
  vs.levels = j.at("levels").get<std::vector<std::vector<int>>>();
  std::vector<VineModel::FittedEdge> fitted;
  const double bandwidth = j.at("bandwidth").get<double>();
  for (const auto& je : j.at("edges")) {
    VineEdge edge;
    edge.first = je.at("first").get<int>();
    edge.second = je.at("second").get<int>();
    edge.conditioning = je.at("conditioning").get<std::vector<int>>();
    edge.level = je.at("level").get<int>();
    edge.tau = je.at("tau").get<double>();
    edge.parent_first = je.at("parent_first").get<int>();
    edge.parent_second = je.at("parent_second").get<int>();
    vs.edges.push_back(std::move(edge));

    VineModel::FittedEdge fe;
    fe.fit_tau = je.at("fit_tau").get<double>();
    if (!je.at("independent").get<bool>())
      fe.copula = PairCopulaKde::restore(je.at("latent_s").get<std::vector<double>>(),
                                         je.at("latent_t").get<std::vector<double>>(),
                                         bandwidth);
    fitted.push_back(std::move(fe));
  }
  return VineModel(std::move(vs), std::move(fitted), bandwidth);
}

}  // namespace detail

inline nlohmann::json QbVineModel::to_json() const {
  nlohmann::json jm = nlohmann::json::array();
  for (std::size_t d = 0; d < marginals_.size(); ++d) {
    const AveragedMarginal& am = marginals_[d];
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t p = 0; p < am.members().size(); ++p) {
      members.push_back(nlohmann::json{
          {"perm", am.permutations()[p]},
          {"v", am.members()[p].cached_v()}});
    }
    const InitialPredictive& init = am.initial();
    jm.push_back(nlohmann::json{
        {"initial", {{"kind", to_string(init.kind)}, {"a", init.a}, {"b", init.b}}},
        {"rho", am.rho()},
        {"column", am.members().front().train_seq()},
        {"members", std::move(members)}});
  }

  nlohmann::json samplers = nlohmann::json::array();
  for (const auto& inv : inverse_samplers_) {
    std::vector<double> ys, cs;
    for (const auto& k : inv.knots()) {
      ys.push_back(k.y);
      cs.push_back(k.c);
    }
    samplers.push_back(nlohmann::json{{"eta", inv.eta()},
                                      {"grid_size", inv.grid_size()},
                                      {"knots_y", ys},
                                      {"knots_c", cs}});
  }

  return nlohmann::json{{"format", "qbvine-model"},
                        {"version", 1},
                        {"kind", "joint"},
                        {"config", config_},
                        {"standardization", {{"mean", std_.mean}, {"sd", std_.sd}}},
                        {"marginals", std::move(jm)},
                        {"inverse_samplers", std::move(samplers)},
                        {"vine", detail::vine_to_json(*vine_)},
                        {"report", report_}};
}

inline QbVineModel QbVineModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "qbvine-model")
    throw DataError("model file: not a qbvine model");
  if (j.value("version", 0) != 1)
    throw DataError("model file: unsupported version");

  QbVineModel m;
  m.config_ = j.at("config").get<QbVineConfig>();
  m.report_ = j.at("report").get<FitReport>();
  m.std_.mean = j.at("standardization").at("mean").get<std::vector<double>>();
  m.std_.sd = j.at("standardization").at("sd").get<std::vector<double>>();

  for (const auto& jm : j.at("marginals")) {
    InitialPredictive init;
    init.kind = initial_kind_from_string(jm.at("initial").at("kind").get<std::string>());
    init.a = jm.at("initial").at("a").get<double>();
    init.b = jm.at("initial").at("b").get<double>();
    const double rho = jm.at("rho").get<double>();
    const auto column = jm.at("column").get<std::vector<double>>();
    std::vector<PredictiveMarginal> members;
    std::vector<std::vector<std::size_t>> perms;
    for (const auto& member : jm.at("members")) {
      auto perm = member.at("perm").get<std::vector<std::size_t>>();
      auto v = member.at("v").get<std::vector<double>>();
      std::vector<double> ordered(column.size());
      for (std::size_t i = 0; i < perm.size(); ++i) ordered[i] = column[perm[i]];
      members.push_back(
          PredictiveMarginal::restore(std::move(ordered), rho, init, std::move(v)));
      perms.push_back(std::move(perm));
    }
    m.marginals_.push_back(
        AveragedMarginal::from_members(std::move(members), std::move(perms)));
  }

  for (const auto& js : j.at("inverse_samplers")) {
    const auto ys = js.at("knots_y").get<std::vector<double>>();
    const auto cs = js.at("knots_c").get<std::vector<double>>();
    std::vector<InterpolatedInverseCdf::Knot> knots(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) knots[i] = {ys[i], cs[i]};
    m.inverse_samplers_.emplace_back(std::move(knots), js.at("eta").get<double>(),
                                     js.at("grid_size").get<int>());
  }

  m.vine_.emplace(detail::vine_from_json(j.at("vine")));
  return m;
}

}  // namespace qbvine
