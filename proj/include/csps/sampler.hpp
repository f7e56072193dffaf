#pragma once

// MCMC over (q, M, Z) with the coefficients integrated out. One iteration is
//   1. a systematic truncated-normal sweep over the latent matrix Z,
//   2. one single-entry toggle proposal per class row of M (or one
//      whole-column toggle when rho == 1),
//   3. an update of q (random walk on the logit scale, or an exact beta
//      draw when rho == 1).
// Coefficient draws are taken from pi(beta | Z, M) at recorded iterations.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "csps/dataset.hpp"
#include "csps/error.hpp"
#include "csps/gaussian_core.hpp"
#include "csps/model.hpp"
#include "csps/normal.hpp"
#include "csps/parallel.hpp"

namespace csps {

enum class ChainStart { empty, full, random };

inline std::string to_string(ChainStart s) {
  switch (s) {
    case ChainStart::empty: return "empty";
    case ChainStart::full: return "full";
    case ChainStart::random: return "random";
  }
  return "?";
}

inline ChainStart parse_chain_start(const std::string& s) {
  if (s == "empty") return ChainStart::empty;
  if (s == "full") return ChainStart::full;
  if (s == "random") return ChainStart::random;
  throw ValidationError("unknown chain start '" + s + "' (expected empty, full or random)");
}

struct ChainConfig {
  long iterations = 11000;
  long burn_in = 1000;
  long thin = 10;
  std::uint64_t seed = 1;
  double q_proposal_scale = 0.5;
  ChainStart start = ChainStart::empty;
  Hyperparameters hp;
  // When false, M and q stay at their starting values (conditional runs).
  bool update_model = true;
  std::optional<IndicatorMatrix> fixed_model;
  // Verify Z lies in its truncation region after every sweep.
  bool debug_checks = false;

  long recorded_draws() const { return (iterations - burn_in) / thin; }

  void validate(int p) const {
    if (thin < 1) throw ValidationError("thin must be >= 1");
    if (burn_in < 0 || burn_in >= iterations)
      throw ValidationError("burn_in must satisfy 0 <= burn_in < iterations");
    if (!(q_proposal_scale >= 0.0)) throw ValidationError("q_proposal_scale must be >= 0");
    hp.validate(p);
  }
};

struct ChainOutput {
  std::vector<IndicatorMatrix> m_draws;
  std::vector<double> q_draws;
  std::vector<CoefficientMatrix> beta_draws;
  std::vector<long> accept_counts;    // per class row (per column move when rho == 1)
  std::vector<long> proposal_counts;
  long q_accept = 0;
  long q_proposals = 0;
  long variance_floor_hits = 0;
  std::uint64_t seed = 0;
  ChainStart start = ChainStart::empty;

  std::size_t size() const { return m_draws.size(); }
};

// Region S[y] of latent vectors consistent with label y.
struct TruncationRegion {
  int label = 0;
  int c = 1;

  TruncationRegion(int y, int classes) : label(y), c(classes) {
    if (classes < 1) throw ValidationError("truncation_region: c must be >= 1");
    if (y < 0 || y > classes) throw ValidationError("truncation_region: label out of range");
  }

  bool contains(std::span<const double> z) const {
    if (label == 0) {
      for (double v : z)
        if (!(v < 0.0)) return false;
      return true;
    }
    const double zy = z[label - 1];
    if (!(zy > 0.0)) return false;
    for (int j = 0; j < c; ++j)
      if (j != label - 1 && !(z[j] < zy)) return false;
    return true;
  }

  // Admissible interval for coordinate j (0-based row) given the others.
  std::pair<double, double> bounds(int j, std::span<const double> z) const {
    if (label == 0) return {-kInf, 0.0};
    if (j == label - 1) {
      double lo = 0.0;
      for (int a = 0; a < c; ++a)
        if (a != j) lo = std::max(lo, z[a]);
      return {lo, kInf};
    }
    return {-kInf, z[label - 1]};
  }
};

inline TruncationRegion truncation_region(int y, int c) { return TruncationRegion(y, c); }

// Cache for one class row: the active design (plus its transpose for
// contiguous row access) and the coefficient posterior given Z_{.j}.
struct ClassCache {
  ActiveDesign design;
  Eigen::MatrixXd design_t;  // m x n
  CoefficientPosterior post;
};

struct ChainState {
  Eigen::MatrixXd Z;  // n x c
  IndicatorMatrix M;
  double q = 0.5;
  std::vector<ClassCache> caches;
};

// Read-only data shared by all updates of one chain.
class SamplerContext {
 public:
  SamplerContext(const Dataset& data, const Hyperparameters& hp)
      : data_(data), hp_(hp), gram_(data.design.transpose() * data.design) {}

  const Dataset& data() const { return data_; }
  const Hyperparameters& hp() const { return hp_; }
  int n() const { return data_.n(); }
  int c() const { return data_.c(); }
  int p() const { return data_.p(); }

  ClassCache build_cache(const IndicatorMatrix& m, int j,
                         const Eigen::Ref<const Eigen::VectorXd>& z) const {
    ClassCache cache;
    cache.design = ActiveDesign::for_row(data_.design, m, j, hp_);
    cache.design_t = cache.design.columns.transpose();
    const auto& idx = cache.design.column_index;
    const int mm = static_cast<int>(idx.size());
    Eigen::MatrixXd gram(mm, mm);
    for (int a = 0; a < mm; ++a)
      for (int b = 0; b < mm; ++b) gram(a, b) = gram_(idx[a], idx[b]);
    const Eigen::VectorXd xtz = cache.design_t * z;
    cache.post = coefficient_posterior_from_stats(cache.design.prior_mean, cache.design.prior_var,
                                                  gram, xtz);
    return cache;
  }

  double log_marginal(const ClassCache& cache, double zz) const {
    return log_marginal_from_posterior(cache.post, cache.design.prior_mean,
                                       cache.design.prior_var, n(), zz);
  }

 private:
  const Dataset& data_;
  const Hyperparameters& hp_;
  Eigen::MatrixXd gram_;
};

inline void resync_caches(ChainState& state, const SamplerContext& ctx) {
  state.caches.resize(ctx.c());
  for (int j = 0; j < ctx.c(); ++j) state.caches[j] = ctx.build_cache(state.M, j, state.Z.col(j));
}

inline void check_latents(const ChainState& state, const Dataset& data) {
  std::vector<double> row(data.c());
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.c(); ++j) row[j] = state.Z(i, j);
    if (!truncation_region(data.labels[i], data.c()).contains(row))
      throw NumericalError("latent row " + std::to_string(i) + " left its truncation region");
  }
}

// Any point of S[y]: Z_y ~ N+(0,1), then the rest truncated below Z_y; for
// y = 0 every coordinate ~ N-(0,1).
inline Eigen::MatrixXd initial_latents(const Dataset& data, Rng& rng) {
  const int n = data.n();
  const int c = data.c();
  Eigen::MatrixXd Z(n, c);
  for (int i = 0; i < n; ++i) {
    const int y = data.labels[i];
    if (y == 0) {
      for (int j = 0; j < c; ++j) Z(i, j) = sample_truncated_normal(rng, 0.0, 1.0, -kInf, 0.0);
      continue;
    }
    const double top = sample_truncated_normal(rng, 0.0, 1.0, 0.0, kInf);
    for (int j = 0; j < c; ++j)
      Z(i, j) = (j == y - 1) ? top : sample_truncated_normal(rng, 0.0, 1.0, -kInf, top);
  }
  return Z;
}

inline ChainState initialize_state(const SamplerContext& ctx, const ChainConfig& config,
                                   Rng& rng) {
  ChainState state;
  state.q = config.hp.prior_mean_q();
  if (config.fixed_model) {
    state.M = *config.fixed_model;
  } else {
    switch (config.start) {
      case ChainStart::empty: state.M = IndicatorMatrix(ctx.c(), ctx.p()); break;
      case ChainStart::full: state.M = IndicatorMatrix::full(ctx.c(), ctx.p()); break;
      case ChainStart::random:
        state.M = sample_indicator_prior(ctx.c(), ctx.p(), state.q, config.hp.rho, rng);
        break;
    }
  }
  state.Z = initial_latents(ctx.data(), rng);
  resync_caches(state, ctx);
  return state;
}

inline constexpr double kVarianceFloor = 1e-12;

// Systematic sweep over units then classes; each Z_ij is redrawn from its
// leave-one-out conditional truncated to keep Z_i. in S[y_i].
inline void update_latents(ChainState& state, const SamplerContext& ctx, Rng& rng,
                           long* floor_hits = nullptr) {
  const int n = ctx.n();
  const int c = ctx.c();
  Eigen::VectorXd direction;
  std::vector<double> row(c);
  for (int i = 0; i < n; ++i) {
    const TruncationRegion region(ctx.data().labels[i], c);
    for (int j = 0; j < c; ++j) row[j] = state.Z(i, j);
    for (int j = 0; j < c; ++j) {
      ClassCache& cache = state.caches[j];
      const auto x = cache.design_t.col(i);
      direction.noalias() = cache.post.covariance * x;
      const double h = x.dot(direction);
      if (!(h < 1.0)) throw NumericalError("leverage reached 1 in latent update");
      const double w = x.dot(cache.post.mean);
      const double zi = row[j];
      const double mean = (w - h * zi) / (1.0 - h);
      double var = 1.0 / (1.0 - h);
      if (var < kVarianceFloor) {
        var = kVarianceFloor;
        if (floor_hits) ++*floor_hits;
      }
      const auto [lo, hi] = region.bounds(j, row);
      const double znew = sample_truncated_normal(rng, mean, std::sqrt(var), lo, hi);
      row[j] = znew;
      state.Z(i, j) = znew;
      cache.post.mean.noalias() += direction * (znew - zi);
    }
  }
}

struct MoveTally {
  std::vector<long> accepted;
  std::vector<long> proposed;
};

// Metropolis-Hastings toggles of M. The acceptance ratio is the change in
// the exact marginal log density of the affected latent columns plus the
// change in log pi(M | q).
inline void update_indicators(ChainState& state, const SamplerContext& ctx, Rng& rng,
                              MoveTally* tally = nullptr) {
  const int c = ctx.c();
  const int p = ctx.p();
  const double rho = ctx.hp().rho;
  std::uniform_int_distribution<int> pick_column(1, p);
  // Fresh caches: removes drift accumulated by incremental latent updates.
  resync_caches(state, ctx);

  if (rho >= 1.0) {
    const int k = pick_column(rng);
    IndicatorMatrix proposal = state.M;
    for (int j = 0; j < c; ++j) proposal.toggle(j, k);
    double log_ratio = log_column_prior(proposal.column_count(k), c, state.q, rho) -
                       log_column_prior(state.M.column_count(k), c, state.q, rho);
    std::vector<ClassCache> proposed(c);
    for (int j = 0; j < c; ++j) {
      const double zz = state.Z.col(j).squaredNorm();
      proposed[j] = ctx.build_cache(proposal, j, state.Z.col(j));
      log_ratio += ctx.log_marginal(proposed[j], zz) - ctx.log_marginal(state.caches[j], zz);
    }
    if (tally) ++tally->proposed[0];
    if (std::log(open_uniform(rng)) < log_ratio) {
      state.M = std::move(proposal);
      state.caches = std::move(proposed);
      if (tally) ++tally->accepted[0];
    }
    return;
  }

  for (int j = 0; j < c; ++j) {
    const int k = pick_column(rng);
    const int count = state.M.column_count(k);
    const int new_count = state.M(j, k) ? count - 1 : count + 1;
    IndicatorMatrix proposal = state.M;
    proposal.toggle(j, k);
    const double zz = state.Z.col(j).squaredNorm();
    ClassCache candidate = ctx.build_cache(proposal, j, state.Z.col(j));
    const double log_ratio = ctx.log_marginal(candidate, zz) -
                             ctx.log_marginal(state.caches[j], zz) +
                             log_column_prior(new_count, c, state.q, rho) -
                             log_column_prior(count, c, state.q, rho);
    if (tally) ++tally->proposed[j];
    if (std::log(open_uniform(rng)) < log_ratio) {
      state.M = std::move(proposal);
      state.caches[j] = std::move(candidate);
      if (tally) ++tally->accepted[j];
    }
  }
}

// log of Beta(q; g1, g2) * pi(M | q) * q (1 - q), the last factor being the
// Jacobian of the logit transform.
inline double log_q_target_logit(double q, const IndicatorMatrix& m, const Hyperparameters& hp) {
  if (!(q > 0.0 && q < 1.0)) return -kInf;
  return hp.gamma1 * std::log(q) + hp.gamma2 * std::log1p(-q) +
         log_prior_indicator(m, q, hp.rho);
}

inline void update_q(ChainState& state, const Hyperparameters& hp, double proposal_scale,
                     Rng& rng, long* accepted = nullptr, long* proposed = nullptr) {
  const int c = state.M.classes();
  const int p = state.M.predictors();
  if (hp.rho >= 1.0) {
    int on = 0;
    for (int k = 1; k <= p; ++k) on += state.M.column_count(k) == c ? 1 : 0;
    state.q = sample_beta(rng, hp.gamma1 + on, hp.gamma2 + p - on);
    if (accepted) ++*accepted;
    if (proposed) ++*proposed;
    return;
  }
  if (proposal_scale <= 0.0) return;
  const double logit = std::log(state.q) - std::log1p(-state.q);
  const double cand_logit = logit + proposal_scale * std_normal(rng);
  const double cand = 1.0 / (1.0 + std::exp(-cand_logit));
  const double log_ratio =
      log_q_target_logit(cand, state.M, hp) - log_q_target_logit(state.q, state.M, hp);
  if (proposed) ++*proposed;
  if (std::log(open_uniform(rng)) < log_ratio) {
    state.q = cand;
    if (accepted) ++*accepted;
  }
}

// Coefficients from pi(beta | Z, M): independent Gaussian rows on the
// active entries, exact zeros elsewhere.
inline CoefficientMatrix draw_beta(const ChainState& state, Rng& rng) {
  const int c = state.M.classes();
  CoefficientMatrix beta = CoefficientMatrix::Zero(c, state.M.cols());
  for (int j = 0; j < c; ++j) {
    const ClassCache& cache = state.caches[j];
    const int m = cache.design.m();
    Eigen::VectorXd eps(m);
    for (int a = 0; a < m; ++a) eps(a) = std_normal(rng);
    // Vt = (L L')^{-1}, so mt + L'^{-1} eps has covariance Vt.
    const Eigen::VectorXd draw =
        cache.post.mean + cache.post.precision_factor.matrixU().solve(eps);
    for (int a = 0; a < m; ++a) beta(j, cache.design.column_index[a]) = draw(a);
  }
  return beta;
}

inline void validate_chain_inputs(const Dataset& data, const ChainConfig& config) {
  data.validate();
  config.validate(data.p());
  if (data.n() == 0 && config.start == ChainStart::random && !config.fixed_model)
    throw ValidationError("random start requires data: latents are defined through labels");
  if (config.fixed_model && (config.fixed_model->classes() != data.c() ||
                             config.fixed_model->predictors() != data.p()))
    throw ValidationError("fixed model shape does not match data");
}

inline ChainOutput run_chain(const Dataset& data, const ChainConfig& config) {
  validate_chain_inputs(data, config);
  const SamplerContext ctx(data, config.hp);
  Rng rng(config.seed);
  ChainState state = initialize_state(ctx, config, rng);

  ChainOutput out;
  out.seed = config.seed;
  out.start = config.start;
  const long keep = config.recorded_draws();
  out.m_draws.reserve(keep);
  out.q_draws.reserve(keep);
  out.beta_draws.reserve(keep);
  const int moves = config.hp.rho >= 1.0 ? 1 : data.c();
  MoveTally tally{std::vector<long>(moves, 0), std::vector<long>(moves, 0)};

  for (long t = 1; t <= config.iterations; ++t) {
    update_latents(state, ctx, rng, &out.variance_floor_hits);
    if (config.debug_checks) check_latents(state, data);
    if (config.update_model) {
      update_indicators(state, ctx, rng, &tally);
      update_q(state, config.hp, config.q_proposal_scale, rng, &out.q_accept, &out.q_proposals);
    } else {
      resync_caches(state, ctx);
    }
    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      resync_caches(state, ctx);
      out.m_draws.push_back(state.M);
      out.q_draws.push_back(state.q);
      out.beta_draws.push_back(draw_beta(state, rng));
    }
  }
  out.accept_counts = std::move(tally.accepted);
  out.proposal_counts = std::move(tally.proposed);
  return out;
}

struct ChainSpec {
  std::uint64_t seed = 1;
  ChainStart start = ChainStart::empty;
};

// Chains that share a seed reproduce each other; allowed, but usually a
// configuration mistake.
inline bool has_duplicate_seeds(std::span<const ChainSpec> specs) {
  std::set<std::uint64_t> seen;
  for (const auto& s : specs)
    if (!seen.insert(s.seed).second) return true;
  return false;
}

inline std::vector<ChainOutput> run_chains(const Dataset& data, const ChainConfig& base,
                                           std::span<const ChainSpec> specs,
                                           int workers = default_workers()) {
  if (has_duplicate_seeds(specs))
    std::clog << "warning: several chains share a seed and will produce identical output\n";
  std::vector<ChainOutput> outputs(specs.size());
  parallel_for(static_cast<int>(specs.size()), workers, [&](int i) {
    ChainConfig cfg = base;
    cfg.seed = specs[i].seed;
    cfg.start = specs[i].start;
    outputs[i] = run_chain(data, cfg);
  });
  return outputs;
}

}  // namespace csps
