#ifndef LIVINGMETA_PREDICTIVE_HPP
#define LIVINGMETA_PREDICTIVE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/linalg.hpp"
#include "livingmeta/model.hpp"
#include "livingmeta/rng.hpp"
#include "livingmeta/sampler.hpp"

// Posterior predictive replication and conjugate reconstruction of the
// marginalized random effects. Both are pure functions of the stored draws
// and a seed derived from the fit's master seed.

namespace livingmeta {

namespace detail {
inline constexpr std::uint64_t kPredictiveSalt = 0x7072656469637400ull;
inline constexpr std::uint64_t kConditionalSalt = 0x636f6e6469740000ull;

// Evenly spaced draw selection: (chain, iteration) pairs in chain-major
// order, at most max_draws of them.
inline std::vector<std::pair<std::size_t, std::size_t>> select_draws(
    const PosteriorDraws& draws, std::size_t max_draws) {
  const std::size_t total = draws.n_chains() * draws.n_iterations();
  if (total == 0) fail_validation("no draws to replicate from");
  const std::size_t take = max_draws == 0 ? total : std::min(total, max_draws);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t flat = k * total / take;
    out.emplace_back(flat / draws.n_iterations(), flat % draws.n_iterations());
  }
  return out;
}

inline Params params_at(const PosteriorDraws& draws, const Model& model,
                        std::size_t chain, std::size_t iter) {
  Params p;
  p.mu = draws.values[draws.index_of("mu")][chain][iter];
  p.tau = draws.values[draws.index_of("tau")][chain][iter];
  p.omega = draws.values[draws.index_of("omega")][chain][iter];
  for (const auto& name : model.beta_names())
    p.beta.push_back(draws.values[draws.index_of("beta[" + name + "]")][chain][iter]);
  return p;
}
}  // namespace detail

struct PredictiveDraws {
  std::vector<std::string> effect_ids;
  std::vector<std::vector<double>> replicates;  // [draw][effect]
};

// For each retained posterior draw, one replicated effect vector from the
// marginal model g_rep ~ MVN(X beta + mu, Sigma(tau, omega)).
inline PredictiveDraws posterior_predictive(const Model& model,
                                            const PosteriorDraws& draws,
                                            std::size_t max_draws = 1000) {
  PredictiveDraws out;
  for (const auto& e : model.effects()) out.effect_ids.push_back(e.effect_id);

  RngStream rng(mix_seed(draws.master_seed, detail::kPredictiveSalt));
  for (const auto& [chain, iter] : detail::select_draws(draws, max_draws)) {
    const Params p = detail::params_at(draws, model, chain, iter);
    std::vector<double> rep(model.n_effects(), 0.0);
    for (const auto& b : model.blocks()) {
      const std::size_t m = b.indices.size();
      const linalg::Matrix sigma = Model::block_sigma(b, p.tau, p.omega);
      auto chol = linalg::cholesky_lower(sigma);
      if (!chol)
        fail_validation("predictive: covariance for study '" + b.study_id +
                        "' is not positive definite");
      std::vector<double> z(m);
      for (auto& zi : z) zi = rng.normal();
      for (std::size_t i = 0; i < m; ++i) {
        double mean_i = p.mu;
        for (std::size_t c = 0; c < p.beta.size(); ++c)
          mean_i += b.x[i][c] * p.beta[c];
        double noise = 0.0;
        for (std::size_t j = 0; j <= i; ++j) noise += (*chol)(i, j) * z[j];
        rep[b.indices[i]] = mean_i + noise;
      }
    }
    out.replicates.push_back(std::move(rep));
  }
  return out;
}

inline std::string predictive_to_csv(const PredictiveDraws& pd) {
  csv::Writer w;
  w.row({"draw", "effect_id", "value"});
  for (std::size_t d = 0; d < pd.replicates.size(); ++d)
    for (std::size_t e = 0; e < pd.effect_ids.size(); ++e)
      w.row({std::to_string(d + 1), pd.effect_ids[e],
             fmt_full(pd.replicates[d][e])});
  return w.str();
}

struct RandomEffectDraws {
  std::vector<std::string> study_ids;
  std::vector<std::vector<double>> u;  // [draw][study], study-level deviation
  std::vector<std::string> effect_ids;
  std::vector<std::vector<double>> w;  // [draw][effect], within-study deviation
};

// Conjugate conditional draws of the marginalized random effects.
// Given (mu, tau, omega, beta) and writing r = g - mu - X beta,
// C = V + omega^2 I:
//   u | rest ~ Normal(mean (1'C^-1 r) / lambda, var 1 / lambda),
//     lambda = 1/tau^2 + 1'C^-1 1;
//   w | u, rest ~ MVN(P^-1 V^-1 (r - u), P^-1),  P = V^-1 + I/omega^2.
inline RandomEffectDraws conditional_random_effects(
    const Model& model, const PosteriorDraws& draws,
    std::size_t max_draws = 1000) {
  RandomEffectDraws out;
  for (const auto& b : model.blocks()) out.study_ids.push_back(b.study_id);
  for (const auto& e : model.effects()) out.effect_ids.push_back(e.effect_id);

  RngStream rng(mix_seed(draws.master_seed, detail::kConditionalSalt));
  for (const auto& [chain, iter] : detail::select_draws(draws, max_draws)) {
    const Params p = detail::params_at(draws, model, chain, iter);
    std::vector<double> u_draw;
    std::vector<double> w_draw(model.n_effects(), 0.0);

    for (const auto& b : model.blocks()) {
      const std::size_t m = b.indices.size();
      linalg::Matrix c = b.v;
      for (std::size_t i = 0; i < m; ++i) c(i, i) += p.omega * p.omega;
      auto chol_c = linalg::cholesky_lower(c);
      if (!chol_c)
        fail_validation("conditional draws: covariance for study '" +
                        b.study_id + "' is not positive definite");
      std::vector<double> r(m);
      for (std::size_t i = 0; i < m; ++i) {
        double xb = 0.0;
        for (std::size_t k = 0; k < p.beta.size(); ++k)
          xb += b.x[i][k] * p.beta[k];
        r[i] = b.g[i] - p.mu - xb;
      }
      const std::vector<double> a = linalg::cholesky_solve(*chol_c, r);
      const linalg::Matrix c_inv = linalg::cholesky_inverse(*chol_c);

      double u = 0.0;
      if (p.tau > 0.0) {
        double sum_inv = 0.0, one_a = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          one_a += a[i];
          for (std::size_t j = 0; j < m; ++j) sum_inv += c_inv(i, j);
        }
        const double lambda = 1.0 / (p.tau * p.tau) + sum_inv;
        u = one_a / lambda + rng.normal() / std::sqrt(lambda);
      }
      u_draw.push_back(u);

      if (p.omega > 0.0) {
        auto chol_v = linalg::cholesky_lower(b.v);
        if (!chol_v)
          fail_validation("conditional draws: sampling covariance for study '" +
                          b.study_id + "' is not positive definite");
        const linalg::Matrix v_inv = linalg::cholesky_inverse(*chol_v);
        linalg::Matrix prec = v_inv;
        for (std::size_t i = 0; i < m; ++i)
          prec(i, i) += 1.0 / (p.omega * p.omega);
        auto chol_p = linalg::cholesky_lower(prec);
        if (!chol_p)
          fail_validation("conditional draws: precision for study '" +
                          b.study_id + "' is not positive definite");
        std::vector<double> rhs(m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < m; ++j)
            rhs[i] += v_inv(i, j) * (r[j] - u);
        const std::vector<double> mean_w = linalg::cholesky_solve(*chol_p, rhs);
        // x = L^-T z has covariance P^-1 when P = L L'.
        std::vector<double> z(m);
        for (auto& zi : z) zi = rng.normal();
        const std::vector<double> noise =
            linalg::solve_lower_transposed(*chol_p, z);
        for (std::size_t i = 0; i < m; ++i)
          w_draw[b.indices[i]] = mean_w[i] + noise[i];
      }
    }
    out.u.push_back(std::move(u_draw));
    out.w.push_back(std::move(w_draw));
  }
  return out;
}

}  // namespace livingmeta

#endif
