#ifndef LIVINGMETA_MODEL_HPP
#define LIVINGMETA_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/covariance.hpp"
#include "livingmeta/linalg.hpp"

// Three-level meta-analytic model with known sampling covariance V:
//   g = X beta + 1 mu + Z u + w + eps,   u ~ N(0, tau^2 I) per study,
//   w ~ N(0, omega^2 I) per effect,      eps ~ N(0, V).
// The random effects are integrated out analytically, so the posterior walks
// only (mu, tau, omega, beta) against the marginal likelihood
//   g ~ MVN(X beta + 1 mu,  Z tau^2 Z' + omega^2 I + V),
// which is block diagonal by study: Sigma_s = V_s + tau^2 11' + omega^2 I.

namespace livingmeta {

enum class PriorKind { normal, exponential, half_normal, half_student_t, fixed, flat };

struct PriorSpec {
  PriorKind kind = PriorKind::normal;
  double a = 0.0;  // normal: mean; half_student_t: df
  double b = 1.0;  // normal/half_normal/half_student_t: sd or scale; exponential: rate
  double value = 0.0;  // fixed: the pinned value

  static PriorSpec normal(double mean, double sd) {
    if (!(sd > 0.0)) fail_validation("normal prior needs sd > 0");
    return {PriorKind::normal, mean, sd, 0.0};
  }
  static PriorSpec exponential(double rate) {
    if (!(rate > 0.0)) fail_validation("exponential prior needs rate > 0");
    return {PriorKind::exponential, 0.0, rate, 0.0};
  }
  static PriorSpec half_normal(double sd) {
    if (!(sd > 0.0)) fail_validation("half-normal prior needs sd > 0");
    return {PriorKind::half_normal, 0.0, sd, 0.0};
  }
  static PriorSpec half_student_t(double df, double scale) {
    if (!(df > 0.0) || !(scale > 0.0))
      fail_validation("half-student-t prior needs df > 0 and scale > 0");
    return {PriorKind::half_student_t, df, scale, 0.0};
  }
  static PriorSpec fixed(double v) { return {PriorKind::fixed, 0.0, 1.0, v}; }
  static PriorSpec flat() { return {PriorKind::flat, 0.0, 1.0, 0.0}; }

  bool is_fixed() const { return kind == PriorKind::fixed; }

  // log density and d(log density)/dx at x (natural scale).
  double log_density(double x, double* dlp = nullptr) const {
    switch (kind) {
      case PriorKind::normal: {
        const double z = (x - a) / b;
        if (dlp) *dlp = -z / b;
        return -0.5 * z * z - std::log(b) - 0.5 * std::log(2.0 * M_PI);
      }
      case PriorKind::exponential:
        if (dlp) *dlp = -b;
        return std::log(b) - b * x;
      case PriorKind::half_normal: {
        if (dlp) *dlp = -x / (b * b);
        return std::log(2.0) - std::log(b) - 0.5 * std::log(2.0 * M_PI) -
               0.5 * x * x / (b * b);
      }
      case PriorKind::half_student_t: {
        const double nu = a, s = b;
        if (dlp) *dlp = -(nu + 1.0) * x / (nu * s * s + x * x);
        return std::log(2.0) + std::lgamma((nu + 1.0) / 2.0) -
               std::lgamma(nu / 2.0) - 0.5 * std::log(nu * M_PI) -
               std::log(s) -
               (nu + 1.0) / 2.0 * std::log1p(x * x / (nu * s * s));
      }
      case PriorKind::flat:
        if (dlp) *dlp = 0.0;
        return 0.0;
      case PriorKind::fixed:
        fail_validation("fixed prior has no density to evaluate");
    }
    fail_validation("unknown prior kind");
  }

  std::string describe() const {
    char buf[80];
    switch (kind) {
      case PriorKind::normal:
        std::snprintf(buf, sizeof buf, "normal(%g, %g)", a, b);
        break;
      case PriorKind::exponential:
        std::snprintf(buf, sizeof buf, "exponential(%g)", b);
        break;
      case PriorKind::half_normal:
        std::snprintf(buf, sizeof buf, "half_normal(%g)", b);
        break;
      case PriorKind::half_student_t:
        std::snprintf(buf, sizeof buf, "half_student_t(%g, %g)", a, b);
        break;
      case PriorKind::fixed:
        std::snprintf(buf, sizeof buf, "fixed(%g)", value);
        break;
      case PriorKind::flat:
        std::snprintf(buf, sizeof buf, "flat");
        break;
    }
    return buf;
  }
};

struct ModelSpec {
  PriorSpec prior_mu = PriorSpec::normal(0.0, 1.0);
  PriorSpec prior_tau = PriorSpec::exponential(1.0);
  PriorSpec prior_omega = PriorSpec::exponential(1.0);
  const double residual_scale = 1.0;  // fixed by design, never estimated
  // Moderator coefficients always receive N(0, 1) priors.

  void check() const {
    auto location_ok = [](PriorKind k) {
      return k == PriorKind::normal || k == PriorKind::flat ||
             k == PriorKind::fixed;
    };
    auto positive_ok = [](const PriorSpec& p) {
      switch (p.kind) {
        case PriorKind::exponential:
        case PriorKind::half_normal:
        case PriorKind::half_student_t:
        case PriorKind::flat:
          return true;
        case PriorKind::fixed:
          return p.value >= 0.0;
        case PriorKind::normal:
          return false;  // support crosses zero
      }
      return false;
    };
    if (!location_ok(prior_mu.kind))
      fail_validation("prior for mu must be normal, flat or fixed");
    if (!positive_ok(prior_tau))
      fail_validation("prior for tau must have support on positives only");
    if (!positive_ok(prior_omega))
      fail_validation("prior for omega must have support on positives only");
    if (residual_scale != 1.0)
      fail_validation("residual scale is fixed at 1");
  }
};

struct Params {
  double mu = 0.0;
  double tau = 0.0;
  double omega = 0.0;
  std::vector<double> beta;
};

struct LogDensity {
  double value = 0.0;
  // Gradient on the natural scale, in the order mu, tau, omega, beta...
  double d_mu = 0.0;
  double d_tau = 0.0;
  double d_omega = 0.0;
  std::vector<double> d_beta;
};

// Data and evaluation engine shared by the sampler, the predictive checks
// and the meta-regression path.
class Model {
 public:
  struct Block {
    std::string study_id;
    std::vector<std::size_t> indices;  // rows in the effect order
    linalg::Matrix v;
    std::vector<double> g;
    std::vector<std::vector<double>> x;  // per row, k design entries
  };

  Model(SamplingCovariance cov, ModelSpec spec,
        std::vector<std::vector<double>> design_columns = {},
        std::vector<std::string> beta_names = {})
      : spec_(spec), beta_names_(std::move(beta_names)) {
    spec_.check();
    if (cov.dimension() == 0) fail_validation("model: no effects");
    if (design_columns.size() != beta_names_.size())
      fail_validation("model: design columns and names differ in count");
    for (std::size_t c = 0; c < design_columns.size(); ++c) {
      if (design_columns[c].size() != cov.dimension())
        fail_validation("model: design column '" + beta_names_[c] + "' has " +
                        std::to_string(design_columns[c].size()) +
                        " rows for " + std::to_string(cov.dimension()) +
                        " effects");
      const double first = design_columns[c].front();
      bool varies = false;
      for (double v : design_columns[c])
        if (v != first) { varies = true; break; }
      if (!varies)
        fail_validation("model: design column '" + beta_names_[c] +
                        "' is constant (no contrast)");
    }

    for (const auto& sb : cov.blocks) {
      Block b;
      b.study_id = sb.study_id;
      b.indices = sb.effect_indices;
      b.v = sb.v;
      for (std::size_t i : sb.effect_indices) {
        b.g.push_back(cov.effects[i].g);
        std::vector<double> xrow;
        for (const auto& col : design_columns) xrow.push_back(col[i]);
        b.x.push_back(std::move(xrow));
      }
      blocks_.push_back(std::move(b));
    }
    effects_ = std::move(cov.effects);
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<EffectEstimate>& effects() const { return effects_; }
  std::size_t n_effects() const { return effects_.size(); }
  std::size_t n_beta() const { return beta_names_.size(); }
  const std::vector<std::string>& beta_names() const { return beta_names_; }

  // Marginal covariance of one study block at given heterogeneity SDs.
  static linalg::Matrix block_sigma(const Block& b, double tau, double omega) {
    linalg::Matrix s = b.v;
    const double t2 = tau * tau, w2 = omega * omega;
    for (std::size_t i = 0; i < s.rows(); ++i) {
      for (std::size_t j = 0; j < s.cols(); ++j) s(i, j) += t2;
      s(i, i) += w2;
    }
    return s;
  }

  // Log posterior density (marginal likelihood + priors) with analytic
  // gradient on the natural scale. Fixed parameters contribute no prior term
  // and their gradient entries are reported as 0.
  LogDensity log_marginal_posterior(const Params& p) const {
    if (!(p.tau >= 0.0) || !(p.omega >= 0.0))
      fail_validation("log_marginal_posterior: tau and omega must be >= 0");
    if (p.beta.size() != n_beta())
      fail_validation("log_marginal_posterior: expected " +
                      std::to_string(n_beta()) + " beta values");

    LogDensity out;
    out.d_beta.assign(n_beta(), 0.0);

    for (const auto& b : blocks_) {
      const std::size_t m = b.indices.size();
      linalg::Matrix sigma = block_sigma(b, p.tau, p.omega);
      auto chol = linalg::cholesky_lower(sigma);
      if (!chol)
        fail_validation("marginal covariance for study '" + b.study_id +
                        "' is not positive definite");

      std::vector<double> r(m);
      for (std::size_t i = 0; i < m; ++i) {
        double xb = 0.0;
        for (std::size_t c = 0; c < n_beta(); ++c) xb += b.x[i][c] * p.beta[c];
        r[i] = b.g[i] - p.mu - xb;
      }

      const std::vector<double> alpha = linalg::cholesky_solve(*chol, r);
      linalg::Matrix inv = linalg::cholesky_inverse(*chol);

      double quad = 0.0, one_alpha = 0.0, alpha_sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        quad += r[i] * alpha[i];
        one_alpha += alpha[i];
        alpha_sq += alpha[i] * alpha[i];
      }
      double tr_inv = 0.0, sum_inv = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        tr_inv += inv(i, i);
        for (std::size_t j = 0; j < m; ++j) sum_inv += inv(i, j);
      }

      out.value += -0.5 * static_cast<double>(m) * std::log(2.0 * M_PI) -
                   0.5 * linalg::log_det_from_cholesky(*chol) - 0.5 * quad;
      out.d_mu += one_alpha;
      for (std::size_t c = 0; c < n_beta(); ++c) {
        double xa = 0.0;
        for (std::size_t i = 0; i < m; ++i) xa += b.x[i][c] * alpha[i];
        out.d_beta[c] += xa;
      }
      out.d_tau += p.tau * (one_alpha * one_alpha - sum_inv);
      out.d_omega += p.omega * (alpha_sq - tr_inv);
    }

    double dlp = 0.0;
    if (!spec_.prior_mu.is_fixed()) {
      out.value += spec_.prior_mu.log_density(p.mu, &dlp);
      out.d_mu += dlp;
    }
    if (!spec_.prior_tau.is_fixed()) {
      out.value += spec_.prior_tau.log_density(p.tau, &dlp);
      out.d_tau += dlp;
    }
    if (!spec_.prior_omega.is_fixed()) {
      out.value += spec_.prior_omega.log_density(p.omega, &dlp);
      out.d_omega += dlp;
    }
    for (std::size_t c = 0; c < n_beta(); ++c) {
      out.value += -0.5 * p.beta[c] * p.beta[c] - 0.5 * std::log(2.0 * M_PI);
      out.d_beta[c] += -p.beta[c];
    }
    if (!std::isfinite(out.value))
      fail_convergence("log posterior is not finite at a valid parameter point");
    return out;
  }

  // --- Sampler parameterization: theta = (mu, log tau, log omega, beta...)
  // with fixed parameters omitted. Positive parameters carry the log-scale
  // Jacobian term.

  std::size_t dim() const {
    return (spec_.prior_mu.is_fixed() ? 0 : 1) +
           (spec_.prior_tau.is_fixed() ? 0 : 1) +
           (spec_.prior_omega.is_fixed() ? 0 : 1) + n_beta();
  }

  std::vector<std::string> sampled_names() const {
    std::vector<std::string> names;
    if (!spec_.prior_mu.is_fixed()) names.push_back("mu");
    if (!spec_.prior_tau.is_fixed()) names.push_back("tau");
    if (!spec_.prior_omega.is_fixed()) names.push_back("omega");
    for (const auto& n : beta_names_) names.push_back("beta[" + n + "]");
    return names;
  }

  Params unpack(const std::vector<double>& theta) const {
    if (theta.size() != dim())
      fail_validation("parameter vector has wrong dimension");
    Params p;
    std::size_t k = 0;
    p.mu = spec_.prior_mu.is_fixed() ? spec_.prior_mu.value : theta[k++];
    p.tau = spec_.prior_tau.is_fixed() ? spec_.prior_tau.value
                                       : std::exp(theta[k++]);
    p.omega = spec_.prior_omega.is_fixed() ? spec_.prior_omega.value
                                           : std::exp(theta[k++]);
    for (std::size_t c = 0; c < n_beta(); ++c) p.beta.push_back(theta[k++]);
    return p;
  }

  // Log density in sampler space (natural density + Jacobians) and its
  // gradient with respect to theta.
  double logp_grad(const std::vector<double>& theta,
                   std::vector<double>* grad) const {
    const Params p = unpack(theta);
    const LogDensity nat = log_marginal_posterior(p);
    double value = nat.value;
    if (grad) grad->assign(dim(), 0.0);
    std::size_t k = 0;
    if (!spec_.prior_mu.is_fixed()) {
      if (grad) (*grad)[k] = nat.d_mu;
      ++k;
    }
    if (!spec_.prior_tau.is_fixed()) {
      value += std::log(p.tau);  // Jacobian of tau = exp(theta)
      if (grad) (*grad)[k] = nat.d_tau * p.tau + 1.0;
      ++k;
    }
    if (!spec_.prior_omega.is_fixed()) {
      value += std::log(p.omega);
      if (grad) (*grad)[k] = nat.d_omega * p.omega + 1.0;
      ++k;
    }
    for (std::size_t c = 0; c < n_beta(); ++c) {
      if (grad) (*grad)[k] = nat.d_beta[c];
      ++k;
    }
    return value;
  }

 private:
  ModelSpec spec_;
  std::vector<Block> blocks_;
  std::vector<EffectEstimate> effects_;
  std::vector<std::string> beta_names_;
};

}  // namespace livingmeta

#endif
