#ifndef LIVINGMETA_DIAGNOSTICS_HPP
#define LIVINGMETA_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/sampler.hpp"

// Convergence diagnostics: rank-normalized split R-hat (max of bulk and
// folded) and bulk/tail effective sample sizes with Geyer's initial monotone
// positive sequence estimator. A fit passes when every sampled parameter has
// R-hat <= 1.01 and bulk ESS >= 400.

namespace livingmeta {

// Inverse standard normal CDF, algorithm AS 241 (PPND16 precision).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    fail_validation("inverse_normal_cdf: p must lie strictly in (0, 1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-6) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

// Hyndman-Fan type-7 quantile (the R default) on an unsorted sample.
inline double quantile_type7(std::vector<double> x, double p) {
  if (x.empty()) fail_validation("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) fail_validation("quantile level outside [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - std::floor(h)) * (x[hi] - x[lo]);
}

namespace detail {

using Chains = std::vector<std::vector<double>>;  // [chain][iteration]

// First and second halves of every chain as separate chains.
inline Chains split_chains(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  return out;
}

// Fractional ranks (average over ties) of the pooled values, mapped back
// into the chain layout, then transformed through the normal quantile.
inline Chains rank_normalize(const Chains& chains) {
  struct Entry {
    double value;
    std::size_t chain, index;
  };
  std::vector<Entry> pool;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < chains[c].size(); ++i)
      pool.push_back({chains[c][i], c, i});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.value < b.value;
                   });
  const double s = static_cast<double>(pool.size());
  Chains out(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c)
    out[c].assign(chains[c].size(), 0.0);
  std::size_t i = 0;
  while (i < pool.size()) {
    std::size_t j = i;
    while (j < pool.size() && pool[j].value == pool[i].value) ++j;
    const double avg_rank =
        (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    const double z = inverse_normal_cdf((avg_rank - 0.375) / (s + 0.25));
    for (std::size_t k = i; k < j; ++k)
      out[pool[k].chain][pool[k].index] = z;
    i = j;
  }
  return out;
}

inline double chain_mean(const std::vector<double>& c) {
  return std::accumulate(c.begin(), c.end(), 0.0) /
         static_cast<double>(c.size());
}

inline double chain_variance(const std::vector<double>& c, double mean) {
  double s = 0.0;
  for (double v : c) s += (v - mean) * (v - mean);
  return s / static_cast<double>(c.size() - 1);
}

struct VarianceDecomposition {
  double w = 0.0;         // mean within-chain variance
  double var_plus = 0.0;  // pooled posterior-variance estimate
  bool degenerate = false;
};

inline VarianceDecomposition decompose(const Chains& chains) {
  VarianceDecomposition d;
  const std::size_t m = chains.size();
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = chain_mean(c);
    means.push_back(mu);
    w += chain_variance(c, mu);
  }
  w /= static_cast<double>(m);
  const double grand = chain_mean(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / static_cast<double>(m - 1);
  d.w = w;
  d.var_plus = (n - 1.0) / n * w + b / n;
  if (!(w > 0.0) || !std::isfinite(w) || !std::isfinite(b)) d.degenerate = true;
  return d;
}

inline double split_rhat(const Chains& split) {
  const auto d = decompose(split);
  if (d.degenerate) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(d.var_plus / d.w);
}

// Multi-chain ESS with Geyer's initial monotone positive sequence.
inline double ess_base(const Chains& split) {
  const std::size_t m = split.size();
  const std::size_t n = split.front().size();
  const auto d = decompose(split);
  if (d.degenerate || !(d.var_plus > 0.0))
    return std::numeric_limits<double>::quiet_NaN();

  std::vector<double> means;
  for (const auto& c : split) means.push_back(chain_mean(c));

  // Per-chain autocovariances (biased, 1/n normalization).
  auto acov = [&](const std::vector<double>& c, double mean,
                  std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < c.size(); ++i)
      s += (c[i] - mean) * (c[i + lag] - mean);
    return s / static_cast<double>(c.size());
  };

  std::vector<double> rho(n, 0.0);
  double tau = 1.0;  // contribution of rho_0 = 1 via -1 + 2*sum over pairs
  double prev_pair = std::numeric_limits<double>::infinity();
  double sum_pairs = 0.0;
  // rho_t = 1 - (W - mean_m acov_t) / var_plus
  std::size_t t = 1;
  {
    // First pair couples rho_0 = 1 with rho_1.
    double mean_acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) mean_acov += acov(split[c], means[c], 1);
    mean_acov /= static_cast<double>(m);
    const double rho1 = 1.0 - (d.w - mean_acov) / d.var_plus;
    double pair = 1.0 + rho1;
    if (pair < 0.0) pair = 0.0;
    prev_pair = pair;
    sum_pairs = pair;
    t = 2;
  }
  while (t + 1 < n) {
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      mean_a += acov(split[c], means[c], t);
      mean_b += acov(split[c], means[c], t + 1);
    }
    mean_a /= static_cast<double>(m);
    mean_b /= static_cast<double>(m);
    const double rho_a = 1.0 - (d.w - mean_a) / d.var_plus;
    const double rho_b = 1.0 - (d.w - mean_b) / d.var_plus;
    double pair = rho_a + rho_b;
    if (pair <= 0.0) break;                    // initial positive sequence
    pair = std::min(pair, prev_pair);          // enforce monotone decrease
    sum_pairs += pair;
    prev_pair = pair;
    t += 2;
  }
  tau = -1.0 + 2.0 * sum_pairs;
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
  const double ess = static_cast<double>(m * n) / tau;
  const double cap = static_cast<double>(m * n) *
                     std::log10(static_cast<double>(m * n));
  return std::min(ess, cap);
}

}  // namespace detail

struct ParameterDiagnostics {
  std::string name;
  bool fixed = false;    // pinned by the prior; excluded from pass/fail
  bool defined = true;   // false when R-hat/ESS are undefined
  std::string reason;    // why undefined, when defined == false
  double rhat = 0.0;
  double bulk_ess = 0.0;
  double tail_ess = 0.0;
  bool pass = false;
};

struct DiagnosticsReport {
  std::vector<ParameterDiagnostics> parameters;
  bool pass = false;

  const ParameterDiagnostics& for_parameter(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p;
    fail_validation("no diagnostics for parameter '" + name + "'");
  }
};

// Diagnostics for one parameter given per-chain draws.
inline ParameterDiagnostics diagnose_chains(const std::string& name,
                                            const detail::Chains& chains) {
  ParameterDiagnostics out;
  out.name = name;
  if (chains.size() < 2)
    fail_validation("diagnostics need at least 2 chains");
  for (const auto& c : chains)
    if (c.size() != chains.front().size())
      fail_validation("diagnostics: chains differ in length");
  if (chains.front().size() < 4) {
    out.defined = false;
    out.reason = "too few draws to split chains";
    return out;
  }
  for (const auto& c : chains)
    for (double v : c)
      if (!std::isfinite(v)) {
        out.defined = false;
        out.reason = "non-finite draws";
        return out;
      }

  const double first = chains.front().front();
  bool constant = true;
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) { constant = false; break; }
  if (constant) {
    out.defined = false;
    out.reason = "constant draws across all chains (R-hat undefined)";
    return out;
  }

  const auto split = detail::split_chains(chains);

  // Bulk R-hat on rank-normalized draws; folded R-hat on rank-normalized
  // absolute deviations from the median; report the maximum.
  const auto z = detail::rank_normalize(split);
  const double rhat_bulk = detail::split_rhat(z);

  std::vector<double> pooled;
  for (const auto& c : split) pooled.insert(pooled.end(), c.begin(), c.end());
  const double med = quantile_type7(pooled, 0.5);
  detail::Chains folded = split;
  for (auto& c : folded)
    for (auto& v : c) v = std::fabs(v - med);
  const double rhat_folded = detail::split_rhat(detail::rank_normalize(folded));

  if (std::isnan(rhat_bulk) || std::isnan(rhat_folded)) {
    out.defined = false;
    out.reason = "zero within-chain variance (R-hat undefined)";
    return out;
  }
  out.rhat = std::max(rhat_bulk, rhat_folded);

  out.bulk_ess = detail::ess_base(z);

  // Tail ESS: the smaller ESS of the 5% and 95% exceedance indicators.
  const double q05 = quantile_type7(pooled, 0.05);
  const double q95 = quantile_type7(pooled, 0.95);
  auto indicator_ess = [&](double q) {
    detail::Chains ind = split;
    for (auto& c : ind)
      for (auto& v : c) v = v <= q ? 1.0 : 0.0;
    return detail::ess_base(ind);
  };
  const double e05 = indicator_ess(q05);
  const double e95 = indicator_ess(q95);
  if (std::isnan(out.bulk_ess) || std::isnan(e05) || std::isnan(e95)) {
    out.defined = false;
    out.reason = "effective sample size undefined";
    return out;
  }
  out.tail_ess = std::min(e05, e95);
  out.pass = out.rhat <= 1.01 && out.bulk_ess >= 400.0;
  return out;
}

inline DiagnosticsReport diagnostics(const PosteriorDraws& draws) {
  if (draws.n_chains() < 2)
    fail_validation("diagnostics need at least 2 chains");
  DiagnosticsReport report;
  report.pass = true;
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    if (!draws.sampled[p]) {
      ParameterDiagnostics d;
      d.name = draws.names[p];
      d.fixed = true;
      d.defined = false;
      d.reason = "parameter pinned by a degenerate prior";
      report.parameters.push_back(std::move(d));
      continue;
    }
    ParameterDiagnostics d = diagnose_chains(draws.names[p], draws.values[p]);
    if (!d.defined || !d.pass) report.pass = false;
    report.parameters.push_back(std::move(d));
  }
  return report;
}

}  // namespace livingmeta

#endif
