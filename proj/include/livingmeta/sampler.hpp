#ifndef LIVINGMETA_SAMPLER_HPP
#define LIVINGMETA_SAMPLER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/model.hpp"
#include "livingmeta/rng.hpp"

// No-U-turn sampler with multinomial trajectory sampling, a diagonal metric
// and dual-averaging step-size adaptation. Adaptation runs only during
// warmup (windowed, doubling); everything is frozen for the sampling phase.
// Chains use disjoint seeded streams derived from the master seed and run
// serially, so a fixed master seed gives bit-identical draws.

namespace livingmeta {

struct McmcConfig {
  int n_chains = 4;
  int warmup_iterations = 1000;
  int sampling_iterations = 3000;
  std::uint64_t master_seed = 0;
  int max_treedepth = 10;
  double target_accept = 0.8;

  void check() const {
    if (n_chains < 2) fail_validation("mcmc: need at least 2 chains");
    if (warmup_iterations < 1 || sampling_iterations < 1)
      fail_validation("mcmc: iterations must be >= 1");
    if (max_treedepth < 1) fail_validation("mcmc: max_treedepth must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
      fail_validation("mcmc: target_accept must be in (0, 1)");
  }
};

struct PosteriorDraws {
  std::vector<std::string> names;   // mu, tau, omega, beta[...]
  std::vector<bool> sampled;        // false for parameters pinned by a prior
  // values[param][chain][iteration], natural scale
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<long> divergences;    // per chain, sampling phase only
  std::vector<double> step_sizes;   // per chain, frozen after warmup
  std::vector<std::string> chain_failures;  // aborted chains, with reasons
  int warmup_iterations = 0;
  int sampling_iterations = 0;
  std::uint64_t master_seed = 0;

  std::size_t n_params() const { return names.size(); }
  std::size_t n_chains() const {
    return values.empty() ? 0 : values.front().size();
  }
  std::size_t n_iterations() const {
    return n_chains() == 0 ? 0 : values.front().front().size();
  }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    fail_validation("no parameter named '" + name + "' in the draws");
  }

  std::vector<double> flat(std::size_t param) const {
    std::vector<double> out;
    for (const auto& chain : values[param])
      out.insert(out.end(), chain.begin(), chain.end());
    return out;
  }

  long total_divergences() const {
    long s = 0;
    for (long d : divergences) s += d;
    return s;
  }
};

namespace nuts {

constexpr double kDivergenceThreshold = 1000.0;

struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double logp = 0.0;
};

struct Evaluator {
  const Model* model;

  // Never throws out of the trajectory: evaluation failures (overflowing
  // tau, non-PD covariance) surface as -inf and get rejected as divergences.
  bool operator()(const std::vector<double>& q, double& logp,
                  std::vector<double>& grad) const {
    try {
      logp = model->logp_grad(q, &grad);
    } catch (const Error&) {
      logp = -std::numeric_limits<double>::infinity();
      grad.assign(q.size(), 0.0);
      return false;
    }
    if (!std::isfinite(logp)) {
      logp = -std::numeric_limits<double>::infinity();
      return false;
    }
    for (double g : grad)
      if (!std::isfinite(g)) return false;
    return true;
  }
};

// Kinetic energy 0.5 * p' diag(inv_metric) p; velocity = inv_metric . p.
inline double kinetic(const std::vector<double>& p,
                      const std::vector<double>& inv_metric) {
  double k = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    k += 0.5 * inv_metric[i] * p[i] * p[i];
  return k;
}

inline double hamiltonian(const PhasePoint& z,
                          const std::vector<double>& inv_metric) {
  return -z.logp + kinetic(z.p, inv_metric);
}

inline void leapfrog(PhasePoint& z, double eps,
                     const std::vector<double>& inv_metric,
                     const Evaluator& eval) {
  const std::size_t d = z.q.size();
  for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  for (std::size_t i = 0; i < d; ++i) z.q[i] += eps * inv_metric[i] * z.p[i];
  eval(z.q, z.logp, z.grad);
  for (std::size_t i = 0; i < d; ++i) z.p[i] += 0.5 * eps * z.grad[i];
}

// rho . velocity > 0 at both ends of a trajectory segment.
inline bool no_uturn(const std::vector<double>& rho, const PhasePoint& back,
                     const PhasePoint& front,
                     const std::vector<double>& inv_metric) {
  double db = 0.0, df = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    db += rho[i] * inv_metric[i] * back.p[i];
    df += rho[i] * inv_metric[i] * front.p[i];
  }
  return db > 0.0 && df > 0.0;
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct Subtree {
  PhasePoint back;   // endpoint nearest the existing trajectory
  PhasePoint front;  // endpoint farthest along the integration direction
  PhasePoint proposal;
  std::vector<double> rho;
  double log_sum_weight = -std::numeric_limits<double>::infinity();
  double sum_accept = 0.0;
  long n_leapfrog = 0;
  bool divergent = false;
  bool uturn = false;

  bool valid() const { return !divergent && !uturn; }
};

// Build a balanced subtree of 2^depth leapfrog steps starting one step past
// `edge` in the direction of eps's sign.
inline Subtree build_tree(int depth, const PhasePoint& edge, double eps,
                          double h0, const std::vector<double>& inv_metric,
                          const Evaluator& eval, RngStream& rng) {
  if (depth == 0) {
    Subtree t;
    PhasePoint z = edge;
    leapfrog(z, eps, inv_metric, eval);
    t.n_leapfrog = 1;
    const double h = hamiltonian(z, inv_metric);
    const double dh = h - h0;  // energy error relative to the initial point
    if (!std::isfinite(dh) || dh > kDivergenceThreshold) {
      t.divergent = true;
      t.back = z;
      t.front = z;
      return t;
    }
    t.log_sum_weight = -dh;
    t.sum_accept = std::exp(std::min(0.0, -dh));
    t.back = z;
    t.front = z;
    t.proposal = z;
    t.rho = z.p;
    return t;
  }

  Subtree first = build_tree(depth - 1, edge, eps, h0, inv_metric, eval, rng);
  if (!first.valid()) return first;
  Subtree second =
      build_tree(depth - 1, first.front, eps, h0, inv_metric, eval, rng);

  Subtree t;
  t.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
  t.sum_accept = first.sum_accept + second.sum_accept;
  t.divergent = second.divergent;
  t.uturn = second.uturn;
  t.back = first.back;
  t.front = second.front;
  if (!second.valid()) return t;

  t.log_sum_weight = log_add_exp(first.log_sum_weight, second.log_sum_weight);
  t.proposal = (std::log(rng.uniform()) <
                second.log_sum_weight - t.log_sum_weight)
                   ? second.proposal
                   : first.proposal;
  t.rho.assign(first.rho.size(), 0.0);
  for (std::size_t i = 0; i < t.rho.size(); ++i)
    t.rho[i] = first.rho[i] + second.rho[i];
  if (!no_uturn(t.rho, t.back, t.front, inv_metric)) t.uturn = true;
  return t;
}

struct DrawResult {
  double accept_stat = 0.0;
  bool divergent = false;
};

// One full NUTS transition; z is updated in place.
inline DrawResult transition(PhasePoint& z, double eps, int max_depth,
                             const std::vector<double>& inv_metric,
                             const Evaluator& eval, RngStream& rng) {
  const std::size_t d = z.q.size();
  for (std::size_t i = 0; i < d; ++i)
    z.p[i] = rng.normal() / std::sqrt(inv_metric[i]);
  const double h0 = hamiltonian(z, inv_metric);

  PhasePoint z_minus = z, z_plus = z, proposal = z;
  std::vector<double> rho = z.p;
  double log_sum_weight = 0.0;  // the initial point carries weight exp(0)
  double sum_accept = 0.0;
  long n_leapfrog = 0;
  DrawResult result;

  for (int depth = 0; depth < max_depth; ++depth) {
    const bool forward = rng.uniform() < 0.5;
    const double dir_eps = forward ? eps : -eps;
    const PhasePoint& edge = forward ? z_plus : z_minus;
    Subtree sub =
        build_tree(depth, edge, dir_eps, h0, inv_metric, eval, rng);
    sum_accept += sub.sum_accept;
    n_leapfrog += sub.n_leapfrog;
    if (sub.divergent) result.divergent = true;
    if (!sub.valid()) break;

    if (std::log(rng.uniform()) < sub.log_sum_weight - log_sum_weight)
      proposal = sub.proposal;
    log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);
    if (forward)
      z_plus = sub.front;
    else
      z_minus = sub.front;
    for (std::size_t i = 0; i < d; ++i) rho[i] += sub.rho[i];
    if (!no_uturn(rho, z_minus, z_plus, inv_metric)) break;
  }

  z = proposal;
  result.accept_stat =
      n_leapfrog > 0 ? sum_accept / static_cast<double>(n_leapfrog) : 0.0;
  return result;
}

// Dual averaging of log(eps) toward the target acceptance statistic
// (gamma 0.05, t0 10, kappa 0.75).
struct DualAveraging {
  double target = 0.8;
  double mu = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  long counter = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    log_eps = std::log(eps);
    log_eps_bar = 0.0;
    h_bar = 0.0;
    counter = 0;
  }
  void update(double accept_stat) {
    constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;
    ++counter;
    const double m = static_cast<double>(counter);
    h_bar = (1.0 - 1.0 / (m + t0)) * h_bar +
            (target - std::min(1.0, accept_stat)) / (m + t0);
    log_eps = mu - std::sqrt(m) / gamma * h_bar;
    const double w = std::pow(m, -kappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }
  double eps() const { return std::exp(log_eps); }
  double eps_final() const { return std::exp(log_eps_bar); }
};

// Running variance (Welford) for the diagonal metric.
struct VarianceAccumulator {
  std::vector<double> mean, m2;
  long n = 0;

  void reset(std::size_t dim) {
    mean.assign(dim, 0.0);
    m2.assign(dim, 0.0);
    n = 0;
  }
  void add(const std::vector<double>& x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  // Regularized toward unit scale, as is standard for short windows.
  std::vector<double> regularized_variance() const {
    std::vector<double> v(mean.size(), 1.0);
    if (n < 2) return v;
    const double w = static_cast<double>(n) / (static_cast<double>(n) + 5.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double var = m2[i] / static_cast<double>(n - 1);
      v[i] = w * var + (1.0 - w) * 1e-3;
      if (!(v[i] > 0.0) || !std::isfinite(v[i])) v[i] = 1.0;
    }
    return v;
  }
};

inline double find_reasonable_epsilon(const PhasePoint& start,
                                      const std::vector<double>& inv_metric,
                                      const Evaluator& eval, RngStream& rng) {
  double eps = 1.0;
  PhasePoint z = start;
  for (std::size_t i = 0; i < z.q.size(); ++i)
    z.p[i] = rng.normal() / std::sqrt(inv_metric[i]);
  const double h0 = hamiltonian(z, inv_metric);

  auto accept_at = [&](double e) {
    PhasePoint trial = z;
    leapfrog(trial, e, inv_metric, eval);
    const double h = hamiltonian(trial, inv_metric);
    const double a = std::exp(h0 - h);
    return std::isfinite(a) ? a : 0.0;
  };

  double a = accept_at(eps);
  const bool grow = a > 0.5;
  for (int iter = 0; iter < 100; ++iter) {
    if (grow && a <= 0.5) break;
    if (!grow && a >= 0.5) break;
    eps *= grow ? 2.0 : 0.5;
    if (eps > 1e7 || eps < 1e-10) break;
    a = accept_at(eps);
  }
  return eps;
}

// Warmup schedule: a fast step-size-only opening, doubling slow windows that
// estimate the metric, and a fast closing buffer.
struct WarmupSchedule {
  long init_end = 0;   // [0, init_end): fast
  long slow_end = 0;   // [init_end, slow_end): windowed metric adaptation
  std::vector<long> window_ends;  // absolute iteration indices

  static WarmupSchedule plan(long warmup) {
    WarmupSchedule s;
    long init = 75, term = 50, base = 25;
    if (warmup < init + term + base) {
      init = std::max(1L, static_cast<long>(0.15 * warmup));
      term = std::max(1L, static_cast<long>(0.10 * warmup));
    }
    s.init_end = std::min(init, warmup);
    const long slow_total = std::max(0L, warmup - init - term);
    s.slow_end = s.init_end + slow_total;
    long pos = s.init_end, size = base;
    while (pos < s.slow_end) {
      long remaining = s.slow_end - pos;
      // Absorb the tail when the next doubled window would not fit.
      if (remaining < 2 * size || remaining < size) size = remaining;
      pos += size;
      s.window_ends.push_back(pos);
      size *= 2;
    }
    return s;
  }
};

}  // namespace nuts

struct ChainOutput {
  std::vector<std::vector<double>> draws;  // [iteration][sampled param]
  long divergences = 0;
  double step_size = 0.0;
  bool failed = false;
  std::string failure;
};

inline ChainOutput run_chain(const Model& model, const McmcConfig& cfg,
                             std::uint64_t chain_seed) {
  ChainOutput out;
  const std::size_t dim = model.dim();
  RngStream rng(chain_seed);
  nuts::Evaluator eval{&model};

  nuts::PhasePoint z;
  z.q.assign(dim, 0.0);
  z.p.assign(dim, 0.0);
  z.grad.assign(dim, 0.0);

  bool initialized = false;
  for (int attempt = 0; attempt < 100 && !initialized; ++attempt) {
    for (auto& qi : z.q) qi = rng.uniform(-2.0, 2.0);
    initialized = eval(z.q, z.logp, z.grad);
  }
  if (!initialized) {
    out.failed = true;
    out.failure = "no finite log density found in 100 initialization attempts";
    return out;
  }

  std::vector<double> inv_metric(dim, 1.0);
  nuts::DualAveraging da;
  da.target = cfg.target_accept;
  da.restart(nuts::find_reasonable_epsilon(z, inv_metric, eval, rng));

  const auto schedule = nuts::WarmupSchedule::plan(cfg.warmup_iterations);
  nuts::VarianceAccumulator acc;
  acc.reset(dim);
  std::size_t next_window = 0;

  for (long i = 0; i < cfg.warmup_iterations; ++i) {
    const auto res = nuts::transition(z, da.eps(), cfg.max_treedepth,
                                      inv_metric, eval, rng);
    da.update(res.accept_stat);
    const bool in_slow = i >= schedule.init_end && i < schedule.slow_end;
    if (in_slow) acc.add(z.q);
    if (next_window < schedule.window_ends.size() &&
        i + 1 == schedule.window_ends[next_window]) {
      inv_metric = acc.regularized_variance();
      acc.reset(dim);
      ++next_window;
      da.restart(nuts::find_reasonable_epsilon(z, inv_metric, eval, rng));
    }
  }

  const double eps = da.eps_final();
  out.step_size = eps;
  out.draws.reserve(cfg.sampling_iterations);
  for (long i = 0; i < cfg.sampling_iterations; ++i) {
    const auto res =
        nuts::transition(z, eps, cfg.max_treedepth, inv_metric, eval, rng);
    if (res.divergent) ++out.divergences;
    out.draws.push_back(z.q);
  }
  return out;
}

namespace detail {
inline constexpr std::uint64_t kChainSalt = 0x636861696e000000ull;  // "chain"
}

// Fit the model: serial chains on disjoint streams, merged by chain index.
inline PosteriorDraws fit(const Model& model, const McmcConfig& cfg) {
  cfg.check();
  if (model.dim() == 0)
    fail_validation("fit: every parameter is fixed; nothing to sample");

  std::vector<ChainOutput> chains;
  std::vector<std::string> failures;
  for (int c = 0; c < cfg.n_chains; ++c) {
    ChainOutput chain = run_chain(
        model, cfg, mix_seed(cfg.master_seed, detail::kChainSalt + c));
    if (chain.failed) {
      failures.push_back("chain " + std::to_string(c + 1) + ": " +
                         chain.failure);
      continue;
    }
    chains.push_back(std::move(chain));
  }
  if (chains.size() < 2) {
    std::string msg = chains.empty() ? "all chains failed:"
                                     : "fewer than 2 chains survived:";
    for (const auto& f : failures) msg += " [" + f + "]";
    fail_convergence(msg);
  }

  const ModelSpec& spec = model.spec();
  PosteriorDraws draws;
  draws.warmup_iterations = cfg.warmup_iterations;
  draws.sampling_iterations = cfg.sampling_iterations;
  draws.master_seed = cfg.master_seed;
  draws.chain_failures = failures;

  draws.names = {"mu", "tau", "omega"};
  draws.sampled = {!spec.prior_mu.is_fixed(), !spec.prior_tau.is_fixed(),
                   !spec.prior_omega.is_fixed()};
  for (const auto& n : model.beta_names()) {
    draws.names.push_back("beta[" + n + "]");
    draws.sampled.push_back(true);
  }

  const std::size_t n_params = draws.names.size();
  draws.values.assign(
      n_params, std::vector<std::vector<double>>(
                    chains.size(),
                    std::vector<double>(cfg.sampling_iterations, 0.0)));
  for (std::size_t c = 0; c < chains.size(); ++c) {
    draws.divergences.push_back(chains[c].divergences);
    draws.step_sizes.push_back(chains[c].step_size);
    for (std::size_t i = 0; i < chains[c].draws.size(); ++i) {
      const Params p = model.unpack(chains[c].draws[i]);
      draws.values[0][c][i] = p.mu;
      draws.values[1][c][i] = p.tau;
      draws.values[2][c][i] = p.omega;
      for (std::size_t bcol = 0; bcol < p.beta.size(); ++bcol)
        draws.values[3 + bcol][c][i] = p.beta[bcol];
    }
  }
  return draws;
}

// ---------------------------------------------------------------------------
// Draws on disk: CSV with columns (chain, iteration, parameter, value).

inline std::string draws_to_csv(const PosteriorDraws& draws) {
  csv::Writer w;
  w.row({"chain", "iteration", "parameter", "value"});
  for (std::size_t c = 0; c < draws.n_chains(); ++c)
    for (std::size_t i = 0; i < draws.n_iterations(); ++i)
      for (std::size_t p = 0; p < draws.n_params(); ++p)
        w.row({std::to_string(c + 1), std::to_string(i + 1), draws.names[p],
               fmt_full(draws.values[p][c][i])});
  return w.str();
}

}  // namespace livingmeta

#endif
