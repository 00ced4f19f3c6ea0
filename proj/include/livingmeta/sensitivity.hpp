#ifndef LIVINGMETA_SENSITIVITY_HPP
#define LIVINGMETA_SENSITIVITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/covariance.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/model.hpp"
#include "livingmeta/rng.hpp"
#include "livingmeta/sampler.hpp"
#include "livingmeta/summary.hpp"

// One-factor-at-a-time robustness checks: refit under alternative priors and
// over a grid of assumed correlation parameters, then compare pooled means.

namespace livingmeta {

struct PriorVariant {
  std::string name;
  ModelSpec spec;
};

// The default suite perturbs one prior per variant relative to the baseline.
inline std::vector<PriorVariant> default_prior_variants(const ModelSpec& base) {
  std::vector<PriorVariant> out;
  out.push_back({"default", base});

  ModelSpec narrow = base;
  narrow.prior_mu = PriorSpec::normal(0.0, 0.5);
  out.push_back({"mu_narrow", narrow});

  ModelSpec wide = base;
  wide.prior_mu = PriorSpec::normal(0.0, 2.0);
  out.push_back({"mu_wide", wide});

  ModelSpec hn = base;
  hn.prior_tau = PriorSpec::half_normal(1.0);
  hn.prior_omega = PriorSpec::half_normal(1.0);
  out.push_back({"het_half_normal", hn});

  ModelSpec ht = base;
  ht.prior_tau = PriorSpec::half_student_t(3.0, 1.0);
  ht.prior_omega = PriorSpec::half_student_t(3.0, 1.0);
  out.push_back({"het_half_student_t", ht});
  return out;
}

struct PriorFitResult {
  std::string variant;
  bool ok = false;
  std::string message;
  double pooled_mean = 0.0;
  double pooled_median = 0.0;
  double cri_lo = 0.0;
  double cri_hi = 0.0;
  bool diagnostics_pass = false;
};

struct PriorSensitivity {
  std::vector<PriorFitResult> results;

  double spread() const {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& r : results) {
      if (!r.ok) continue;
      if (!any) {
        lo = hi = r.pooled_mean;
        any = true;
      } else {
        lo = std::min(lo, r.pooled_mean);
        hi = std::max(hi, r.pooled_mean);
      }
    }
    return any ? hi - lo : 0.0;
  }
};

// Refit under each variant with the same data, covariance, and seed. A
// variant that fails to fit is recorded and the suite continues.
inline PriorSensitivity prior_sensitivity(const SamplingCovariance& vcov,
                                          const std::vector<PriorVariant>& variants,
                                          const McmcConfig& cfg) {
  PriorSensitivity out;
  for (const auto& v : variants) {
    PriorFitResult r;
    r.variant = v.name;
    try {
      Model model(vcov, v.spec);
      PosteriorDraws draws = fit(model, cfg);
      PosteriorSummary s = summarize(draws);
      const ParameterSummary& mu = s.for_parameter("mu");
      r.ok = true;
      r.pooled_mean = mu.mean;
      r.pooled_median = mu.median;
      r.cri_lo = mu.cri_lo;
      r.cri_hi = mu.cri_hi;
      r.diagnostics_pass = s.diagnostics_pass;
    } catch (const Error& e) {
      r.ok = false;
      r.message = e.what();
    }
    out.results.push_back(std::move(r));
  }
  return out;
}

inline std::string prior_sensitivity_to_csv(const PriorSensitivity& ps) {
  csv::Writer w;
  w.row({"variant", "status", "pooled_mean", "pooled_median", "cri_lo",
         "cri_hi", "diagnostics_pass", "message"});
  for (const auto& r : ps.results) {
    if (r.ok) {
      w.row({r.variant, "ok", fmt_full(r.pooled_mean), fmt_full(r.pooled_median),
             fmt_full(r.cri_lo), fmt_full(r.cri_hi),
             r.diagnostics_pass ? "true" : "false", ""});
    } else {
      w.row({r.variant, "failed", "", "", "", "", "", r.message});
    }
  }
  return w.str();
}

// Grid sensitivity over the assumed correlations: rebuild the covariance at
// each (rho, phi) and refit with the same seed.
inline GridResult rho_phi_sensitivity(const std::vector<EffectEstimate>& effects,
                                      const std::vector<double>& rho_values,
                                      const std::vector<double>& phi_values,
                                      const ModelSpec& spec,
                                      const McmcConfig& cfg) {
  return rho_phi_grid(effects, rho_values, phi_values,
                      [&](const SamplingCovariance& vcov, std::uint64_t salt) {
                        Model model(vcov, spec);
                        McmcConfig c = cfg;
                        c.master_seed = mix_seed(cfg.master_seed, salt);
                        PosteriorDraws draws = fit(model, c);
                        return pooled_mean(draws);
                      });
}

// Both suites in one artifact: suite = "prior" rows keyed by variant name,
// suite = "grid" rows keyed by (rho, phi).
inline std::string sensitivity_to_csv(const PriorSensitivity& ps,
                                      const GridResult& grid) {
  csv::Writer w;
  w.row({"suite", "name", "rho", "phi", "status", "pooled_mean",
         "pooled_median", "cri_lo", "cri_hi", "diagnostics_pass", "message"});
  for (const auto& r : ps.results) {
    if (r.ok) {
      w.row({"prior", r.variant, "", "", "ok", fmt_full(r.pooled_mean),
             fmt_full(r.pooled_median), fmt_full(r.cri_lo), fmt_full(r.cri_hi),
             r.diagnostics_pass ? "true" : "false", ""});
    } else {
      w.row({"prior", r.variant, "", "", "failed", "", "", "", "", "",
             r.message});
    }
  }
  for (const auto& cell : grid.cells) {
    if (cell.ok) {
      w.row({"grid", "", fmt_full(cell.rho), fmt_full(cell.phi), "ok",
             fmt_full(cell.pooled_mean), "", "", "", "", ""});
    } else {
      w.row({"grid", "", fmt_full(cell.rho), fmt_full(cell.phi), "failed", "",
             "", "", "", "", cell.error});
    }
  }
  return w.str();
}

inline std::string grid_to_csv(const GridResult& grid) {
  csv::Writer w;
  w.row({"rho", "phi", "status", "pooled_mean", "message"});
  for (const auto& cell : grid.cells) {
    if (cell.ok) {
      w.row({fmt_full(cell.rho), fmt_full(cell.phi), "ok",
             fmt_full(cell.pooled_mean), ""});
    } else {
      w.row({fmt_full(cell.rho), fmt_full(cell.phi), "failed", "", cell.error});
    }
  }
  return w.str();
}

}  // namespace livingmeta

#endif
