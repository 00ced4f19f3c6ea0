#ifndef LIVINGMETA_EFFECTS_HPP
#define LIVINGMETA_EFFECTS_HPP

#include <cmath>
#include <string>

#include "livingmeta/common.hpp"

// Standardized mean differences with the small-sample correction applied
// (Hedges' g). Three extraction routes are supported: post-test means,
// gain scores standardized by the pre-test SD, and reported t/F statistics.
// All variance formulas follow the large-sample expressions for the
// two-group standardized mean difference.

namespace livingmeta {

enum class Derivation { posttest, gain_pretest_sd, from_t, from_F, study_pooled };

inline const char* to_string(Derivation d) {
  switch (d) {
    case Derivation::posttest: return "posttest";
    case Derivation::gain_pretest_sd: return "gain_pretest_sd";
    case Derivation::from_t: return "from_t";
    case Derivation::from_F: return "from_F";
    case Derivation::study_pooled: return "study_pooled";
  }
  return "?";
}

struct EffectEstimate {
  std::string effect_id;
  std::string study_id;
  double g = 0.0;
  double var_g = 0.0;
  std::string group_label;
  std::string outcome_label;
  int timepoint_index = 0;
  Derivation derivation = Derivation::posttest;
  bool oriented = false;

  double se_g() const { return std::sqrt(var_g); }
};

struct CorrectionFactor {
  int df = 0;
  double j = 0.0;
};

// J = 1 - 3/(4 df - 1); strictly increasing in df, -> 1 as df -> inf.
inline CorrectionFactor hedges_correction(int df) {
  if (df < 2) fail_validation("hedges_correction: df must be >= 2, got " +
                              std::to_string(df));
  return {df, 1.0 - 3.0 / (4.0 * static_cast<double>(df) - 1.0)};
}

struct ArmSummary {
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

namespace detail {

inline void check_arm(const ArmSummary& arm, const char* which) {
  if (arm.n < 2)
    fail_validation(std::string("effect input: arm '") + which +
                    "' needs n >= 2, got " + std::to_string(arm.n));
  if (!(arm.sd > 0.0))
    fail_validation(std::string("effect input: arm '") + which +
                    "' needs sd > 0");
}

inline double pooled_sd(double sd_a, int n_a, double sd_b, int n_b) {
  return std::sqrt(((n_a - 1) * sd_a * sd_a + (n_b - 1) * sd_b * sd_b) /
                   static_cast<double>(n_a + n_b - 2));
}

// var(d) for an independent-groups standardized difference.
inline double var_d_two_group(double d, int n_t, int n_c) {
  double nt = n_t, nc = n_c;
  return (nt + nc) / (nt * nc) + d * d / (2.0 * (nt + nc));
}

inline EffectEstimate correct_and_package(double d, double var_d, int df,
                                          Derivation how) {
  const double j = hedges_correction(df).j;
  EffectEstimate e;
  e.g = j * d;
  e.var_g = j * j * var_d;
  e.derivation = how;
  e.oriented = false;
  return e;
}

// Sign application without the double-orientation guard; orient() wraps it.
inline EffectEstimate apply_orientation(EffectEstimate e, bool flip) {
  if (flip) e.g = -e.g;
  return e;
}

}  // namespace detail

// d = (mean_t - mean_c) / sd_pooled, then corrected with J(n_t + n_c - 2).
inline EffectEstimate g_from_posttest(const ArmSummary& treatment,
                                      const ArmSummary& control) {
  detail::check_arm(treatment, "treatment");
  detail::check_arm(control, "control");
  const double sp =
      detail::pooled_sd(treatment.sd, treatment.n, control.sd, control.n);
  const double d = (treatment.mean - control.mean) / sp;
  const double var_d = detail::var_d_two_group(d, treatment.n, control.n);
  return detail::correct_and_package(d, var_d, treatment.n + control.n - 2,
                                     Derivation::posttest);
}

struct GainArm {
  int n = 0;
  double pre_mean = 0.0;
  double post_mean = 0.0;
  double sd_pre = 0.0;
};

// Difference in gains standardized by the df-weight-pooled pre-test SD.
// var(d) carries the 2(1 - r) factor from differencing correlated pre/post
// scores; r defaults to the within-group correlation used in the sampling
// covariance (0.7) and can be overridden per effect.
inline EffectEstimate g_from_gains(const GainArm& treatment,
                                   const GainArm& control,
                                   double r_prepost = 0.7,
                                   bool same_scale = true) {
  if (!same_scale)
    fail_validation("g_from_gains: pre and post scores are not on the same "
                    "scale; use the post-test route instead");
  if (treatment.n < 2 || control.n < 2)
    fail_validation("g_from_gains: both arms need n >= 2");
  if (!(treatment.sd_pre > 0.0) || !(control.sd_pre > 0.0))
    fail_validation("g_from_gains: pre-test sd must be > 0");
  if (r_prepost < -1.0 || r_prepost > 1.0)
    fail_validation("g_from_gains: r_prepost outside [-1, 1]");

  const double sp = detail::pooled_sd(treatment.sd_pre, treatment.n,
                                      control.sd_pre, control.n);
  const double gain_t = treatment.post_mean - treatment.pre_mean;
  const double gain_c = control.post_mean - control.pre_mean;
  const double d = (gain_t - gain_c) / sp;
  const double nt = treatment.n, nc = control.n;
  const double var_d =
      2.0 * (1.0 - r_prepost) * (nt + nc) / (nt * nc) + d * d / (2.0 * (nt + nc));
  return detail::correct_and_package(d, var_d, treatment.n + control.n - 2,
                                     Derivation::gain_pretest_sd);
}

// d = t * sqrt(1/n_t + 1/n_c). F values are accepted only with one numerator
// df (t = sqrt(F), sign supplied by the caller); anything else has no valid
// d conversion and is refused.
inline EffectEstimate g_from_t(double t, int n_t, int n_c) {
  if (n_t < 2 || n_c < 2)
    fail_validation("g_from_t: both arms need n >= 2");
  const double d = t * std::sqrt(1.0 / n_t + 1.0 / n_c);
  const double var_d = detail::var_d_two_group(d, n_t, n_c);
  return detail::correct_and_package(d, var_d, n_t + n_c - 2,
                                     Derivation::from_t);
}

inline EffectEstimate g_from_f(double f, int numerator_df, bool positive,
                               int n_t, int n_c) {
  if (f < 0.0) fail_validation("g_from_f: negative F statistic");
  if (numerator_df != 1)
    fail_validation("g_from_f: only 1-df F statistics convert to d; got " +
                    std::to_string(numerator_df) + " numerator df");
  double t = std::sqrt(f);
  if (!positive) t = -t;
  EffectEstimate e = g_from_t(t, n_t, n_c);
  e.derivation = Derivation::from_F;
  return e;
}

// Positive g must mean the AI-supported arm did better. The sign is flipped
// iff the AI arm entered the difference as the subtrahend. Orientation is a
// one-shot operation; var_g is unchanged.
inline EffectEstimate orient(const EffectEstimate& effect,
                             bool ai_arm_is_first) {
  if (effect.oriented)
    fail_validation("orient: effect '" + effect.effect_id +
                    "' is already oriented");
  EffectEstimate out = detail::apply_orientation(effect, !ai_arm_is_first);
  out.oriented = true;
  return out;
}

}  // namespace livingmeta

#endif
