#ifndef LIVINGMETA_COVARIANCE_HPP
#define LIVINGMETA_COVARIANCE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/effects.hpp"
#include "livingmeta/linalg.hpp"

// Sampling-error covariance across effects. Within a study, two effects
// correlate through shared measurement groups (rho) and repeated timepoints
// (phi); across studies the covariance is exactly zero, so V is block
// diagonal by study and is stored that way.

namespace livingmeta {

struct CovarianceSpec {
  double rho = 0.7;
  double phi = 0.8;

  void check() const {
    if (!(rho >= 0.0 && rho < 1.0))
      fail_validation("covariance spec: rho must be in [0, 1), got " +
                      fmt_full(rho));
    if (!(phi >= 0.0 && phi < 1.0))
      fail_validation("covariance spec: phi must be in [0, 1), got " +
                      fmt_full(phi));
  }
};

struct StudyBlock {
  std::string study_id;
  std::vector<std::size_t> effect_indices;  // into the effect order below
  linalg::Matrix v;                         // dense symmetric block
};

struct SamplingCovariance {
  std::vector<EffectEstimate> effects;  // defines row/column order
  std::vector<StudyBlock> blocks;

  std::size_t dimension() const { return effects.size(); }

  linalg::Matrix dense() const {
    linalg::Matrix m(dimension(), dimension());
    for (const auto& b : blocks)
      for (std::size_t i = 0; i < b.effect_indices.size(); ++i)
        for (std::size_t j = 0; j < b.effect_indices.size(); ++j)
          m(b.effect_indices[i], b.effect_indices[j]) = b.v(i, j);
    return m;
  }

  // Sum of all entries of the inverse of a study's block: the effective
  // sampling precision of that study, accounting for within-study dependence.
  double study_precision(const std::string& study_id) const {
    for (const auto& b : blocks) {
      if (b.study_id != study_id) continue;
      auto l = linalg::cholesky_lower(b.v);
      if (!l)
        fail_validation("covariance block for study '" + study_id +
                        "' is not positive definite");
      linalg::Matrix inv = linalg::cholesky_inverse(*l);
      double s = 0.0;
      for (std::size_t i = 0; i < inv.rows(); ++i)
        for (std::size_t j = 0; j < inv.cols(); ++j) s += inv(i, j);
      return s;
    }
    fail_validation("study_precision: unknown study '" + study_id + "'");
  }
};

namespace detail {

// Correlation implied between two distinct effects of the same study:
//   rho  when the (group, outcome) labels differ,
//   phi^L across a timepoint lag of L,
// composed multiplicatively. Same labels at the same timepoint would be the
// same measurement twice; build_vcov rejects that upstream.
inline double implied_correlation(const EffectEstimate& a,
                                  const EffectEstimate& b,
                                  const CovarianceSpec& spec) {
  const int lag = std::abs(a.timepoint_index - b.timepoint_index);
  const bool labels_differ =
      a.group_label != b.group_label || a.outcome_label != b.outcome_label;
  double r = 1.0;
  if (labels_differ) r *= spec.rho;
  if (lag > 0) r *= std::pow(spec.phi, lag);
  return r;
}

}  // namespace detail

inline SamplingCovariance build_vcov(const std::vector<EffectEstimate>& effects,
                                     const CovarianceSpec& spec) {
  spec.check();

  std::map<std::string, std::vector<std::size_t>> by_study;
  for (std::size_t i = 0; i < effects.size(); ++i) {
    const auto& e = effects[i];
    if (!e.oriented)
      fail_validation("build_vcov: effect '" + e.effect_id +
                      "' is not oriented");
    if (!(e.var_g > 0.0))
      fail_validation("build_vcov: effect '" + e.effect_id +
                      "' has non-positive sampling variance");
    if (e.timepoint_index < 0)
      fail_validation("build_vcov: effect '" + e.effect_id +
                      "' has negative timepoint index");
    by_study[e.study_id].push_back(i);
  }

  SamplingCovariance cov;
  cov.effects = effects;
  // Block order follows first appearance in the effect list so the dense
  // matrix is permutation-stable with respect to its input.
  std::vector<std::string> order;
  for (const auto& e : effects) {
    if (by_study.count(e.study_id) && by_study[e.study_id].front() ==
                                          (&e - effects.data()))
      order.push_back(e.study_id);
  }

  for (const auto& study_id : order) {
    const auto& idx = by_study[study_id];
    if (idx.size() > 1) {
      for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
          const auto& ea = effects[idx[a]];
          const auto& eb = effects[idx[b]];
          if (ea.group_label.empty() || eb.group_label.empty() ||
              ea.outcome_label.empty() || eb.outcome_label.empty())
            fail_validation("build_vcov: study '" + study_id +
                            "' has multiple effects but missing group/outcome "
                            "labels");
          if (ea.group_label == eb.group_label &&
              ea.outcome_label == eb.outcome_label &&
              ea.timepoint_index == eb.timepoint_index)
            fail_validation("build_vcov: effects '" + ea.effect_id + "' and '" +
                            eb.effect_id + "' in study '" + study_id +
                            "' share group, outcome and timepoint");
        }
    }

    StudyBlock block;
    block.study_id = study_id;
    block.effect_indices = idx;
    block.v = linalg::Matrix(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const auto& ea = effects[idx[a]];
      block.v(a, a) = ea.var_g;
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const auto& eb = effects[idx[b]];
        const double c =
            detail::implied_correlation(ea, eb, spec) * ea.se_g() * eb.se_g();
        block.v(a, b) = c;
        block.v(b, a) = c;
      }
    }
    if (!linalg::cholesky_lower(block.v))
      fail_validation("build_vcov: covariance block for study '" + study_id +
                      "' is not positive definite");
    cov.blocks.push_back(std::move(block));
  }
  return cov;
}

// Lower Cholesky factor of the full matrix, assembled from the per-study
// factors. Non-PD input is an explicit error naming the offending block;
// nothing is ever regularized.
inline linalg::Matrix cholesky(const SamplingCovariance& cov) {
  linalg::Matrix l(cov.dimension(), cov.dimension());
  for (const auto& b : cov.blocks) {
    auto lb = linalg::cholesky_lower(b.v);
    if (!lb)
      fail_validation("cholesky: covariance block for study '" + b.study_id +
                      "' is not positive definite");
    for (std::size_t i = 0; i < b.effect_indices.size(); ++i)
      for (std::size_t j = 0; j <= i; ++j)
        l(b.effect_indices[i], b.effect_indices[j]) = (*lb)(i, j);
  }
  return l;
}

inline std::string vcov_to_csv(const SamplingCovariance& cov) {
  csv::Writer w;
  std::vector<std::string> header{"effect_id"};
  for (const auto& e : cov.effects) header.push_back(e.effect_id);
  w.row(header);
  linalg::Matrix m = cov.dense();
  for (std::size_t i = 0; i < cov.dimension(); ++i) {
    std::vector<std::string> row{cov.effects[i].effect_id};
    for (std::size_t j = 0; j < cov.dimension(); ++j)
      row.push_back(fmt_full(m(i, j)));
    w.row(row);
  }
  return w.str();
}

// One sensitivity cell: the pooled posterior mean obtained under a given
// (rho, phi), or a failure note when that cell could not be fit.
struct GridCell {
  double rho = 0.0;
  double phi = 0.0;
  bool ok = false;
  double pooled_mean = 0.0;
  std::string error;
};

struct GridResult {
  std::vector<GridCell> cells;
  double min_pooled = 0.0;
  double max_pooled = 0.0;

  double spread() const { return max_pooled - min_pooled; }
};

// fit_fn receives the covariance for one grid cell plus a cell-specific salt
// for seed derivation and returns the pooled posterior mean. Failing cells
// are recorded and the sweep continues.
inline GridResult rho_phi_grid(
    const std::vector<EffectEstimate>& effects,
    const std::vector<double>& rho_values, const std::vector<double>& phi_values,
    const std::function<double(const SamplingCovariance&, std::uint64_t)>& fit_fn) {
  GridResult out;
  bool any = false;
  std::uint64_t cell_index = 0;
  for (double rho : rho_values) {
    for (double phi : phi_values) {
      if (rho < 0.0 || rho > 0.9 || phi < 0.0 || phi > 0.9)
        fail_validation("rho_phi_grid: grid values must lie in [0, 0.9]");
      GridCell cell;
      cell.rho = rho;
      cell.phi = phi;
      try {
        SamplingCovariance v = build_vcov(effects, CovarianceSpec{rho, phi});
        cell.pooled_mean = fit_fn(v, cell_index);
        cell.ok = true;
        if (!any || cell.pooled_mean < out.min_pooled)
          out.min_pooled = cell.pooled_mean;
        if (!any || cell.pooled_mean > out.max_pooled)
          out.max_pooled = cell.pooled_mean;
        any = true;
      } catch (const Error& err) {
        cell.error = err.what();
      }
      out.cells.push_back(cell);
      ++cell_index;
    }
  }
  return out;
}

}  // namespace livingmeta

#endif
