#ifndef LIVINGMETA_SUMMARY_HPP
#define LIVINGMETA_SUMMARY_HPP

#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "livingmeta/common.hpp"
#include "livingmeta/diagnostics.hpp"
#include "livingmeta/sampler.hpp"

// Posterior summaries: mean, median and equal-tailed 95% credible interval
// per parameter, annotated with the convergence diagnostics. Summaries are
// computed even when diagnostics fail; the failure is carried as a flag.

namespace livingmeta {

struct ParameterSummary {
  std::string name;
  bool sampled = true;
  double mean = 0.0;
  double median = 0.0;
  double cri_lo = 0.0;  // 2.5%
  double cri_hi = 0.0;  // 97.5%
  double rhat = 0.0;
  double bulk_ess = 0.0;
  double tail_ess = 0.0;
  bool diagnostics_defined = false;
  std::string diagnostics_note;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;
  bool diagnostics_pass = false;
  long total_divergences = 0;
  std::uint64_t master_seed = 0;
  int n_chains = 0;
  int warmup_iterations = 0;
  int sampling_iterations = 0;

  const ParameterSummary& for_parameter(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p;
    fail_validation("no summary for parameter '" + name + "'");
  }
};

inline PosteriorSummary summarize(const PosteriorDraws& draws) {
  const DiagnosticsReport diag = diagnostics(draws);
  PosteriorSummary out;
  out.diagnostics_pass = diag.pass;
  out.total_divergences = draws.total_divergences();
  out.master_seed = draws.master_seed;
  out.n_chains = static_cast<int>(draws.n_chains());
  out.warmup_iterations = draws.warmup_iterations;
  out.sampling_iterations = draws.sampling_iterations;

  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    ParameterSummary s;
    s.name = draws.names[p];
    s.sampled = draws.sampled[p];
    const std::vector<double> flat = draws.flat(p);
    s.mean = std::accumulate(flat.begin(), flat.end(), 0.0) /
             static_cast<double>(flat.size());
    s.median = quantile_type7(flat, 0.5);
    s.cri_lo = quantile_type7(flat, 0.025);
    s.cri_hi = quantile_type7(flat, 0.975);
    const auto& d = diag.parameters[p];
    s.diagnostics_defined = d.defined;
    s.diagnostics_note = d.reason;
    s.rhat = d.rhat;
    s.bulk_ess = d.bulk_ess;
    s.tail_ess = d.tail_ess;
    out.parameters.push_back(std::move(s));
  }
  return out;
}

inline double pooled_mean(const PosteriorDraws& draws) {
  const std::vector<double> mu = draws.flat(draws.index_of("mu"));
  return std::accumulate(mu.begin(), mu.end(), 0.0) /
         static_cast<double>(mu.size());
}

inline nlohmann::ordered_json summary_to_json(const PosteriorSummary& s) {
  nlohmann::ordered_json j;
  j["master_seed"] = s.master_seed;
  j["n_chains"] = s.n_chains;
  j["warmup_iterations"] = s.warmup_iterations;
  j["sampling_iterations"] = s.sampling_iterations;
  j["total_divergences"] = s.total_divergences;
  j["diagnostics_pass"] = s.diagnostics_pass;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& p : s.parameters) {
    nlohmann::ordered_json pj;
    pj["name"] = p.name;
    pj["sampled"] = p.sampled;
    pj["mean"] = p.mean;
    pj["median"] = p.median;
    pj["cri_lo"] = p.cri_lo;
    pj["cri_hi"] = p.cri_hi;
    pj["rhat"] = p.rhat;
    pj["bulk_ess"] = p.bulk_ess;
    pj["tail_ess"] = p.tail_ess;
    pj["diagnostics_defined"] = p.diagnostics_defined;
    pj["diagnostics_note"] = p.diagnostics_note;
    params.push_back(std::move(pj));
  }
  j["parameters"] = std::move(params);
  return j;
}

inline PosteriorSummary summary_from_json(const nlohmann::ordered_json& j) {
  PosteriorSummary s;
  s.master_seed = j.value("master_seed", std::uint64_t{0});
  s.n_chains = j.value("n_chains", 0);
  s.warmup_iterations = j.value("warmup_iterations", 0);
  s.sampling_iterations = j.value("sampling_iterations", 0);
  s.total_divergences = j.value("total_divergences", 0L);
  s.diagnostics_pass = j.value("diagnostics_pass", false);
  for (const auto& pj : j.value("parameters", nlohmann::ordered_json::array())) {
    ParameterSummary p;
    p.name = pj.value("name", "");
    p.sampled = pj.value("sampled", true);
    p.mean = pj.value("mean", 0.0);
    p.median = pj.value("median", 0.0);
    p.cri_lo = pj.value("cri_lo", 0.0);
    p.cri_hi = pj.value("cri_hi", 0.0);
    p.rhat = pj.value("rhat", 0.0);
    p.bulk_ess = pj.value("bulk_ess", 0.0);
    p.tail_ess = pj.value("tail_ess", 0.0);
    p.diagnostics_defined = pj.value("diagnostics_defined", false);
    p.diagnostics_note = pj.value("diagnostics_note", "");
    s.parameters.push_back(std::move(p));
  }
  return s;
}

// Markdown fragment for reports: one row per parameter.
inline std::string summary_markdown_table(const PosteriorSummary& s) {
  std::string out;
  out += "| parameter | mean | median | 95% CrI | R-hat | bulk ESS | tail ESS |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& p : s.parameters) {
    out += "| " + p.name + " | " + fmt_fixed(p.mean, 3) + " | " +
           fmt_fixed(p.median, 3) + " | [" + fmt_fixed(p.cri_lo, 3) + ", " +
           fmt_fixed(p.cri_hi, 3) + "] | ";
    if (p.diagnostics_defined)
      out += fmt_fixed(p.rhat, 4) + " | " + fmt_fixed(p.bulk_ess, 0) + " | " +
             fmt_fixed(p.tail_ess, 0) + " |\n";
    else
      out += "- | - | - |\n";
  }
  return out;
}

}  // namespace livingmeta

#endif
