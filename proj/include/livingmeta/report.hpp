#ifndef LIVINGMETA_REPORT_HPP
#define LIVINGMETA_REPORT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/ledger.hpp"
#include "livingmeta/living.hpp"

// Report assembly and rendering. Every number in the rendered document comes
// from the ledger or a stored artifact; rendering itself computes nothing.

namespace livingmeta {

struct MethodsInfo {
  double rho = 0.7;
  double phi = 0.8;
  std::string prior_mu;
  std::string prior_tau;
  std::string prior_omega;
  int n_chains = 4;
  int warmup = 1000;
  int sampling = 3000;
  std::uint64_t seed = 0;
};

struct SensitivityEntry {
  std::string suite;  // "prior" or "grid"
  std::string name;   // prior variant
  double rho = 0.0;
  double phi = 0.0;
  bool ok = false;
  double pooled_mean = 0.0;
  double cri_lo = 0.0;
  double cri_hi = 0.0;
  std::string message;
};

struct ReportBundle {
  std::string version_label;
  VersionStatus status = VersionStatus::ongoing;
  Date search_date;
  Date next_search_date;
  Date next_version_date;
  PrismaFlow prisma;
  std::vector<StudyRecord> studies;
  std::optional<ResultsSnapshot> results;
  MethodsInfo methods;
  std::vector<SensitivityEntry> sensitivity;
  double prior_spread = 0.0;
  double grid_spread = 0.0;
  std::vector<GateResult> gates;
  std::vector<std::string> changelog;
  std::string trajectory_ref;  // artifact file name; empty when absent
  long trajectory_points = 0;
};

namespace detail {

inline double field_or_zero(const std::vector<std::string>& row, int col) {
  if (col < 0 || row[col].empty()) return 0.0;
  return std::strtod(row[col].c_str(), nullptr);
}

inline std::vector<SensitivityEntry> parse_sensitivity_csv(
    const std::string& path) {
  csv::Table t = csv::read_file(path);
  const int c_suite = t.column("suite"), c_name = t.column("name");
  const int c_rho = t.column("rho"), c_phi = t.column("phi");
  const int c_status = t.column("status"), c_mean = t.column("pooled_mean");
  const int c_lo = t.column("cri_lo"), c_hi = t.column("cri_hi");
  const int c_msg = t.column("message");
  if (c_suite < 0 || c_status < 0 || c_mean < 0)
    fail_validation("sensitivity artifact '" + path +
                    "' lacks suite/status/pooled_mean columns");
  std::vector<SensitivityEntry> out;
  for (const auto& row : t.rows) {
    SensitivityEntry e;
    e.suite = row[c_suite];
    if (c_name >= 0) e.name = row[c_name];
    e.rho = field_or_zero(row, c_rho);
    e.phi = field_or_zero(row, c_phi);
    e.ok = row[c_status] == "ok";
    e.pooled_mean = field_or_zero(row, c_mean);
    e.cri_lo = field_or_zero(row, c_lo);
    e.cri_hi = field_or_zero(row, c_hi);
    if (c_msg >= 0) e.message = row[c_msg];
    out.push_back(std::move(e));
  }
  return out;
}

inline double suite_spread(const std::vector<SensitivityEntry>& entries,
                           const std::string& suite) {
  bool any = false;
  double lo = 0.0, hi = 0.0;
  for (const auto& e : entries) {
    if (e.suite != suite || !e.ok) continue;
    if (!any) {
      lo = hi = e.pooled_mean;
      any = true;
    } else {
      lo = std::min(lo, e.pooled_mean);
      hi = std::max(hi, e.pooled_mean);
    }
  }
  return any ? hi - lo : 0.0;
}

inline std::string join(const std::vector<std::string>& parts,
                        const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i)
    out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace detail

// Collect everything the renderer needs. The ledger's seal must verify; the
// sensitivity and trajectory artifacts are read from the given paths when
// they exist.
inline ReportBundle assemble_bundle(const Ledger& ledger,
                                    const MethodsInfo& methods,
                                    const std::string& sensitivity_csv,
                                    const std::string& trajectory_csv) {
  verify_seal(ledger);
  ReportBundle b;
  b.version_label = ledger.version.version_label;
  b.status = ledger.version.status;
  b.search_date = ledger.version.search_date;
  b.next_search_date = ledger.version.next_search_date;
  b.next_version_date = ledger.version.next_version_date;
  b.prisma = ledger.prisma;
  b.studies = ledger.studies;
  b.results = ledger.results;
  b.methods = methods;
  b.changelog = ledger.version.changelog;
  b.gates = gate_all(ledger);

  namespace fs = std::filesystem;
  if (!sensitivity_csv.empty() && fs::exists(sensitivity_csv)) {
    b.sensitivity = detail::parse_sensitivity_csv(sensitivity_csv);
    b.prior_spread = detail::suite_spread(b.sensitivity, "prior");
    b.grid_spread = detail::suite_spread(b.sensitivity, "grid");
  }
  if (!trajectory_csv.empty() && fs::exists(trajectory_csv)) {
    b.trajectory_ref = fs::path(trajectory_csv).filename().string();
    b.trajectory_points =
        static_cast<long>(csv::read_file(trajectory_csv).rows.size());
  }
  return b;
}

// Deterministic Markdown document. Refuses to render when a mandatory
// section has no backing data, listing every gap at once.
inline std::string render_report(const ReportBundle& b) {
  std::vector<std::string> gaps;
  if (b.version_label.empty()) gaps.push_back("version label");
  if (!b.search_date.valid()) gaps.push_back("search date");
  if (b.prisma.identified <= 0) gaps.push_back("PRISMA counts");
  if (b.studies.empty()) gaps.push_back("study table");
  if (!b.results.has_value()) gaps.push_back("pooled results");
  if (b.methods.prior_mu.empty()) gaps.push_back("methods priors");
  if (b.sensitivity.empty()) gaps.push_back("sensitivity tables");
  if (b.gates.empty()) gaps.push_back("gate table");
  if (b.changelog.empty()) gaps.push_back("changes section");
  if (!gaps.empty())
    fail_validation("report refused; missing: " + detail::join(gaps, ", "));

  std::string md;
  md += "# Living Synthesis Report — " + b.version_label + "\n\n";

  md += "## Living status\n\n";
  md += "- Status: " +
        std::string(b.status == VersionStatus::ongoing ? "Ongoing"
                                                       : "Retired") +
        "\n";
  md += "- Literature search current as of: " + b.search_date.iso() + "\n";
  if (b.next_search_date.valid())
    md += "- Next search: " + b.next_search_date.iso() + "\n";
  if (b.next_version_date.valid())
    md += "- Next version: " + b.next_version_date.iso() + "\n";
  md += "\n";

  md += "## Citation guidance\n\n";
  md += "When citing these results, include the version label (" +
        b.version_label +
        "). Each scheduled update is released under a new label; the label "
        "identifies exactly which evidence base a citation refers to.\n\n";

  md += "## Methods parameters\n\n";
  md += "- Sampling correlations: rho = " + fmt_fixed(b.methods.rho, 2) +
        " (shared group or outcome), phi = " + fmt_fixed(b.methods.phi, 2) +
        " (per unit timepoint distance)\n";
  md += "- Priors: mu ~ " + b.methods.prior_mu + "; tau ~ " +
        b.methods.prior_tau + "; omega ~ " + b.methods.prior_omega + "\n";
  md += "- MCMC: " + std::to_string(b.methods.n_chains) + " chains x (" +
        std::to_string(b.methods.warmup) + " warmup + " +
        std::to_string(b.methods.sampling) + " sampling), master seed " +
        std::to_string(b.methods.seed) + "\n\n";

  if (!b.results->diagnostics_pass) {
    md += "> **Convergence warning:** sampler diagnostics did not meet the "
          "R-hat <= 1.01 / bulk ESS >= 400 thresholds for every parameter. "
          "Interpret all posterior summaries below with caution.\n\n";
  }

  md += "## PRISMA flow\n\n";
  md += "| stage | count |\n|---|---|\n";
  md += "| records identified | " + std::to_string(b.prisma.identified) + " |\n";
  md += "| records screened | " + std::to_string(b.prisma.screened) + " |\n";
  md += "| reports sought for retrieval | " +
        std::to_string(b.prisma.sought_fulltext) + " |\n";
  md += "| reports not retrieved | " + std::to_string(b.prisma.not_retrieved) +
        " |\n";
  md += "| reports assessed for eligibility | " +
        std::to_string(b.prisma.assessed) + " |\n";
  for (const auto& [reason, count] : b.prisma.excluded_with_reasons)
    md += "| excluded: " + reason + " | " + std::to_string(count) + " |\n";
  md += "| studies included | " + std::to_string(b.prisma.included_studies) +
        " |\n";
  md += "| reports included | " + std::to_string(b.prisma.included_reports) +
        " |\n\n";

  md += "## Included studies\n\n";
  md += "| study | published | format | n | ISCED | content | AI purpose | "
        "AI role | modification | effects | pooled g |\n";
  md += "|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& s : b.studies) {
    std::vector<std::string> mods;
    for (int m : s.ai_system_modification) mods.push_back(std::to_string(m));
    md += "| " + s.citation + " | " + s.publication_date.iso() + " | " +
          to_string(s.publication_format) + " | " +
          std::to_string(s.n_participants) + " | " +
          detail::join(s.isced_levels, "; ") + " | " +
          detail::join(s.content_areas, "; ") + " | " +
          detail::join(s.ai_purpose, "; ") + " | " +
          detail::join(s.ai_role, "; ") + " | " + detail::join(mods, "; ") +
          " | " + std::to_string(s.effects.size()) + " | " +
          fmt_fixed(s.pooled_g, 2) + " |\n";
  }
  md += "\n";

  const ResultsSnapshot& r = *b.results;
  md += "## Pooled results\n\n";
  md += "- Pooled effect (Hedges' g): posterior mean " +
        fmt_fixed(r.pooled_mean, 2) + ", median " +
        fmt_fixed(r.pooled_median, 2) + ", 95% CrI [" +
        fmt_fixed(r.cri_lo, 2) + ", " + fmt_fixed(r.cri_hi, 2) + "]\n";
  md += "- Heterogeneity (posterior medians): between-study tau = " +
        fmt_fixed(r.tau_median, 2) + ", within-study omega = " +
        fmt_fixed(r.omega_median, 2) + "\n";
  md += "- Effect sizes analyzed: " + std::to_string(r.n_effects_analyzed) +
        "\n";
  md += std::string("- Convergence diagnostics: ") +
        (r.diagnostics_pass ? "pass" : "FAIL") + "\n\n";

  md += "## Sensitivity\n\n";
  md += "Prior variants (pooled-mean spread " + fmt_fixed(b.prior_spread, 3) +
        "):\n\n";
  md += "| variant | pooled mean | 95% CrI | note |\n|---|---|---|---|\n";
  for (const auto& e : b.sensitivity) {
    if (e.suite != "prior") continue;
    if (e.ok) {
      md += "| " + e.name + " | " + fmt_fixed(e.pooled_mean, 3) + " | [" +
            fmt_fixed(e.cri_lo, 2) + ", " + fmt_fixed(e.cri_hi, 2) +
            "] | |\n";
    } else {
      md += "| " + e.name + " | - | - | " + e.message + " |\n";
    }
  }
  md += "\nCorrelation grid (pooled-mean spread " +
        fmt_fixed(b.grid_spread, 3) + "):\n\n";
  md += "| rho | phi | pooled mean |\n|---|---|---|\n";
  for (const auto& e : b.sensitivity) {
    if (e.suite != "grid") continue;
    md += "| " + fmt_fixed(e.rho, 2) + " | " + fmt_fixed(e.phi, 2) + " | " +
          (e.ok ? fmt_fixed(e.pooled_mean, 3) : "failed: " + e.message) +
          " |\n";
  }
  md += "\n";

  md += "## Moderator gates\n\n";
  md += "| moderator | kind | status | detail |\n|---|---|---|---|\n";
  for (const auto& g : b.gates) {
    std::string note;
    if (g.kind == FieldKind::continuous) {
      note = std::to_string(g.study_count) + " studies coded";
    } else {
      std::vector<std::string> parts;
      for (const auto& lc : g.level_counts)
        parts.push_back(lc.level + "=" + std::to_string(lc.count));
      note = detail::join(parts, ", ");
    }
    if (!g.eligible) note += "; needs " + g.deficit;
    md += "| " + g.moderator_id + " | " +
          (g.kind == FieldKind::categorical ? "categorical" : "continuous") +
          " | " + (g.eligible ? "eligible" : "not yet analyzed") + " | " +
          note + " |\n";
  }
  md += "\n";

  md += "## Changes to the previous version\n\n";
  for (const auto& line : b.changelog) md += line + "\n";
  md += "\n";

  if (!b.trajectory_ref.empty()) {
    md += "## Data files\n\n";
    md += "- Cumulative evidence trajectory: " + b.trajectory_ref + " (" +
          std::to_string(b.trajectory_points) + " accrual points)\n";
  }
  return md;
}

inline json prisma_json(const PrismaFlow& p) {
  json j;
  j["identified"] = p.identified;
  j["screened"] = p.screened;
  j["sought_fulltext"] = p.sought_fulltext;
  j["not_retrieved"] = p.not_retrieved;
  j["assessed"] = p.assessed;
  json ex = json::array();
  for (const auto& [reason, count] : p.excluded_with_reasons) {
    json e;
    e["reason"] = reason;
    e["count"] = count;
    ex.push_back(e);
  }
  j["excluded"] = ex;
  j["included_studies"] = p.included_studies;
  j["included_reports"] = p.included_reports;
  return j;
}

}  // namespace livingmeta

#endif
