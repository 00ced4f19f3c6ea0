// Command-line front end: each subcommand maps 1:1 to a library operation
// and writes its artifacts under --out. Exit codes: 0 success, 1 usage,
// 2 validation, 3 convergence, 4 integrity.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "livingmeta/config.hpp"
#include "livingmeta/covariance.hpp"
#include "livingmeta/effects.hpp"
#include "livingmeta/ledger.hpp"
#include "livingmeta/living.hpp"
#include "livingmeta/model.hpp"
#include "livingmeta/report.hpp"
#include "livingmeta/sampler.hpp"
#include "livingmeta/sensitivity.hpp"
#include "livingmeta/sha256.hpp"
#include "livingmeta/summary.hpp"

namespace lm = livingmeta;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
  std::string ledger_path;
  std::uint64_t seed = 42;
  double rho = 0.7;
  double phi = 0.8;
  std::string out_dir = ".";
  std::string config_path;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) lm::fail_validation("cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) lm::fail_validation("cannot write file '" + path.string() + "'");
  out << text;
}

lm::Ledger require_ledger(const GlobalOpts& g) {
  if (g.ledger_path.empty()) lm::fail_usage("--ledger is required");
  return lm::load_ledger(g.ledger_path);
}

void refuse_sealed(const lm::Ledger& ledger, const std::string& op) {
  if (lm::is_sealed(ledger))
    lm::fail_validation("ledger '" + ledger.version.version_label +
                        "' is sealed; " + op +
                        " would invalidate its snapshot");
}

lm::Config load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return lm::Config{};
  return lm::Config::from_file(g.config_path);
}

lm::ModelSpec make_model_spec(const lm::Config& cfg) {
  lm::ModelSpec spec;
  spec.prior_mu = lm::PriorSpec::normal(cfg.get_double("prior_mu_mean", 0.0),
                                        cfg.get_double("prior_mu_sd", 1.0));
  spec.prior_tau =
      lm::PriorSpec::exponential(cfg.get_double("prior_tau_rate", 1.0));
  spec.prior_omega =
      lm::PriorSpec::exponential(cfg.get_double("prior_omega_rate", 1.0));
  return spec;
}

lm::McmcConfig make_mcmc(const lm::Config& cfg, std::uint64_t seed) {
  lm::McmcConfig mc;
  mc.n_chains = static_cast<int>(cfg.get_double("chains", 4));
  mc.warmup_iterations = static_cast<int>(cfg.get_double("warmup", 1000));
  mc.sampling_iterations = static_cast<int>(cfg.get_double("sampling", 3000));
  mc.master_seed = seed;
  return mc;
}

std::string effects_to_csv(const std::vector<lm::EffectEstimate>& effects) {
  lm::csv::Writer w;
  w.row({"effect_id", "study_id", "g", "var_g", "group", "outcome",
         "timepoint", "derivation"});
  for (const auto& e : effects)
    w.row({e.effect_id, e.study_id, lm::fmt_full(e.g), lm::fmt_full(e.var_g),
           e.group_label, e.outcome_label, std::to_string(e.timepoint_index),
           lm::to_string(e.derivation)});
  return w.str();
}

lm::MethodsInfo methods_info(const GlobalOpts& g, const lm::ModelSpec& spec,
                             const lm::McmcConfig& mc) {
  lm::MethodsInfo m;
  m.rho = g.rho;
  m.phi = g.phi;
  m.prior_mu = spec.prior_mu.describe();
  m.prior_tau = spec.prior_tau.describe();
  m.prior_omega = spec.prior_omega.describe();
  m.n_chains = mc.n_chains;
  m.warmup = mc.warmup_iterations;
  m.sampling = mc.sampling_iterations;
  m.seed = mc.master_seed;
  return m;
}

// --- subcommand bodies ------------------------------------------------------

void cmd_ingest(const GlobalOpts& g, const std::string& batch_path,
                const std::string& prior_path) {
  lm::Ledger ledger = require_ledger(g);
  refuse_sealed(ledger, "ingesting records");

  std::vector<lm::SearchRecord> batch;
  if (fs::path(batch_path).extension() == ".ris") {
    batch = lm::search_records_from_ris(read_text(batch_path));
  } else {
    batch = lm::search_records_from_csv(lm::csv::read_file(batch_path));
  }

  lm::ImportReport rep;
  if (!prior_path.empty()) {
    lm::Ledger prior = lm::load_ledger(prior_path);
    rep = lm::import_search_results(ledger, batch, &prior);
  } else {
    rep = lm::import_search_results(ledger, batch);
  }
  lm::save_ledger(ledger, g.ledger_path);
  std::cout << "ingested " << batch.size() << " records: " << rep.queued.size()
            << " queued, " << rep.duplicates.size() << " duplicates, "
            << rep.quarantined.size() << " quarantined, "
            << rep.re_included.size() << " re-inclusions\n";
}

void cmd_screen(const GlobalOpts& g, const std::string& log_path,
                const lm::DecisionEntry& single) {
  lm::Ledger ledger = require_ledger(g);
  refuse_sealed(ledger, "screening");
  if (!log_path.empty()) {
    lm::replay_decisions(ledger, lm::decision_log_from_jsonl(read_text(log_path)));
  } else {
    if (single.record_id.empty())
      lm::fail_usage("screen needs --record/--stage/--decision or --log");
    lm::record_screening_decision(ledger, single);
  }
  lm::save_ledger(ledger, g.ledger_path);
  std::cout << "screening updated: " << ledger.prisma.included_studies
            << " studies included, " << ledger.prisma.excluded_total()
            << " reports excluded\n";
}

void cmd_validate(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate();
  if (lm::is_sealed(ledger)) lm::verify_seal(ledger);
  std::cout << "ledger ok: " << ledger.version.version_label << ", "
            << ledger.studies.size() << " studies"
            << (lm::is_sealed(ledger) ? ", seal verified" : "") << "\n";
}

void cmd_effects(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate_for_analysis();
  const auto effects = lm::reconstruction_effects(ledger);
  write_text(fs::path(g.out_dir) / "effects.csv", effects_to_csv(effects));
  std::cout << "wrote " << effects.size() << " effects to " << g.out_dir
            << "/effects.csv\n";
}

void cmd_vcov(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate_for_analysis();
  const auto effects = lm::reconstruction_effects(ledger);
  lm::SamplingCovariance vcov =
      lm::build_vcov(effects, lm::CovarianceSpec{g.rho, g.phi});
  write_text(fs::path(g.out_dir) / "vcov.csv", lm::vcov_to_csv(vcov));
  std::cout << "wrote " << vcov.dimension() << "x" << vcov.dimension()
            << " covariance (" << vcov.blocks.size() << " blocks) to "
            << g.out_dir << "/vcov.csv\n";
}

void cmd_fit(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate_for_analysis();
  const lm::Config cfg = load_config(g);
  const lm::ModelSpec spec = make_model_spec(cfg);
  const lm::McmcConfig mc = make_mcmc(cfg, g.seed);

  const auto effects = lm::reconstruction_effects(ledger);
  lm::SamplingCovariance vcov =
      lm::build_vcov(effects, lm::CovarianceSpec{g.rho, g.phi});
  lm::Model model(vcov, spec);
  lm::PosteriorDraws draws = lm::fit(model, mc);
  lm::PosteriorSummary summary = lm::summarize(draws);

  write_text(fs::path(g.out_dir) / "draws.csv", lm::draws_to_csv(draws));
  const std::string summary_text = lm::summary_to_json(summary).dump(2) + "\n";
  write_text(fs::path(g.out_dir) / "summary.json", summary_text);

  const lm::ParameterSummary& mu = summary.for_parameter("mu");
  const lm::ParameterSummary& tau = summary.for_parameter("tau");
  const lm::ParameterSummary& omega = summary.for_parameter("omega");

  lm::ResultsSnapshot rs;
  rs.pooled_mean = mu.mean;
  rs.pooled_median = mu.median;
  rs.cri_lo = mu.cri_lo;
  rs.cri_hi = mu.cri_hi;
  rs.tau_median = tau.median;
  rs.omega_median = omega.median;
  rs.n_effects_analyzed = static_cast<long>(effects.size());
  rs.diagnostics_pass = summary.diagnostics_pass;

  if (lm::is_sealed(ledger)) {
    std::cout << "ledger is sealed; results pinned at seal time were kept\n";
  } else {
    ledger.results = rs;
    ledger.version.results_snapshot_ref = lm::sha256_hex(summary_text);
    lm::save_ledger(ledger, g.ledger_path);
  }
  std::cout << lm::summary_markdown_table(summary);
  std::cout << "diagnostics: " << (summary.diagnostics_pass ? "pass" : "FAIL")
            << ", divergences: " << draws.total_divergences() << "\n";
}

void cmd_sensitivity(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate_for_analysis();
  const lm::Config cfg = load_config(g);
  const lm::ModelSpec spec = make_model_spec(cfg);
  const lm::McmcConfig mc = make_mcmc(cfg, g.seed);

  const auto effects = lm::reconstruction_effects(ledger);
  lm::SamplingCovariance vcov =
      lm::build_vcov(effects, lm::CovarianceSpec{g.rho, g.phi});
  lm::PriorSensitivity ps =
      lm::prior_sensitivity(vcov, lm::default_prior_variants(spec), mc);

  const std::vector<double> grid =
      cfg.get_doubles("sensitivity_grid", {0.0, 0.3, 0.6, 0.9});
  lm::GridResult gr = lm::rho_phi_sensitivity(effects, grid, grid, spec, mc);

  write_text(fs::path(g.out_dir) / "sensitivity.csv",
             lm::sensitivity_to_csv(ps, gr));
  std::cout << "prior spread: " << lm::fmt_fixed(ps.spread(), 4)
            << ", grid spread: " << lm::fmt_fixed(gr.spread(), 4) << "\n";
}

void cmd_cumulative(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate_for_analysis();
  const lm::Config cfg = load_config(g);
  lm::CumulativeTrajectory t =
      lm::cumulative_fit(ledger, make_model_spec(cfg), make_mcmc(cfg, g.seed),
                         lm::CovarianceSpec{g.rho, g.phi});
  write_text(fs::path(g.out_dir) / "trajectory.csv", lm::trajectory_to_csv(t));
  std::cout << "wrote " << t.points.size() << " accrual points to " << g.out_dir
            << "/trajectory.csv\n";
}

void cmd_gate(const GlobalOpts& g, const std::string& moderator) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate();
  if (!moderator.empty()) {
    lm::GateResult r = lm::gate_moderator(ledger, moderator);
    std::cout << r.moderator_id << ": "
              << (r.eligible ? "eligible" : "not yet analyzed");
    if (!r.eligible) std::cout << " (" << r.deficit << ")";
    std::cout << "\n";
    return;
  }
  const auto gates = lm::gate_all(ledger);
  write_text(fs::path(g.out_dir) / "gates.json",
             lm::gates_json(gates).dump(2) + "\n");
  long eligible = 0;
  for (const auto& r : gates) eligible += r.eligible ? 1 : 0;
  std::cout << "gated " << gates.size() << " moderators: " << eligible
            << " eligible; wrote " << g.out_dir << "/gates.json\n";
}

void cmd_report(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  ledger.validate();
  const lm::Config cfg = load_config(g);
  const lm::ModelSpec spec = make_model_spec(cfg);
  const lm::McmcConfig mc = make_mcmc(cfg, g.seed);

  const fs::path out(g.out_dir);
  lm::ReportBundle bundle = lm::assemble_bundle(
      ledger, methods_info(g, spec, mc), (out / "sensitivity.csv").string(),
      (out / "trajectory.csv").string());
  write_text(out / "report.md", lm::render_report(bundle));
  write_text(out / "prisma.json", lm::prisma_json(ledger.prisma).dump(2) + "\n");
  std::cout << "wrote " << g.out_dir << "/report.md and " << g.out_dir
            << "/prisma.json\n";
}

void cmd_bump(const GlobalOpts& g, const std::vector<std::string>& changes,
              const std::string& search, const std::string& next_search,
              const std::string& next_version, const std::string& output) {
  lm::Ledger prev = require_ledger(g);
  if (!lm::is_sealed(prev)) {
    lm::seal_ledger(prev);
    lm::save_ledger(prev, g.ledger_path);
  }
  lm::VersionDates dates;
  dates.search_date = lm::parse_date(search);
  if (!next_search.empty()) dates.next_search_date = lm::parse_date(next_search);
  if (!next_version.empty())
    dates.next_version_date = lm::parse_date(next_version);
  lm::Ledger next = lm::bump_version(prev, changes, dates);
  lm::save_ledger(next, output);
  std::cout << "opened " << next.version.version_label << " at " << output
            << "\n";
}

void cmd_retire(const GlobalOpts& g) {
  lm::Ledger ledger = require_ledger(g);
  lm::retire_version(ledger);
  lm::save_ledger(ledger, g.ledger_path);
  std::cout << ledger.version.version_label << " retired\n";
}

void cmd_diff(const std::string& path_a, const std::string& path_b) {
  lm::Ledger a = lm::load_ledger(path_a);
  lm::Ledger b = lm::load_ledger(path_b);
  std::cout << lm::diff_to_text(lm::diff_versions(a, b));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Versioned living meta-analysis toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--ledger", g.ledger_path, "Ledger JSON path");
  app.add_option("--seed", g.seed, "Master RNG seed");
  app.add_option("--rho", g.rho, "Shared group/outcome correlation");
  app.add_option("--phi", g.phi, "Per-timepoint correlation decay");
  app.add_option("--out", g.out_dir, "Artifact output directory");
  app.add_option("--config", g.config_path, "key = value config file");

  std::string batch_path, prior_path;
  auto* ingest = app.add_subcommand("ingest", "Import search-export records");
  ingest->add_option("--batch", batch_path, "CSV or RIS export")->required();
  ingest->add_option("--prior", prior_path, "Previous version's ledger");

  std::string log_path;
  lm::DecisionEntry decision;
  auto* screen = app.add_subcommand("screen", "Record screening decisions");
  screen->add_option("--log", log_path, "JSONL decision log to replay");
  screen->add_option("--record", decision.record_id, "Record id");
  screen->add_option("--stage", decision.stage, "title_abstract | fulltext");
  screen->add_option("--decision", decision.decision,
                     "exclude | advance | include | not_retrieved");
  screen->add_option("--reason", decision.reason, "Exclusion reason");

  app.add_subcommand("validate", "Check ledger invariants and seal");
  app.add_subcommand("effects", "Write the analysis effects table");
  app.add_subcommand("vcov", "Write the sampling covariance matrix");
  app.add_subcommand("fit", "Sample the three-level model");
  app.add_subcommand("sensitivity", "Prior and correlation sweeps");
  app.add_subcommand("cumulative", "Accrual-ordered refits");

  std::string moderator;
  auto* gate = app.add_subcommand("gate", "Moderator eligibility gates");
  gate->add_option("--moderator", moderator, "Gate a single moderator");

  app.add_subcommand("report", "Render the versioned report");

  auto* version = app.add_subcommand("version", "Version lifecycle");
  version->require_subcommand(1);
  std::vector<std::string> changes;
  std::string search, next_search, next_version, bump_output;
  auto* bump = version->add_subcommand("bump", "Open the next version");
  bump->add_option("--change", changes, "Changelog entry (repeatable)")
      ->required();
  bump->add_option("--search-date", search, "New search date")->required();
  bump->add_option("--next-search", next_search, "Scheduled next search");
  bump->add_option("--next-version", next_version, "Scheduled next version");
  bump->add_option("--output", bump_output, "Path for the new ledger")
      ->required();
  version->add_subcommand("retire", "Close the living lifecycle");
  std::string diff_a, diff_b;
  auto* diff = version->add_subcommand("diff", "Compare two sealed versions");
  diff->add_option("ledger_a", diff_a, "Older ledger")->required();
  diff->add_option("ledger_b", diff_b, "Newer ledger")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(ingest)) cmd_ingest(g, batch_path, prior_path);
    else if (app.got_subcommand(screen)) cmd_screen(g, log_path, decision);
    else if (app.got_subcommand("validate")) cmd_validate(g);
    else if (app.got_subcommand("effects")) cmd_effects(g);
    else if (app.got_subcommand("vcov")) cmd_vcov(g);
    else if (app.got_subcommand("fit")) cmd_fit(g);
    else if (app.got_subcommand("sensitivity")) cmd_sensitivity(g);
    else if (app.got_subcommand("cumulative")) cmd_cumulative(g);
    else if (app.got_subcommand(gate)) cmd_gate(g, moderator);
    else if (app.got_subcommand("report")) cmd_report(g);
    else if (app.got_subcommand(version)) {
      if (version->got_subcommand(bump))
        cmd_bump(g, changes, search, next_search, next_version, bump_output);
      else if (version->got_subcommand(diff)) cmd_diff(diff_a, diff_b);
      else cmd_retire(g);
    }
    return 0;
  } catch (const lm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
