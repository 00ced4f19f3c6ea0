#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "livingmeta/report.hpp"

using namespace livingmeta;
using Catch::Approx;

namespace {

namespace fs = std::filesystem;

Ledger report_ledger() {
  Ledger l;
  l.version.version_number = 1;
  l.version.version_label = "Version 1, 01/26";
  l.version.search_date = parse_date("2026-01-15");
  l.version.next_search_date = parse_date("2026-03-15");
  l.version.next_version_date = parse_date("2026-04-01");
  l.version.status = VersionStatus::ongoing;
  l.version.changelog = {"This is the first version."};
  l.search_string = "(\"artificial intelligence\") AND (mathematics)";

  for (int i = 0; i < 2; ++i) {
    StudyRecord s;
    s.study_id = i == 0 ? "alpha2025" : "beta2025";
    s.citation = s.study_id + " (2025)";
    s.publication_date = parse_date(i == 0 ? "2025-02-01" : "2025-07-12");
    s.publication_format = PublicationFormat::journal;
    s.n_participants = 100 + i * 40;
    s.isced_levels = {"2"};
    s.content_areas = {"quantity"};
    s.ai_purpose = {"instructor"};
    s.ai_role = {"supplement"};
    ArmData t;
    t.arm_id = s.study_id + ":ai";
    t.condition = Condition::treatment;
    t.n = s.n_participants / 2;
    ArmData c;
    c.arm_id = s.study_id + ":control";
    c.condition = Condition::control_unspecified;
    c.n = s.n_participants - t.n;
    s.arms = {t, c};
    EffectRef e;
    e.effect_id = s.study_id + ":e1";
    e.group_label = "all";
    e.outcome_label = "outcome_1";
    e.timepoint_index = 0;
    e.analyzable = true;
    s.effects = {e};
    s.codes = ModeratorCodes::all_missing(s.study_id);
    s.pooled_g = 0.31 + 0.05 * i;
    l.studies.push_back(std::move(s));
  }

  l.prisma.identified = 40;
  l.prisma.screened = 30;
  l.prisma.sought_fulltext = 10;
  l.prisma.not_retrieved = 1;
  l.prisma.assessed = 9;
  l.prisma.excluded_with_reasons = {{"wrong design", 7}};
  l.prisma.included_studies = 2;
  l.prisma.included_reports = 2;

  ResultsSnapshot r;
  r.pooled_mean = 0.31;
  r.pooled_median = 0.30;
  r.cri_lo = 0.06;
  r.cri_hi = 0.58;
  r.tau_median = 0.24;
  r.omega_median = 0.43;
  r.n_effects_analyzed = 2;
  r.diagnostics_pass = true;
  l.results = r;

  seal_ledger(l);
  return l;
}

MethodsInfo report_methods() {
  MethodsInfo m;
  m.rho = 0.7;
  m.phi = 0.8;
  m.prior_mu = "normal(0, 1)";
  m.prior_tau = "half-normal(0.5)";
  m.prior_omega = "half-normal(0.5)";
  m.n_chains = 4;
  m.warmup = 1000;
  m.sampling = 3000;
  m.seed = 20260115;
  return m;
}

std::string write_temp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p, std::ios::binary);
  out << text;
  out.close();
  return p.string();
}

std::string sensitivity_fixture() {
  return write_temp("lm_report_sens.csv",
                    "suite,name,rho,phi,status,pooled_mean,cri_lo,cri_hi,message\n"
                    "prior,baseline,,,ok,0.310,0.20,0.42,\n"
                    "prior,wide,,,ok,0.318,0.19,0.44,\n"
                    "prior,tight,,,failed,,,,synthetic failure\n"
                    "grid,,0.5,0.8,ok,0.312,0.21,0.41,\n"
                    "grid,,0.7,0.8,ok,0.305,0.20,0.40,\n");
}

std::string trajectory_fixture() {
  return write_temp("lm_report_traj.csv",
                    "date,n_studies,median,lo95,hi95,precision\n"
                    "2025-02-01,1,0.29,0.01,0.6,24.5\n"
                    "2025-07-12,2,0.31,0.06,0.58,18.2\n");
}

}  // namespace

TEST_CASE("bundles are assembled only from verified ledgers") {
  Ledger l = report_ledger();
  l.version.ledger_snapshot_ref = "";
  try {
    assemble_bundle(l, report_methods(), "", "");
    FAIL("unsealed ledger must be refused");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::integrity);
  }
}

TEST_CASE("the bundle carries ledger content and stored artifacts") {
  Ledger l = report_ledger();
  ReportBundle b = assemble_bundle(l, report_methods(), sensitivity_fixture(),
                                   trajectory_fixture());
  CHECK(b.version_label == "Version 1, 01/26");
  CHECK(b.status == VersionStatus::ongoing);
  CHECK(b.prisma.identified == 40);
  CHECK(b.studies.size() == 2);
  REQUIRE(b.results.has_value());
  CHECK(b.results->pooled_mean == Approx(0.31));
  CHECK(b.gates.size() == moderator_schema().size());
  REQUIRE(b.sensitivity.size() == 5);
  CHECK(b.sensitivity[2].ok == false);
  CHECK(b.sensitivity[2].message == "synthetic failure");
  CHECK(b.prior_spread == Approx(0.008));
  CHECK(b.grid_spread == Approx(0.007));
  CHECK(b.trajectory_ref == "lm_report_traj.csv");
  CHECK(b.trajectory_points == 2);
}

TEST_CASE("a malformed sensitivity artifact is a validation error") {
  Ledger l = report_ledger();
  std::string bad = write_temp("lm_report_bad.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(assemble_bundle(l, report_methods(), bad, ""), Error);
}

TEST_CASE("the rendered report quotes the ledger verbatim") {
  Ledger l = report_ledger();
  ReportBundle b = assemble_bundle(l, report_methods(), sensitivity_fixture(),
                                   trajectory_fixture());
  std::string md = render_report(b);

  CHECK(md.find("# Living Synthesis Report — Version 1, 01/26") !=
        std::string::npos);
  CHECK(md.find("- Status: Ongoing") != std::string::npos);
  CHECK(md.find("Literature search current as of: 2026-01-15") !=
        std::string::npos);
  CHECK(md.find("include the version label (Version 1, 01/26)") !=
        std::string::npos);
  CHECK(md.find("| records identified | 40 |") != std::string::npos);
  CHECK(md.find("| excluded: wrong design | 7 |") != std::string::npos);
  CHECK(md.find("alpha2025 (2025)") != std::string::npos);
  CHECK(md.find("posterior mean 0.31, median 0.30, 95% CrI [0.06, 0.58]") !=
        std::string::npos);
  CHECK(md.find("tau = 0.24, within-study omega = 0.43") != std::string::npos);
  CHECK(md.find("pooled-mean spread 0.008") != std::string::npos);
  CHECK(md.find("| wide | 0.318 | [0.19, 0.44] | |") != std::string::npos);
  CHECK(md.find("| tight | - | - | synthetic failure |") != std::string::npos);
  CHECK(md.find("not yet analyzed") != std::string::npos);
  CHECK(md.find("This is the first version.") != std::string::npos);
  CHECK(md.find("lm_report_traj.csv (2 accrual points)") != std::string::npos);
  CHECK(md.find("Convergence warning") == std::string::npos);

  // rendering is a pure function of the bundle
  CHECK(render_report(b) == md);
}

TEST_CASE("failed diagnostics surface as a prominent warning") {
  Ledger l = report_ledger();
  ReportBundle b = assemble_bundle(l, report_methods(), sensitivity_fixture(),
                                   trajectory_fixture());
  b.results->diagnostics_pass = false;
  std::string md = render_report(b);
  CHECK(md.find("> **Convergence warning:**") != std::string::npos);
  CHECK(md.find("- Convergence diagnostics: FAIL") != std::string::npos);
}

TEST_CASE("a report with missing sections is refused with every gap named") {
  ReportBundle empty;
  try {
    render_report(empty);
    FAIL("empty bundle must be refused");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.rfind("report refused; missing: ", 0) == 0);
    CHECK(msg.find("version label") != std::string::npos);
    CHECK(msg.find("search date") != std::string::npos);
    CHECK(msg.find("PRISMA counts") != std::string::npos);
    CHECK(msg.find("study table") != std::string::npos);
    CHECK(msg.find("pooled results") != std::string::npos);
    CHECK(msg.find("methods priors") != std::string::npos);
    CHECK(msg.find("sensitivity tables") != std::string::npos);
    CHECK(msg.find("gate table") != std::string::npos);
    CHECK(msg.find("changes section") != std::string::npos);
  }
}

TEST_CASE("prisma counts export as structured json") {
  Ledger l = report_ledger();
  json j = prisma_json(l.prisma);
  CHECK(j["identified"] == 40);
  CHECK(j["screened"] == 30);
  CHECK(j["sought_fulltext"] == 10);
  CHECK(j["not_retrieved"] == 1);
  CHECK(j["assessed"] == 9);
  CHECK(j["included_studies"] == 2);
  CHECK(j["included_reports"] == 2);
  REQUIRE(j["excluded"].is_array());
  REQUIRE(j["excluded"].size() == 1);
  CHECK(j["excluded"][0]["reason"] == "wrong design");
  CHECK(j["excluded"][0]["count"] == 7);
}
