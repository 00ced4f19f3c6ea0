#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "livingmeta/living.hpp"
#include "livingmeta/rng.hpp"
#include "livingmeta/summary.hpp"

using namespace livingmeta;
using Catch::Approx;

namespace {

Ledger scratch_ledger_v1() {
  Ledger l;
  l.version.version_number = 1;
  l.version.version_label = "Version 1, 01/26";
  l.version.search_date = parse_date("2026-01-15");
  l.version.next_search_date = parse_date("2026-03-15");
  l.version.next_version_date = parse_date("2026-04-01");
  l.version.status = VersionStatus::ongoing;
  l.version.changelog = {"This is the first version."};
  l.search_string = "(\"artificial intelligence\") AND (mathematics)";
  return l;
}

StudyRecord study(const std::string& id, double g, int n,
                  const std::string& pub_date) {
  StudyRecord s;
  s.study_id = id;
  s.citation = id + " (2025)";
  s.publication_date = parse_date(pub_date);
  s.publication_format = PublicationFormat::journal;
  s.n_participants = n;
  s.isced_levels = {"2"};
  s.content_areas = {"quantity"};
  s.ai_purpose = {"instructor"};
  s.ai_role = {"supplement"};
  ArmData t;
  t.arm_id = id + ":ai";
  t.condition = Condition::treatment;
  t.n = n / 2;
  ArmData c;
  c.arm_id = id + ":control";
  c.condition = Condition::control_unspecified;
  c.n = n - n / 2;
  s.arms = {t, c};
  EffectRef e;
  e.effect_id = id + ":e1";
  e.group_label = "all";
  e.outcome_label = "outcome_1";
  e.timepoint_index = 0;
  e.analyzable = true;
  s.effects = {e};
  s.codes = ModeratorCodes::all_missing(id);
  s.pooled_g = g;
  return s;
}

McmcConfig tiny_config(std::uint64_t seed) {
  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.warmup_iterations = 150;
  cfg.sampling_iterations = 150;
  cfg.master_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("categorical gates require every level to clear the floor") {
  GateResult ok = gate_categorical("ai_role", {{"supplement", 12}, {"replacement", 10}});
  CHECK(ok.eligible);
  CHECK(ok.deficit.empty());

  GateResult bad = gate_categorical("ai_role", {{"supplement", 10}, {"replacement", 9}});
  CHECK_FALSE(bad.eligible);
  CHECK(bad.deficit == "level 'replacement' has 9 of 10 required studies");

  CHECK_THROWS_AS(gate_categorical("x", {}), Error);
}

TEST_CASE("continuous gates require twenty coded studies") {
  CHECK(gate_continuous("age_mean_years", 20).eligible);
  GateResult bad = gate_continuous("age_mean_years", 19);
  CHECK_FALSE(bad.eligible);
  CHECK(bad.deficit == "19 of 20 required studies");
}

TEST_CASE("adding studies can never close an open gate") {
  RngStream rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LevelCount> counts{
        {"a", static_cast<long>(rng.uniform() * 15)},
        {"b", static_cast<long>(rng.uniform() * 15)},
        {"c", static_cast<long>(rng.uniform() * 15)}};
    GateResult before = gate_categorical("m", counts);
    auto bumped = counts;
    bumped[static_cast<std::size_t>(rng.uniform() * 3)].count += 1;
    GateResult after = gate_categorical("m", bumped);
    if (before.eligible) CHECK(after.eligible);
    CHECK(gate_continuous("m", 21).eligible);
  }
}

TEST_CASE("ledger gating counts coded studies per level") {
  Ledger l = scratch_ledger_v1();
  for (int i = 0; i < 12; ++i) {
    StudyRecord s = study("j" + std::to_string(i + 1), 0.3, 100,
                          "2024-0" + std::to_string(1 + i % 9) + "-15");
    if (i < 11)
      s.codes.values["ai_role"] =
          CodeValue::of_levels({"supplement", "replacement"});
    if (i < 3) s.codes.values["school_type"] = CodeValue::of_level("public");
    if (i < 5) s.codes.values["age_mean_years"] = CodeValue::of_number(12.5);
    l.studies.push_back(std::move(s));
  }

  GateResult role = gate_moderator(l, "ai_role");
  CHECK(role.eligible);
  REQUIRE(role.level_counts.size() == 2);
  CHECK(role.level_counts[0].count == 11);  // multi-select counts both levels
  CHECK(role.level_counts[1].count == 11);

  GateResult school = gate_moderator(l, "school_type");
  CHECK_FALSE(school.eligible);
  CHECK(school.deficit.find(" has 0 of 10 required studies") != std::string::npos);

  GateResult age = gate_moderator(l, "age_mean_years");
  CHECK_FALSE(age.eligible);
  CHECK(age.study_count == 5);

  CHECK_THROWS_AS(gate_moderator(l, "not_a_moderator"), Error);

  std::vector<GateResult> all = gate_all(l);
  CHECK(all.size() == moderator_schema().size());
  json j = gates_json(all);
  REQUIRE(j.is_array());
  CHECK(j.size() == all.size());
  bool saw_role = false;
  for (const auto& entry : j) {
    if (entry["moderator"] != "ai_role") continue;
    saw_role = true;
    CHECK(entry["kind"] == "categorical");
    CHECK(entry["levels"].size() == 2);
    CHECK(entry["eligible"] == true);
    CHECK(entry["deficit"] == "");
  }
  CHECK(saw_role);
}

TEST_CASE("sealing pins the snapshot hash and detects tampering") {
  Ledger l = scratch_ledger_v1();
  l.studies.push_back(study("a2024", 0.4, 120, "2024-03-01"));

  CHECK_FALSE(is_sealed(l));
  CHECK_THROWS_AS(verify_seal(l), Error);

  seal_ledger(l);
  CHECK(is_sealed(l));
  const std::string ref = l.version.ledger_snapshot_ref;
  CHECK(ref.size() == 64);
  CHECK_NOTHROW(verify_seal(l));
  seal_ledger(l);  // idempotent on unchanged content
  CHECK(l.version.ledger_snapshot_ref == ref);

  Ledger tampered = l;
  tampered.studies[0].pooled_g = 0.9;
  try {
    verify_seal(tampered);
    FAIL("tampered ledger must not verify");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::integrity);
    CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
  }
  CHECK_THROWS_AS(seal_ledger(tampered), Error);
}

TEST_CASE("bumping opens the scheduled successor version") {
  Ledger v1 = scratch_ledger_v1();
  v1.studies.push_back(study("a2024", 0.4, 120, "2024-03-01"));
  ResultsSnapshot r;
  r.pooled_mean = 0.31;
  v1.results = r;

  VersionDates dates;
  dates.search_date = parse_date("2026-04-02");
  dates.next_search_date = parse_date("2026-06-01");
  dates.next_version_date = parse_date("2026-07-01");

  CHECK_THROWS_AS(bump_version(v1, {"New search."}, dates), Error);  // unsealed
  seal_ledger(v1);
  CHECK_THROWS_AS(bump_version(v1, {}, dates), Error);  // undeclared changes

  Ledger v2 = bump_version(v1, {"New search.", "Two studies added."}, dates);
  CHECK(v2.version.version_number == 2);
  CHECK(v2.version.version_label == "Version 2, 04/26");
  CHECK(v2.version.status == VersionStatus::ongoing);
  CHECK(v2.version.changelog ==
        std::vector<std::string>{"New search.", "Two studies added."});
  CHECK(v2.version.search_date.iso() == "2026-04-02");
  CHECK(v2.version.next_version_date.iso() == "2026-07-01");
  CHECK_FALSE(is_sealed(v2));
  CHECK(v2.version.results_snapshot_ref.empty());
  CHECK_FALSE(v2.results.has_value());
  CHECK(v2.studies.size() == 1);  // evidence carries over

  VersionDates bad = dates;
  bad.search_date = Date{};
  CHECK_THROWS_AS(bump_version(v1, {"x"}, bad), Error);

  Ledger unscheduled = v1;
  unscheduled.version.next_version_date = Date{};
  unscheduled.version.ledger_snapshot_ref = "";
  seal_ledger(unscheduled);
  CHECK_THROWS_AS(bump_version(unscheduled, {"x"}, dates), Error);

  Ledger retired = v1;
  retire_version(retired);
  CHECK_THROWS_AS(bump_version(retired, {"x"}, dates), Error);
}

TEST_CASE("retiring freezes the version and keeps its seal valid") {
  Ledger l = scratch_ledger_v1();
  l.studies.push_back(study("a2024", 0.4, 120, "2024-03-01"));
  seal_ledger(l);
  const std::string before = l.version.ledger_snapshot_ref;

  retire_version(l);
  CHECK(l.version.status == VersionStatus::retired);
  CHECK(l.version.ledger_snapshot_ref != before);  // status is hashed content
  CHECK_NOTHROW(verify_seal(l));
  CHECK_THROWS_AS(retire_version(l), Error);

  Ledger unsealed = scratch_ledger_v1();
  retire_version(unsealed);
  CHECK(unsealed.version.status == VersionStatus::retired);
  CHECK_FALSE(is_sealed(unsealed));
}

TEST_CASE("version diffs list evidence and gate movement") {
  Ledger a = scratch_ledger_v1();
  for (int i = 0; i < 9; ++i) {
    StudyRecord s = study("s" + std::to_string(i + 1), 0.3, 100, "2024-02-10");
    s.codes.values["ai_role"] =
        CodeValue::of_levels({"supplement", "replacement"});
    a.studies.push_back(std::move(s));
  }
  ResultsSnapshot ra;
  ra.pooled_mean = 0.30;
  a.results = ra;
  seal_ledger(a);

  Ledger self_diff_probe = a;
  VersionDiff none = diff_versions(self_diff_probe, a);
  CHECK(none.empty());
  CHECK(diff_to_text(none).find("(no changes)") != std::string::npos);

  Ledger b = a;
  b.version.version_number = 2;
  b.version.version_label = "Version 2, 04/26";
  StudyRecord add = study("s10", 0.5, 80, "2026-01-20");
  add.codes.values["ai_role"] =
      CodeValue::of_levels({"supplement", "replacement"});
  b.studies.push_back(std::move(add));
  ScreeningRecord rec;
  rec.record_id = "rec-77";
  rec.title = "A report found again";
  rec.year = 2023;
  rec.date = "2023-05-01";
  rec.source = "scopus";
  rec.status = ScreenStatus::queued_fulltext;
  rec.re_inclusion = true;
  b.screening.push_back(rec);
  ResultsSnapshot rb;
  rb.pooled_mean = 0.36;
  b.results = rb;
  b.version.ledger_snapshot_ref = "";
  seal_ledger(b);

  VersionDiff d = diff_versions(a, b);
  CHECK_FALSE(d.empty());
  CHECK(d.label_a == "Version 1, 01/26");
  CHECK(d.label_b == "Version 2, 04/26");
  CHECK(d.studies_added == std::vector<std::string>{"s10"});
  CHECK(d.studies_removed.empty());
  CHECK(d.re_included_records == std::vector<std::string>{"rec-77"});
  CHECK(d.effect_delta == 1);
  REQUIRE(d.pooled_delta.has_value());
  CHECK(*d.pooled_delta == Approx(0.06));
  REQUIRE(d.gate_changes.size() == 1);
  CHECK(d.gate_changes[0].moderator_id == "ai_role");
  CHECK_FALSE(d.gate_changes[0].was_eligible);
  CHECK(d.gate_changes[0].now_eligible);

  std::string text = diff_to_text(d);
  CHECK(text.find("studies added: s10") != std::string::npos);
  CHECK(text.find("re-inclusions: rec-77") != std::string::npos);
  CHECK(text.find("ai_role (ineligible -> eligible)") != std::string::npos);

  CHECK_THROWS_AS(diff_versions(b, a), Error);  // wrong order

  Ledger tampered = b;
  tampered.studies[0].pooled_g = 0.99;
  try {
    diff_versions(a, tampered);
    FAIL("diff must refuse unverifiable input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::integrity);
  }
}

TEST_CASE("a single-study ledger yields a one-point trajectory") {
  Ledger l = scratch_ledger_v1();
  l.studies.push_back(study("a2024", 0.4, 200, "2024-03-01"));
  CumulativeTrajectory t =
      cumulative_fit(l, ModelSpec{}, tiny_config(11), {0.5, 0.8});
  REQUIRE(t.points.size() == 1);
  CHECK(t.points[0].cutoff.iso() == "2024-03-01");
  CHECK(t.points[0].n_studies == 1);
  CHECK(t.points[0].n_effects == 1);
  CHECK(t.points[0].cri_lo < t.points[0].median);
  CHECK(t.points[0].median < t.points[0].cri_hi);

  SamplingCovariance vcov = build_vcov(reconstruction_effects(l), {0.5, 0.8});
  CHECK(t.points[0].precision == Approx(vcov.study_precision("a2024")));
}

TEST_CASE("cumulative refits walk the publication dates in order") {
  Ledger l = scratch_ledger_v1();
  l.studies.push_back(study("a2024", 0.20, 150, "2024-03-01"));
  l.studies.push_back(study("b2024", 0.45, 90, "2024-03-01"));
  l.studies.push_back(study("c2025", 0.35, 240, "2025-06-10"));

  McmcConfig cfg = tiny_config(2026);
  CumulativeTrajectory t = cumulative_fit(l, ModelSpec{}, cfg, {0.5, 0.8});
  REQUIRE(t.points.size() == 2);
  CHECK(t.points[0].cutoff.iso() == "2024-03-01");
  CHECK(t.points[1].cutoff.iso() == "2025-06-10");
  CHECK(t.points[0].n_studies == 2);
  CHECK(t.points[1].n_studies == 3);
  CHECK(t.points[0].n_effects == 2);
  CHECK(t.points[1].n_effects == 3);

  SamplingCovariance vcov = build_vcov(reconstruction_effects(l), {0.5, 0.8});
  CHECK(t.points[0].precision == Approx(vcov.study_precision("a2024") +
                                        vcov.study_precision("b2024")));
  CHECK(t.points[1].precision == Approx(vcov.study_precision("c2025")));

  // the last point is the standalone full-data fit, bit for bit
  Model full(build_vcov(reconstruction_effects(l), {0.5, 0.8}), ModelSpec{});
  PosteriorSummary standalone = summarize(fit(full, cfg));
  CHECK(t.points[1].median == standalone.for_parameter("mu").median);
  CHECK(t.points[1].cri_lo == standalone.for_parameter("mu").cri_lo);
  CHECK(t.points[1].cri_hi == standalone.for_parameter("mu").cri_hi);

  std::string csv_text = trajectory_to_csv(t);
  CHECK(csv_text.rfind("date,n_studies,median,lo95,hi95,precision", 0) == 0);
  CHECK(csv_text.find("\n2024-03-01,2,") != std::string::npos);
  CHECK(csv_text.find("\n2025-06-10,3,") != std::string::npos);
}

TEST_CASE("cumulative fits refuse undated or empty evidence") {
  Ledger empty = scratch_ledger_v1();
  CHECK_THROWS_AS(cumulative_fit(empty, ModelSpec{}, tiny_config(1), {0.5, 0.8}),
                  Error);

  Ledger l = scratch_ledger_v1();
  l.studies.push_back(study("a2024", 0.2, 100, "2024-03-01"));
  l.studies.push_back(study("b2024", 0.3, 100, "2024-04-01"));
  l.studies[1].publication_date = Date{};
  try {
    cumulative_fit(l, ModelSpec{}, tiny_config(1), {0.5, 0.8});
    FAIL("undated studies must be rejected");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("b2024") != std::string::npos);
  }
}
