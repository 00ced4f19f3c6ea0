#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "livingmeta/moderators.hpp"

using namespace livingmeta;

TEST_CASE("schema registers all twenty-one fields across four groups") {
  const auto& schema = moderator_schema();
  CHECK(schema.size() == 21);
  int participant = 0, contextual = 0, intervention = 0, outcome = 0;
  for (const auto& f : schema) {
    if (f.group == "participant") ++participant;
    else if (f.group == "contextual") ++contextual;
    else if (f.group == "intervention") ++intervention;
    else if (f.group == "outcome") ++outcome;
    if (f.kind == FieldKind::categorical) {
      CHECK(!f.levels.empty());
    } else {
      CHECK(f.levels.empty());
      CHECK_FALSE(f.multi_select);
    }
  }
  CHECK(participant == 6);
  CHECK(contextual == 4);
  CHECK(intervention == 8);
  CHECK(outcome == 3);
}

TEST_CASE("key fields have the expected vocabulary") {
  const ModeratorField* role = find_moderator("ai_role");
  REQUIRE(role != nullptr);
  CHECK(role->multi_select);
  CHECK(role->levels == std::vector<std::string>{"supplement", "replacement"});

  const ModeratorField* isced = find_moderator("isced_level");
  REQUIRE(isced != nullptr);
  CHECK(isced->levels.size() == 10);
  CHECK(isced->levels.back() == "adults");

  const ModeratorField* age = find_moderator("age_mean_years");
  REQUIRE(age != nullptr);
  CHECK(age->kind == FieldKind::continuous);

  CHECK(find_moderator("not_a_field") == nullptr);
}

TEST_CASE("code values validate against their field definition") {
  const ModeratorField& role = *find_moderator("ai_role");
  const ModeratorField& school = *find_moderator("school_type");
  const ModeratorField& age = *find_moderator("age_mean_years");

  CHECK_NOTHROW(check_code_value(role, CodeValue::make_missing()));
  CHECK_NOTHROW(check_code_value(role, CodeValue::of_level("supplement")));
  CHECK_NOTHROW(check_code_value(
      role, CodeValue::of_levels({"supplement", "replacement"})));
  CHECK_NOTHROW(check_code_value(age, CodeValue::of_number(14.2)));

  // out-of-vocabulary level
  CHECK_THROWS_AS(check_code_value(role, CodeValue::of_level("tutor")), Error);
  // multiple levels on a single-select field
  CHECK_THROWS_AS(
      check_code_value(school, CodeValue::of_levels({"public", "private"})),
      Error);
  // duplicated level
  CHECK_THROWS_AS(check_code_value(
                      role, CodeValue::of_levels({"supplement", "supplement"})),
                  Error);
  // coded but empty
  CHECK_THROWS_AS(check_code_value(role, CodeValue::of_levels({})), Error);
  // non-finite continuous value
  CHECK_THROWS_AS(check_code_value(age, CodeValue::of_number(
                                            std::numeric_limits<double>::infinity())),
                  Error);
}

TEST_CASE("a code sheet must cover every schema field") {
  ModeratorCodes sheet = ModeratorCodes::all_missing("s1");
  CHECK_NOTHROW(sheet.check());
  CHECK(sheet.values.size() == moderator_schema().size());
  CHECK(sheet.at("ai_role").missing);
  CHECK_THROWS_AS(sheet.at("unknown_field"), Error);

  ModeratorCodes incomplete = sheet;
  incomplete.values.erase("ai_role");
  CHECK_THROWS_AS(incomplete.check(), Error);

  ModeratorCodes stray = sheet;
  stray.values["invented"] = CodeValue::of_number(1.0);
  CHECK_THROWS_AS(stray.check(), Error);

  ModeratorCodes wrong_version = sheet;
  wrong_version.schema_version = 99;
  CHECK_THROWS_AS(wrong_version.check(), Error);
}

TEST_CASE("reconciliation accepts agreements and lists disagreements") {
  ModeratorCodes a = ModeratorCodes::all_missing("s1");
  ModeratorCodes b = ModeratorCodes::all_missing("s1");
  a.values["ai_role"] = CodeValue::of_level("supplement");
  b.values["ai_role"] = CodeValue::of_level("supplement");
  a.values["school_type"] = CodeValue::of_level("public");
  b.values["school_type"] = CodeValue::of_level("private");
  a.values["age_mean_years"] = CodeValue::of_number(15.0);
  b.values["age_mean_years"] = CodeValue::of_number(15.5);

  ReconcileResult r = reconcile_codes(a, b);
  CHECK(r.conflicts.size() == 2);
  CHECK(r.open_conflicts() == 2);
  CHECK_FALSE(r.complete());
  // agreement flows straight into the consensus
  CHECK(r.consensus.at("ai_role") == CodeValue::of_level("supplement"));
  // disagreements stay missing until resolved
  CHECK(r.consensus.at("school_type").missing);
  CHECK(r.consensus.at("age_mean_years").missing);
}

TEST_CASE("conflicts resolve one by one into the consensus") {
  ModeratorCodes a = ModeratorCodes::all_missing("s1");
  ModeratorCodes b = ModeratorCodes::all_missing("s1");
  a.values["school_type"] = CodeValue::of_level("public");
  b.values["school_type"] = CodeValue::of_level("private");

  ReconcileResult r = reconcile_codes(a, b);
  REQUIRE(r.open_conflicts() == 1);

  resolve_conflict(r, "school_type", CodeValue::of_level("mixed"));
  CHECK(r.complete());
  CHECK(r.consensus.at("school_type") == CodeValue::of_level("mixed"));
  CHECK_NOTHROW(r.consensus.check());

  // double resolution, unknown field, and unconflicted field all refuse
  CHECK_THROWS_AS(resolve_conflict(r, "school_type", CodeValue::of_level("public")),
                  Error);
  CHECK_THROWS_AS(resolve_conflict(r, "bogus", CodeValue::make_missing()), Error);
  CHECK_THROWS_AS(resolve_conflict(r, "ai_role", CodeValue::of_level("supplement")),
                  Error);
  // a resolution that violates the vocabulary is rejected before acceptance
  ReconcileResult r2 = reconcile_codes(a, b);
  CHECK_THROWS_AS(resolve_conflict(r2, "school_type", CodeValue::of_level("home")),
                  Error);
  CHECK(r2.consensus.at("school_type").missing);
}

TEST_CASE("reconciliation requires matching study and schema version") {
  ModeratorCodes a = ModeratorCodes::all_missing("s1");
  ModeratorCodes b = ModeratorCodes::all_missing("s2");
  CHECK_THROWS_AS(reconcile_codes(a, b), Error);

  ModeratorCodes c = ModeratorCodes::all_missing("s1");
  c.schema_version = 2;
  CHECK_THROWS_AS(reconcile_codes(a, c), Error);
}

TEST_CASE("missing compares equal regardless of payload fields") {
  CodeValue m1 = CodeValue::make_missing();
  CodeValue m2;
  m2.levels = {"stale"};  // payload is ignored while missing
  CHECK(m1 == m2);
  CHECK_FALSE(CodeValue::of_level("supplement") == m1);
  CHECK_FALSE(CodeValue::of_number(1.0) == CodeValue::of_number(2.0));
  CHECK(CodeValue::of_levels({"a", "b"}) == CodeValue::of_levels({"a", "b"}));
}

TEST_CASE("describe renders values for reports") {
  const ModeratorField& role = *find_moderator("ai_role");
  const ModeratorField& age = *find_moderator("age_mean_years");
  CHECK(CodeValue::make_missing().describe(role) == "missing");
  CHECK(CodeValue::of_levels({"supplement", "replacement"}).describe(role) ==
        "supplement;replacement");
  CHECK(CodeValue::of_number(12.5).describe(age) == "12.5");
}
