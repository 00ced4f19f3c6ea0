#ifndef LIVINGMETA_MODERATORS_HPP
#define LIVINGMETA_MODERATORS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"

// Moderator coding schema and double-coder reconciliation. The schema is a
// closed registry: every field is either categorical over a fixed vocabulary
// or continuous, and every code is either a value or the explicit state
// `missing` (never simply absent), so gating can count codable studies.

namespace livingmeta {

enum class FieldKind { categorical, continuous };

struct ModeratorField {
  std::string id;
  std::string group;  // participant | contextual | intervention | outcome
  FieldKind kind = FieldKind::categorical;
  bool multi_select = false;
  std::vector<std::string> levels;  // closed vocabulary, categorical only
};

inline constexpr int kSchemaVersion = 1;

// Coding-manual vocabulary, version 1. Grouped as: participant
// characteristics; contextual factors; intervention characteristics;
// outcome characteristics.
inline const std::vector<ModeratorField>& moderator_schema() {
  static const std::vector<ModeratorField> schema = {
      {"isced_level", "participant", FieldKind::categorical, true,
       {"0", "1", "2", "3", "4", "5", "6", "7", "8", "adults"}},
      {"age_mean_years", "participant", FieldKind::continuous, false, {}},
      {"school_type", "participant", FieldKind::categorical, false,
       {"public", "private", "mixed"}},
      {"location", "participant", FieldKind::categorical, false,
       {"africa", "asia", "europe", "north_america", "oceania",
        "south_america", "multi_region"}},
      {"prior_knowledge", "participant", FieldKind::categorical, false,
       {"low", "mixed", "high"}},
      {"ses", "participant", FieldKind::categorical, false,
       {"low", "mixed", "high"}},

      {"content_domain", "contextual", FieldKind::categorical, true,
       {"change_relationships", "quantity", "space_shape",
        "uncertainty_data"}},
      {"learning_arrangement", "contextual", FieldKind::categorical, false,
       {"individual", "collaborative", "teacher_guided"}},
      {"instructional_context", "contextual", FieldKind::categorical, false,
       {"classroom", "online", "laboratory"}},
      {"assessment_stakes", "contextual", FieldKind::categorical, false,
       {"low_stakes", "high_stakes"}},

      {"ai_role", "intervention", FieldKind::categorical, true,
       {"supplement", "replacement"}},
      {"teacher_autonomy", "intervention", FieldKind::categorical, false,
       {"none", "partial", "full"}},
      {"familiarity", "intervention", FieldKind::categorical, false,
       {"none", "some", "high"}},
      {"familiarization", "intervention", FieldKind::categorical, false,
       {"none", "brief", "extended"}},
      {"duration_weeks", "intervention", FieldKind::continuous, false, {}},
      {"intensity_sessions_per_week", "intervention", FieldKind::continuous,
       false, {}},
      {"tool_type", "intervention", FieldKind::categorical, false,
       {"general_chatbot", "custom_tutor", "other"}},
      {"base_vs_modified", "intervention", FieldKind::categorical, false,
       {"base", "modified"}},

      {"knowledge_type", "outcome", FieldKind::categorical, false,
       {"procedural", "conceptual", "mixed"}},
      {"task_format", "outcome", FieldKind::categorical, false,
       {"recall", "application", "transfer", "mixed"}},
      {"proximal_distal", "outcome", FieldKind::categorical, false,
       {"proximal", "distal"}},
  };
  return schema;
}

inline const ModeratorField* find_moderator(const std::string& id) {
  for (const auto& f : moderator_schema())
    if (f.id == id) return &f;
  return nullptr;
}

// One coded value: explicitly missing, a set of categorical levels (a single
// level for non-multi-select fields), or a number.
struct CodeValue {
  bool missing = true;
  std::vector<std::string> levels;
  double number = 0.0;

  static CodeValue make_missing() { return CodeValue{}; }
  static CodeValue of_level(std::string level) {
    CodeValue v;
    v.missing = false;
    v.levels.push_back(std::move(level));
    return v;
  }
  static CodeValue of_levels(std::vector<std::string> ls) {
    CodeValue v;
    v.missing = false;
    v.levels = std::move(ls);
    return v;
  }
  static CodeValue of_number(double x) {
    CodeValue v;
    v.missing = false;
    v.number = x;
    return v;
  }

  bool operator==(const CodeValue& o) const {
    if (missing != o.missing) return false;
    if (missing) return true;
    return levels == o.levels && number == o.number;
  }

  std::string describe(const ModeratorField& field) const {
    if (missing) return "missing";
    if (field.kind == FieldKind::continuous) return fmt_full(number);
    std::string s;
    for (const auto& l : levels) {
      if (!s.empty()) s += ";";
      s += l;
    }
    return s;
  }
};

inline void check_code_value(const ModeratorField& field, const CodeValue& v) {
  if (v.missing) return;
  if (field.kind == FieldKind::continuous) {
    if (!std::isfinite(v.number))
      fail_validation("moderator '" + field.id + "': non-finite value");
    if (!v.levels.empty())
      fail_validation("moderator '" + field.id +
                      "': continuous field carries categorical levels");
    return;
  }
  if (v.levels.empty())
    fail_validation("moderator '" + field.id +
                    "': coded but no level selected");
  if (!field.multi_select && v.levels.size() > 1)
    fail_validation("moderator '" + field.id +
                    "': multiple levels on a single-select field");
  std::vector<std::string> seen;
  for (const auto& l : v.levels) {
    if (std::find(field.levels.begin(), field.levels.end(), l) ==
        field.levels.end())
      fail_validation("moderator '" + field.id + "': level '" + l +
                      "' is not in the closed vocabulary");
    if (std::find(seen.begin(), seen.end(), l) != seen.end())
      fail_validation("moderator '" + field.id + "': level '" + l +
                      "' selected twice");
    seen.push_back(l);
  }
}

// One rater's (or the consensus) code sheet for one study.
struct ModeratorCodes {
  std::string study_id;
  int schema_version = kSchemaVersion;
  std::map<std::string, CodeValue> values;  // field id -> code

  const CodeValue& at(const std::string& field_id) const {
    auto it = values.find(field_id);
    if (it == values.end())
      fail_validation("study '" + study_id + "': moderator '" + field_id +
                      "' is not coded");
    return it->second;
  }

  // Every schema field present and valid; unknown fields rejected.
  void check() const {
    if (schema_version != kSchemaVersion)
      fail_validation("study '" + study_id + "': coding schema version " +
                      std::to_string(schema_version) + " does not match " +
                      std::to_string(kSchemaVersion));
    for (const auto& f : moderator_schema()) {
      auto it = values.find(f.id);
      if (it == values.end())
        fail_validation("study '" + study_id + "': moderator '" + f.id +
                        "' is not coded (use explicit missing)");
      check_code_value(f, it->second);
    }
    for (const auto& [id, v] : values)
      if (!find_moderator(id))
        fail_validation("study '" + study_id + "': unknown moderator '" + id +
                        "'");
  }

  static ModeratorCodes all_missing(const std::string& study_id) {
    ModeratorCodes c;
    c.study_id = study_id;
    for (const auto& f : moderator_schema())
      c.values[f.id] = CodeValue::make_missing();
    return c;
  }
};

struct CodeConflict {
  std::string field_id;
  CodeValue rater_a;
  CodeValue rater_b;
  bool resolved = false;
};

struct ReconcileResult {
  ModeratorCodes consensus;
  std::vector<CodeConflict> conflicts;

  std::size_t open_conflicts() const {
    std::size_t n = 0;
    for (const auto& c : conflicts)
      if (!c.resolved) ++n;
    return n;
  }
  // A study is analyzable only once every disagreement has been resolved.
  bool complete() const { return open_conflicts() == 0; }
};

// Compare two independent code sheets field by field. Agreements are
// auto-accepted into the consensus; disagreements are listed for manual
// resolution and left uncoded (missing) in the consensus until resolved.
inline ReconcileResult reconcile_codes(const ModeratorCodes& a,
                                       const ModeratorCodes& b) {
  if (a.study_id != b.study_id)
    fail_validation("reconcile_codes: code sheets cover different studies ('" +
                    a.study_id + "' vs '" + b.study_id + "')");
  if (a.schema_version != b.schema_version)
    fail_validation("reconcile_codes: schema version mismatch (" +
                    std::to_string(a.schema_version) + " vs " +
                    std::to_string(b.schema_version) + ")");
  a.check();
  b.check();

  ReconcileResult out;
  out.consensus.study_id = a.study_id;
  out.consensus.schema_version = a.schema_version;
  for (const auto& f : moderator_schema()) {
    const CodeValue& va = a.at(f.id);
    const CodeValue& vb = b.at(f.id);
    if (va == vb) {
      out.consensus.values[f.id] = va;
    } else {
      out.consensus.values[f.id] = CodeValue::make_missing();
      out.conflicts.push_back({f.id, va, vb, false});
    }
  }
  return out;
}

// Manual consensus decision for one listed conflict.
inline void resolve_conflict(ReconcileResult& r, const std::string& field_id,
                             const CodeValue& decision) {
  const ModeratorField* field = find_moderator(field_id);
  if (!field)
    fail_validation("resolve_conflict: unknown moderator '" + field_id + "'");
  for (auto& c : r.conflicts) {
    if (c.field_id != field_id) continue;
    if (c.resolved)
      fail_validation("resolve_conflict: '" + field_id +
                      "' is already resolved");
    check_code_value(*field, decision);
    r.consensus.values[field_id] = decision;
    c.resolved = true;
    return;
  }
  fail_validation("resolve_conflict: no open conflict for '" + field_id + "'");
}

}  // namespace livingmeta

#endif
