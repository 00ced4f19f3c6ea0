#ifndef LIVINGMETA_LEDGER_HPP
#define LIVINGMETA_LEDGER_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "livingmeta/common.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/effects.hpp"
#include "livingmeta/moderators.hpp"
#include "livingmeta/sha256.hpp"

// Versioned study ledger: search imports, screening decisions, PRISMA flow
// counts, included studies with moderator codes, and the version record.
// One JSON document per version with stable field ordering, so versions
// diff cleanly line by line.

namespace livingmeta {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Closed vocabularies

enum class PublicationFormat { journal, proceedings, preprint };

inline std::string to_string(PublicationFormat f) {
  switch (f) {
    case PublicationFormat::journal: return "journal";
    case PublicationFormat::proceedings: return "proceedings";
    case PublicationFormat::preprint: return "preprint";
  }
  fail_validation("unknown publication format");
}

inline PublicationFormat publication_format_from(const std::string& s) {
  if (s == "journal") return PublicationFormat::journal;
  if (s == "proceedings") return PublicationFormat::proceedings;
  if (s == "preprint") return PublicationFormat::preprint;
  fail_validation("unknown publication format '" + s + "'");
}

// control_unspecified extends the coding manual's control taxonomy for
// studies whose reports do not state the control type.
enum class Condition {
  treatment,
  control_active,
  control_passive,
  control_placebo,
  control_unspecified
};

inline std::string to_string(Condition c) {
  switch (c) {
    case Condition::treatment: return "treatment";
    case Condition::control_active: return "control_active";
    case Condition::control_passive: return "control_passive";
    case Condition::control_placebo: return "control_placebo";
    case Condition::control_unspecified: return "control_unspecified";
  }
  fail_validation("unknown condition");
}

inline Condition condition_from(const std::string& s) {
  if (s == "treatment") return Condition::treatment;
  if (s == "control_active") return Condition::control_active;
  if (s == "control_passive") return Condition::control_passive;
  if (s == "control_placebo") return Condition::control_placebo;
  if (s == "control_unspecified") return Condition::control_unspecified;
  fail_validation("unknown condition '" + s + "'");
}

inline bool is_control(Condition c) { return c != Condition::treatment; }

// Table 1 note: 1 = Mathematics expert; 2 = Assessment and feedback;
// 3 = Instructor; 4 = Dialogic partner; 5 = Facilitator of collaborative
// learning; 6 = Teacher support.
inline const std::vector<std::string>& ai_purpose_levels() {
  static const std::vector<std::string> v = {
      "expert",           "assessment_feedback", "instructor",
      "dialogic_partner", "collab_facilitator",  "teacher_support"};
  return v;
}

inline std::string ai_purpose_from_code(int code) {
  if (code < 1 || code > 6)
    fail_validation("ai_purpose code " + std::to_string(code) +
                    " outside 1..6");
  return ai_purpose_levels()[static_cast<std::size_t>(code - 1)];
}

// Table 1 note, PISA content areas: C, Q, S, U.
inline const std::vector<std::string>& content_area_levels() {
  static const std::vector<std::string> v = {
      "change_relationships", "quantity", "space_shape", "uncertainty_data"};
  return v;
}

inline std::string content_area_from_code(const std::string& code) {
  if (code == "C") return "change_relationships";
  if (code == "Q") return "quantity";
  if (code == "S") return "space_shape";
  if (code == "U") return "uncertainty_data";
  fail_validation("unknown content area code '" + code + "'");
}

inline const std::vector<std::string>& ai_role_levels() {
  static const std::vector<std::string> v = {"supplement", "replacement"};
  return v;
}

inline const std::vector<std::string>& isced_levels_vocab() {
  static const std::vector<std::string> v = {"0", "1", "2", "3",      "4",
                                             "5", "6", "7", "8", "adults"};
  return v;
}

namespace detail {
inline void check_subset(const std::vector<std::string>& values,
                         const std::vector<std::string>& vocab,
                         const std::string& field,
                         const std::string& study_id) {
  if (values.empty())
    fail_validation("study '" + study_id + "': " + field + " is empty");
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (std::find(vocab.begin(), vocab.end(), v) == vocab.end())
      fail_validation("study '" + study_id + "': " + field + " value '" + v +
                      "' not in the closed vocabulary");
    if (!seen.insert(v).second)
      fail_validation("study '" + study_id + "': " + field + " value '" + v +
                      "' repeated");
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Study records

struct TimepointOutcome {
  int timepoint_index = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ArmData {
  std::string arm_id;
  Condition condition = Condition::treatment;
  int n = 0;
  std::vector<TimepointOutcome> outcomes;  // per-timepoint summary stats
  std::optional<double> t_statistic;
  std::optional<double> f_statistic;

  void check(const std::string& study_id) const {
    if (arm_id.empty())
      fail_validation("study '" + study_id + "': arm without id");
    if (n < 2)
      fail_validation("study '" + study_id + "': arm '" + arm_id +
                      "' has n = " + std::to_string(n) + " (need >= 2)");
    for (const auto& o : outcomes) {
      if (o.timepoint_index < 0)
        fail_validation("study '" + study_id + "': arm '" + arm_id +
                        "' has a negative timepoint index");
      if (!(o.sd > 0.0))
        fail_validation("study '" + study_id + "': arm '" + arm_id +
                        "' has sd <= 0 at timepoint " +
                        std::to_string(o.timepoint_index));
    }
  }
};

// Label-level reference to a coded effect. Numeric payloads live with the
// effect engine; the ledger tracks identity, dependence structure
// (group/outcome/timepoint) and whether the effect enters the analysis.
struct EffectRef {
  std::string effect_id;
  std::string group_label;
  std::string outcome_label;
  int timepoint_index = 0;
  bool analyzable = true;
};

struct StudyRecord {
  std::string study_id;
  std::string citation;
  Date publication_date;
  PublicationFormat publication_format = PublicationFormat::journal;
  int n_participants = 0;
  std::vector<std::string> isced_levels;
  std::vector<std::string> content_areas;
  std::vector<std::string> ai_purpose;
  std::vector<std::string> ai_role;
  std::vector<int> ai_system_modification;
  std::vector<ArmData> arms;
  std::vector<EffectRef> effects;
  ModeratorCodes codes;
  double pooled_g = 0.0;  // Table-1 pooled study effect, AI-positive

  void check(const Date& search_date) const {
    if (study_id.empty()) fail_validation("study with empty id");
    if (!publication_date.valid())
      fail_validation("study '" + study_id + "': invalid publication date");
    if (search_date < publication_date)
      fail_validation("study '" + study_id + "': publication date " +
                      publication_date.iso() + " is after the search date " +
                      search_date.iso());
    if (n_participants < 1)
      fail_validation("study '" + study_id + "': n_participants < 1");
    detail::check_subset(isced_levels, isced_levels_vocab(), "isced_levels",
                         study_id);
    detail::check_subset(content_areas, content_area_levels(), "content_areas",
                         study_id);
    detail::check_subset(ai_purpose, ai_purpose_levels(), "ai_purpose",
                         study_id);
    detail::check_subset(ai_role, ai_role_levels(), "ai_role", study_id);
    for (int m : ai_system_modification)
      if (m < 1)
        fail_validation("study '" + study_id +
                        "': ai_system_modification code < 1");
    if (effects.empty())
      fail_validation("study '" + study_id + "': no coded effects");
    std::set<std::string> ids;
    for (const auto& e : effects) {
      if (e.effect_id.empty())
        fail_validation("study '" + study_id + "': effect without id");
      if (!ids.insert(e.effect_id).second)
        fail_validation("study '" + study_id + "': duplicate effect id '" +
                        e.effect_id + "'");
    }
    bool has_treatment = false, has_control = false;
    for (const auto& a : arms) {
      a.check(study_id);
      if (a.condition == Condition::treatment)
        has_treatment = true;
      else
        has_control = true;
    }
    if (!has_treatment || !has_control)
      fail_validation("study '" + study_id +
                      "': needs at least one treatment and one control arm");
    if (codes.study_id != study_id)
      fail_validation("study '" + study_id +
                      "': moderator codes belong to study '" + codes.study_id +
                      "'");
    codes.check();
  }

  std::size_t n_effects_analyzable() const {
    std::size_t k = 0;
    for (const auto& e : effects)
      if (e.analyzable) ++k;
    return k;
  }
};

// ---------------------------------------------------------------------------
// PRISMA flow

struct PrismaFlow {
  long identified = 0;
  long screened = 0;
  long sought_fulltext = 0;
  long not_retrieved = 0;
  long assessed = 0;
  std::map<std::string, long> excluded_with_reasons;
  long included_studies = 0;
  long included_reports = 0;

  long excluded_total() const {
    long s = 0;
    for (const auto& [_, c] : excluded_with_reasons) s += c;
    return s;
  }

  void check() const {
    auto nonneg = [](long v, const char* name) {
      if (v < 0)
        fail_validation(std::string("prisma: ") + name + " is negative");
    };
    nonneg(identified, "identified");
    nonneg(screened, "screened");
    nonneg(sought_fulltext, "sought_fulltext");
    nonneg(not_retrieved, "not_retrieved");
    nonneg(assessed, "assessed");
    nonneg(included_studies, "included_studies");
    nonneg(included_reports, "included_reports");
    for (const auto& [r, c] : excluded_with_reasons) {
      if (r.empty()) fail_validation("prisma: empty exclusion reason");
      if (c < 0) fail_validation("prisma: negative count for reason '" + r + "'");
    }
    if (screened > identified)
      fail_validation("prisma: screened exceeds identified");
    if (sought_fulltext > screened)
      fail_validation("prisma: sought_fulltext exceeds screened");
    if (assessed != sought_fulltext - not_retrieved)
      fail_validation("prisma: assessed (" + std::to_string(assessed) +
                      ") != sought_fulltext - not_retrieved (" +
                      std::to_string(sought_fulltext - not_retrieved) + ")");
    if (included_studies > assessed)
      fail_validation("prisma: included_studies exceeds assessed");
    if (included_reports > assessed)
      fail_validation("prisma: included_reports exceeds assessed");
    if (excluded_total() != assessed - included_reports)
      fail_validation("prisma: exclusion reasons sum to " +
                      std::to_string(excluded_total()) +
                      ", expected assessed - included_reports = " +
                      std::to_string(assessed - included_reports));
  }
};

// ---------------------------------------------------------------------------
// Screening queue

enum class ScreenStatus {
  queued_title_abstract,
  queued_fulltext,
  excluded_title_abstract,
  excluded_fulltext,
  not_retrieved,
  included,
  duplicate,
  quarantined
};

inline std::string to_string(ScreenStatus s) {
  switch (s) {
    case ScreenStatus::queued_title_abstract: return "queued_title_abstract";
    case ScreenStatus::queued_fulltext: return "queued_fulltext";
    case ScreenStatus::excluded_title_abstract:
      return "excluded_title_abstract";
    case ScreenStatus::excluded_fulltext: return "excluded_fulltext";
    case ScreenStatus::not_retrieved: return "not_retrieved";
    case ScreenStatus::included: return "included";
    case ScreenStatus::duplicate: return "duplicate";
    case ScreenStatus::quarantined: return "quarantined";
  }
  fail_validation("unknown screening status");
}

inline ScreenStatus screen_status_from(const std::string& s) {
  for (ScreenStatus v :
       {ScreenStatus::queued_title_abstract, ScreenStatus::queued_fulltext,
        ScreenStatus::excluded_title_abstract, ScreenStatus::excluded_fulltext,
        ScreenStatus::not_retrieved, ScreenStatus::included,
        ScreenStatus::duplicate, ScreenStatus::quarantined})
    if (to_string(v) == s) return v;
  fail_validation("unknown screening status '" + s + "'");
}

struct ScreeningRecord {
  std::string record_id;
  std::string title;
  int year = 0;
  std::string date;    // as exported; may be empty for quarantined records
  std::string source;  // export provenance, e.g. "scopus"
  ScreenStatus status = ScreenStatus::queued_title_abstract;
  std::string reason;        // exclusion reason / quarantine cause
  std::string duplicate_of;  // record id this one duplicates
  bool re_inclusion = false; // resurfaced per the re-inclusion rules

  bool decided() const {
    return status != ScreenStatus::queued_title_abstract &&
           status != ScreenStatus::queued_fulltext;
  }
};

inline std::string dedup_key(const std::string& title, int year) {
  return normalize_title(title) + "|" + std::to_string(year);
}

// ---------------------------------------------------------------------------
// Version record

struct VersionLabel {
  int number = 0;
  int month = 0;
  int year2 = 0;  // two-digit year
};

inline std::string format_version_label(const VersionLabel& l) {
  if (l.number < 1) fail_validation("version number must be positive");
  if (l.month < 1 || l.month > 12)
    fail_validation("version label month out of range");
  if (l.year2 < 0 || l.year2 > 99)
    fail_validation("version label year out of range");
  char buf[32];
  std::snprintf(buf, sizeof(buf), "Version %d, %02d/%02d", l.number, l.month,
                l.year2);
  return buf;
}

inline VersionLabel parse_version_label(const std::string& s) {
  VersionLabel l;
  char extra = '\0';
  int got = std::sscanf(s.c_str(), "Version %d, %2d/%2d%c", &l.number,
                        &l.month, &l.year2, &extra);
  if (got != 3 || format_version_label(l) != s)
    fail_validation("version label '" + s +
                    "' does not match the pattern \"Version <N>, <MM>/<YY>\"");
  return l;
}

enum class VersionStatus { ongoing, retired };

inline std::string to_string(VersionStatus s) {
  return s == VersionStatus::ongoing ? "ongoing" : "retired";
}

inline VersionStatus version_status_from(const std::string& s) {
  if (s == "ongoing") return VersionStatus::ongoing;
  if (s == "retired") return VersionStatus::retired;
  fail_validation("unknown version status '" + s + "'");
}

struct VersionRecord {
  int version_number = 1;
  std::string version_label;
  Date search_date;
  Date next_search_date;
  Date next_version_date;
  VersionStatus status = VersionStatus::ongoing;
  std::vector<std::string> changelog;
  std::string ledger_snapshot_ref;   // self-hash recorded at seal time
  std::string results_snapshot_ref;  // sha256 of the results artifact

  void check() const {
    if (version_number < 1)
      fail_validation("version_number must be positive");
    VersionLabel l = parse_version_label(version_label);
    if (l.number != version_number)
      fail_validation("version label '" + version_label +
                      "' does not carry version number " +
                      std::to_string(version_number));
    if (!search_date.valid())
      fail_validation("version: invalid search date");
    if (changelog.empty())
      fail_validation("version: changelog must declare its changes");
  }
};

// Fit results pinned into the ledger so reports and diffs read stored
// numbers instead of recomputing.
struct ResultsSnapshot {
  double pooled_mean = 0.0;
  double pooled_median = 0.0;
  double cri_lo = 0.0;
  double cri_hi = 0.0;
  double tau_median = 0.0;
  double omega_median = 0.0;
  long n_effects_analyzed = 0;
  bool diagnostics_pass = false;
};

// ---------------------------------------------------------------------------
// The ledger

struct Ledger {
  int ledger_schema = 1;
  VersionRecord version;
  std::string search_string;  // stored verbatim, never interpreted
  PrismaFlow prisma;
  // Flow counted before per-record logging began (external screening
  // tooling); prisma must always equal baseline + the screening queue.
  PrismaFlow prisma_baseline;
  std::vector<ScreeningRecord> screening;
  std::vector<StudyRecord> studies;
  std::optional<ResultsSnapshot> results;

  ScreeningRecord* find_record(const std::string& record_id) {
    for (auto& r : screening)
      if (r.record_id == record_id) return &r;
    return nullptr;
  }
  const StudyRecord* find_study(const std::string& study_id) const {
    for (const auto& s : studies)
      if (s.study_id == study_id) return &s;
    return nullptr;
  }

  // Structural validation. When the screening queue is populated, the PRISMA
  // counts must be derivable from it; a ledger bootstrapped from external
  // screening tooling carries counts without per-record rows.
  void validate() const {
    if (ledger_schema != 1)
      fail_validation("unsupported ledger schema " +
                      std::to_string(ledger_schema));
    version.check();
    prisma.check();

    std::set<std::string> study_ids, effect_ids, record_ids;
    for (const auto& s : studies) {
      if (!study_ids.insert(s.study_id).second)
        fail_validation("duplicate study id '" + s.study_id + "'");
      s.check(version.search_date);
      for (const auto& e : s.effects)
        if (!effect_ids.insert(e.effect_id).second)
          fail_validation("duplicate effect id '" + e.effect_id + "'");
    }

    long identified = prisma_baseline.identified;
    long screened = prisma_baseline.screened;
    long sought = prisma_baseline.sought_fulltext;
    long not_retrieved = prisma_baseline.not_retrieved;
    long included = prisma_baseline.included_reports;
    std::map<std::string, long> excluded = prisma_baseline.excluded_with_reasons;
    for (const auto& r : screening) {
      if (r.record_id.empty()) fail_validation("screening record without id");
      if (!record_ids.insert(r.record_id).second)
        fail_validation("duplicate screening record id '" + r.record_id + "'");
      ++identified;
      if (r.status != ScreenStatus::duplicate &&
          r.status != ScreenStatus::quarantined)
        ++screened;
      switch (r.status) {
        case ScreenStatus::queued_fulltext:
          ++sought;
          break;
        case ScreenStatus::not_retrieved:
          ++sought;
          ++not_retrieved;
          break;
        case ScreenStatus::excluded_fulltext:
          ++sought;
          if (r.reason.empty())
            fail_validation("record '" + r.record_id +
                            "' excluded at fulltext without a reason");
          ++excluded[r.reason];
          break;
        case ScreenStatus::included:
          ++sought;
          ++included;
          break;
        default:
          break;
      }
    }
    if (identified != prisma.identified || screened != prisma.screened ||
        sought != prisma.sought_fulltext ||
        not_retrieved != prisma.not_retrieved ||
        included != prisma.included_reports ||
        excluded != prisma.excluded_with_reasons)
      fail_validation(
          "prisma counts do not match the baseline plus the screening queue");
  }

  // Analysis gate: everything validate() checks, plus the dataset must be
  // non-trivial and fully reconciled.
  void validate_for_analysis() const {
    validate();
    if (studies.empty()) fail_validation("ledger contains no included studies");
    if (static_cast<long>(studies.size()) != prisma.included_studies)
      fail_validation("ledger holds " + std::to_string(studies.size()) +
                      " studies but prisma.included_studies = " +
                      std::to_string(prisma.included_studies));
    for (const auto& s : studies)
      if (s.n_effects_analyzable() == 0)
        fail_validation("study '" + s.study_id + "' has no analyzable effect");
  }
};

struct LedgerTotals {
  long n_studies = 0;
  long n_effects_coded = 0;
  long n_participants = 0;
  bool operator==(const LedgerTotals&) const = default;
};

inline LedgerTotals ledger_totals(const Ledger& ledger) {
  LedgerTotals t;
  for (const auto& s : ledger.studies) {
    t.n_studies += 1;
    t.n_effects_coded += static_cast<long>(s.effects.size());
    t.n_participants += s.n_participants;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Search import

struct SearchRecord {
  std::string record_id;
  std::string title;
  std::string date;  // as exported
  std::string source;
};

struct ImportReport {
  std::vector<std::string> queued;
  std::vector<std::pair<std::string, std::string>> duplicates;  // id, dup of
  std::vector<std::pair<std::string, std::string>> quarantined; // id, cause
  std::vector<std::string> re_included;
};

inline ImportReport import_search_results(Ledger& ledger,
                                          const std::vector<SearchRecord>& batch,
                                          const Ledger* prior = nullptr) {
  ImportReport report;

  std::map<std::string, std::string> known;  // dedup key -> record id
  for (const auto& r : ledger.screening)
    if (r.year != 0) known.emplace(dedup_key(r.title, r.year), r.record_id);

  std::map<std::string, const ScreeningRecord*> prior_records;
  if (prior)
    for (const auto& r : prior->screening)
      if (r.year != 0) prior_records.emplace(dedup_key(r.title, r.year), &r);

  for (const auto& in : batch) {
    if (in.record_id.empty())
      fail_validation("import: record with empty id");
    if (ledger.find_record(in.record_id))
      fail_validation("import: record id '" + in.record_id +
                      "' already present in the ledger");

    ScreeningRecord rec;
    rec.record_id = in.record_id;
    rec.title = in.title;
    rec.date = in.date;
    rec.source = in.source;
    ledger.prisma.identified += 1;

    if (trim(in.title).empty()) {
      rec.status = ScreenStatus::quarantined;
      rec.reason = "missing title";
      report.quarantined.emplace_back(in.record_id, rec.reason);
      ledger.screening.push_back(std::move(rec));
      continue;
    }
    std::optional<Date> d;
    if (!trim(in.date).empty()) d = try_parse_date(in.date);
    if (!d) {
      rec.status = ScreenStatus::quarantined;
      rec.reason = trim(in.date).empty() ? "missing date" : "unparseable date";
      report.quarantined.emplace_back(in.record_id, rec.reason);
      ledger.screening.push_back(std::move(rec));
      continue;
    }
    rec.year = d->year;

    const std::string key = dedup_key(rec.title, rec.year);
    if (auto it = known.find(key); it != known.end()) {
      rec.status = ScreenStatus::duplicate;
      rec.duplicate_of = it->second;
      report.duplicates.emplace_back(in.record_id, it->second);
      ledger.screening.push_back(std::move(rec));
      continue;
    }
    if (auto it = prior_records.find(key); it != prior_records.end()) {
      // Cross-version dedup: records already handled in an earlier version
      // are duplicates, except reports that could not be retrieved then —
      // those resurface for another attempt.
      if (it->second->status == ScreenStatus::not_retrieved) {
        rec.re_inclusion = true;
        report.re_included.push_back(in.record_id);
      } else {
        rec.status = ScreenStatus::duplicate;
        rec.duplicate_of = it->second->record_id;
        report.duplicates.emplace_back(in.record_id, it->second->record_id);
        ledger.screening.push_back(std::move(rec));
        continue;
      }
    }

    rec.status = ScreenStatus::queued_title_abstract;
    known.emplace(key, rec.record_id);
    report.queued.push_back(in.record_id);
    ledger.prisma.screened += 1;
    ledger.screening.push_back(std::move(rec));
  }
  return report;
}

inline std::vector<SearchRecord> search_records_from_csv(
    const csv::Table& table) {
  const int id_col = table.column("record_id");
  const int title_col = table.column("title");
  const int date_col = table.column("date");
  const int source_col = table.column("source");
  if (id_col < 0 || title_col < 0 || date_col < 0)
    fail_validation(
        "search export: need columns record_id, title, date (and optionally "
        "source)");
  std::vector<SearchRecord> out;
  for (const auto& row : table.rows) {
    SearchRecord r;
    r.record_id = row[id_col];
    r.title = row[title_col];
    r.date = row[date_col];
    if (source_col >= 0) r.source = row[source_col];
    out.push_back(std::move(r));
  }
  return out;
}

// Minimal RIS reader: "TAG  - value" lines, records closed by ER. Only the
// tags the import needs are interpreted.
inline std::vector<SearchRecord> search_records_from_ris(
    const std::string& text, const std::string& source = "ris") {
  std::vector<SearchRecord> out;
  SearchRecord cur;
  bool open = false;
  std::size_t line_no = 0, auto_id = 0;
  std::istringstream in(text);
  std::string line;
  auto flush = [&]() {
    if (!open) return;
    if (cur.record_id.empty())
      cur.record_id = source + "-" + std::to_string(++auto_id);
    cur.source = source;
    out.push_back(cur);
    cur = SearchRecord{};
    open = false;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line.size() < 6 || line.substr(2, 4) != "  - ")
      fail_validation("ris line " + std::to_string(line_no) +
                      ": expected 'TG  - value'");
    const std::string tag = line.substr(0, 2);
    const std::string value = trim(line.substr(6));
    if (tag == "ER") {
      flush();
      continue;
    }
    open = true;
    if (tag == "TI" || tag == "T1") {
      cur.title = value;
    } else if (tag == "DA") {
      cur.date = value;
    } else if (tag == "PY") {
      if (cur.date.empty()) cur.date = value + "-01-01";
    } else if (tag == "ID" || tag == "AN") {
      cur.record_id = value;
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Screening decisions

enum class ScreenStage { title_abstract, fulltext };

inline std::string to_string(ScreenStage s) {
  return s == ScreenStage::title_abstract ? "title_abstract" : "fulltext";
}

inline ScreenStage screen_stage_from(const std::string& s) {
  if (s == "title_abstract") return ScreenStage::title_abstract;
  if (s == "fulltext") return ScreenStage::fulltext;
  fail_validation("unknown screening stage '" + s + "'");
}

struct DecisionEntry {
  std::string record_id;
  std::string stage;     // title_abstract | fulltext
  std::string decision;  // exclude | advance | include | not_retrieved
  std::string reason;
};

// Apply one screening decision. Decisions are immutable within a version:
// a record that has left the named stage can no longer be decided.
inline PrismaFlow record_screening_decision(Ledger& ledger,
                                            const DecisionEntry& d) {
  ScreeningRecord* rec = ledger.find_record(d.record_id);
  if (!rec)
    fail_validation("screening decision for unknown record '" + d.record_id +
                    "'");
  const ScreenStage stage = screen_stage_from(d.stage);

  if (stage == ScreenStage::title_abstract) {
    if (rec->status != ScreenStatus::queued_title_abstract)
      fail_validation("record '" + d.record_id +
                      "' is not at title/abstract screening (status " +
                      to_string(rec->status) + ")");
    if (d.decision == "exclude") {
      rec->status = ScreenStatus::excluded_title_abstract;
      rec->reason = d.reason;
    } else if (d.decision == "advance") {
      rec->status = ScreenStatus::queued_fulltext;
      ledger.prisma.sought_fulltext += 1;
      ledger.prisma.assessed = ledger.prisma.sought_fulltext -
                               ledger.prisma.not_retrieved;
    } else {
      fail_validation("title/abstract decision must be exclude or advance, "
                      "got '" + d.decision + "'");
    }
    return ledger.prisma;
  }

  if (rec->status != ScreenStatus::queued_fulltext)
    fail_validation("record '" + d.record_id +
                    "' is not at fulltext assessment (status " +
                    to_string(rec->status) + ")");
  if (d.decision == "include") {
    rec->status = ScreenStatus::included;
    ledger.prisma.included_reports += 1;
    ledger.prisma.included_studies += 1;
  } else if (d.decision == "exclude") {
    if (trim(d.reason).empty())
      fail_validation("fulltext exclusion of '" + d.record_id +
                      "' needs a reason");
    rec->status = ScreenStatus::excluded_fulltext;
    rec->reason = d.reason;
    ledger.prisma.excluded_with_reasons[d.reason] += 1;
  } else if (d.decision == "not_retrieved") {
    rec->status = ScreenStatus::not_retrieved;
    ledger.prisma.not_retrieved += 1;
    ledger.prisma.assessed = ledger.prisma.sought_fulltext -
                             ledger.prisma.not_retrieved;
  } else {
    fail_validation("fulltext decision must be include, exclude or "
                    "not_retrieved, got '" + d.decision + "'");
  }
  return ledger.prisma;
}

inline void replay_decisions(Ledger& ledger,
                             const std::vector<DecisionEntry>& log) {
  for (const auto& d : log) record_screening_decision(ledger, d);
}

inline std::string decision_log_to_jsonl(const std::vector<DecisionEntry>& log) {
  std::string out;
  for (const auto& d : log) {
    json j;
    j["record_id"] = d.record_id;
    j["stage"] = d.stage;
    j["decision"] = d.decision;
    j["reason"] = d.reason;
    out += j.dump();
    out += "\n";
  }
  return out;
}

inline std::vector<DecisionEntry> decision_log_from_jsonl(
    const std::string& text) {
  std::vector<DecisionEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail_validation("decision log line " + std::to_string(line_no) +
                      ": invalid JSON");
    DecisionEntry d;
    d.record_id = j.value("record_id", "");
    d.stage = j.value("stage", "");
    d.decision = j.value("decision", "");
    d.reason = j.value("reason", "");
    if (d.record_id.empty() || d.stage.empty() || d.decision.empty())
      fail_validation("decision log line " + std::to_string(line_no) +
                      ": record_id, stage and decision are required");
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization (ordered, diff-stable)

namespace detail {

// Unset dates (Date{}) round-trip as "" so optional schedule fields survive
// save/load.
inline json date_json(const Date& d) { return d == Date{} ? "" : d.iso(); }
inline Date date_from_json(const json& j, const char* what) {
  if (!j.is_string()) fail_validation(std::string(what) + ": expected a date string");
  const std::string s = j.get<std::string>();
  if (s.empty()) return Date{};
  return parse_date(s);
}

inline json code_value_json(const ModeratorField& f, const CodeValue& v) {
  if (v.missing) return "missing";
  if (f.kind == FieldKind::continuous) return v.number;
  if (f.multi_select) return v.levels;
  return v.levels.front();
}

inline CodeValue code_value_from_json(const ModeratorField& f, const json& j) {
  if (j.is_string() && j.get<std::string>() == "missing")
    return CodeValue::make_missing();
  if (f.kind == FieldKind::continuous) {
    if (!j.is_number())
      fail_validation("moderator '" + f.id + "': expected a number");
    return CodeValue::of_number(j.get<double>());
  }
  if (f.multi_select) {
    if (!j.is_array())
      fail_validation("moderator '" + f.id + "': expected an array of levels");
    return CodeValue::of_levels(j.get<std::vector<std::string>>());
  }
  if (!j.is_string())
    fail_validation("moderator '" + f.id + "': expected a level string");
  return CodeValue::of_level(j.get<std::string>());
}

inline json prisma_to_json(const PrismaFlow& p) {
  json j;
  j["identified"] = p.identified;
  j["screened"] = p.screened;
  j["sought_fulltext"] = p.sought_fulltext;
  j["not_retrieved"] = p.not_retrieved;
  j["assessed"] = p.assessed;
  json ex;
  for (const auto& [r, c] : p.excluded_with_reasons) ex[r] = c;
  j["excluded_with_reasons"] = std::move(ex);
  j["included_studies"] = p.included_studies;
  j["included_reports"] = p.included_reports;
  return j;
}

inline PrismaFlow prisma_from_json(const json& j) {
  PrismaFlow p;
  p.identified = j.value("identified", 0L);
  p.screened = j.value("screened", 0L);
  p.sought_fulltext = j.value("sought_fulltext", 0L);
  p.not_retrieved = j.value("not_retrieved", 0L);
  p.assessed = j.value("assessed", 0L);
  if (j.contains("excluded_with_reasons"))
    for (const auto& [r, c] : j.at("excluded_with_reasons").items())
      p.excluded_with_reasons[r] = c.get<long>();
  p.included_studies = j.value("included_studies", 0L);
  p.included_reports = j.value("included_reports", 0L);
  return p;
}

}  // namespace detail

inline json to_json(const ModeratorCodes& codes) {
  json j;
  j["schema_version"] = codes.schema_version;
  for (const auto& f : moderator_schema())
    j[f.id] = detail::code_value_json(f, codes.at(f.id));
  return j;
}

inline ModeratorCodes moderator_codes_from_json(const std::string& study_id,
                                                const json& j) {
  ModeratorCodes codes;
  codes.study_id = study_id;
  codes.schema_version = j.value("schema_version", 0);
  for (const auto& f : moderator_schema()) {
    if (!j.contains(f.id))
      fail_validation("study '" + study_id + "': moderator '" + f.id +
                      "' absent from codes");
    codes.values[f.id] = detail::code_value_from_json(f, j.at(f.id));
  }
  return codes;
}

inline json to_json(const Ledger& ledger) {
  json j;
  j["ledger_schema"] = ledger.ledger_schema;

  json v;
  v["version_number"] = ledger.version.version_number;
  v["version_label"] = ledger.version.version_label;
  v["search_date"] = detail::date_json(ledger.version.search_date);
  v["next_search_date"] = detail::date_json(ledger.version.next_search_date);
  v["next_version_date"] = detail::date_json(ledger.version.next_version_date);
  v["status"] = to_string(ledger.version.status);
  v["changelog"] = ledger.version.changelog;
  v["ledger_snapshot_ref"] = ledger.version.ledger_snapshot_ref;
  v["results_snapshot_ref"] = ledger.version.results_snapshot_ref;
  j["version"] = std::move(v);

  j["search_string"] = ledger.search_string;

  j["prisma"] = detail::prisma_to_json(ledger.prisma);
  j["prisma_baseline"] = detail::prisma_to_json(ledger.prisma_baseline);

  json screening = json::array();
  for (const auto& r : ledger.screening) {
    json s;
    s["record_id"] = r.record_id;
    s["title"] = r.title;
    s["year"] = r.year;
    s["date"] = r.date;
    s["source"] = r.source;
    s["status"] = to_string(r.status);
    s["reason"] = r.reason;
    s["duplicate_of"] = r.duplicate_of;
    s["re_inclusion"] = r.re_inclusion;
    screening.push_back(std::move(s));
  }
  j["screening"] = std::move(screening);

  json studies = json::array();
  for (const auto& s : ledger.studies) {
    json sj;
    sj["study_id"] = s.study_id;
    sj["citation"] = s.citation;
    sj["publication_date"] = detail::date_json(s.publication_date);
    sj["publication_format"] = to_string(s.publication_format);
    sj["n_participants"] = s.n_participants;
    sj["isced_levels"] = s.isced_levels;
    sj["content_areas"] = s.content_areas;
    sj["ai_purpose"] = s.ai_purpose;
    sj["ai_role"] = s.ai_role;
    sj["ai_system_modification"] = s.ai_system_modification;

    json arms = json::array();
    for (const auto& a : s.arms) {
      json aj;
      aj["arm_id"] = a.arm_id;
      aj["condition"] = to_string(a.condition);
      aj["n"] = a.n;
      json outs = json::array();
      for (const auto& o : a.outcomes) {
        json oj;
        oj["timepoint_index"] = o.timepoint_index;
        oj["mean"] = o.mean;
        oj["sd"] = o.sd;
        outs.push_back(std::move(oj));
      }
      aj["outcomes"] = std::move(outs);
      if (a.t_statistic) aj["t_statistic"] = *a.t_statistic;
      if (a.f_statistic) aj["f_statistic"] = *a.f_statistic;
      arms.push_back(std::move(aj));
    }
    sj["arms"] = std::move(arms);

    json effects = json::array();
    for (const auto& e : s.effects) {
      json ej;
      ej["effect_id"] = e.effect_id;
      ej["group_label"] = e.group_label;
      ej["outcome_label"] = e.outcome_label;
      ej["timepoint_index"] = e.timepoint_index;
      ej["analyzable"] = e.analyzable;
      effects.push_back(std::move(ej));
    }
    sj["effects"] = std::move(effects);

    sj["codes"] = to_json(s.codes);
    sj["pooled_g"] = s.pooled_g;
    studies.push_back(std::move(sj));
  }
  j["studies"] = std::move(studies);

  if (ledger.results) {
    json r;
    r["pooled_mean"] = ledger.results->pooled_mean;
    r["pooled_median"] = ledger.results->pooled_median;
    r["cri_lo"] = ledger.results->cri_lo;
    r["cri_hi"] = ledger.results->cri_hi;
    r["tau_median"] = ledger.results->tau_median;
    r["omega_median"] = ledger.results->omega_median;
    r["n_effects_analyzed"] = ledger.results->n_effects_analyzed;
    r["diagnostics_pass"] = ledger.results->diagnostics_pass;
    j["results"] = std::move(r);
  }
  return j;
}

inline Ledger ledger_from_json(const json& j) {
  Ledger ledger;
  ledger.ledger_schema = j.value("ledger_schema", 0);

  const json& v = j.at("version");
  ledger.version.version_number = v.value("version_number", 0);
  ledger.version.version_label = v.value("version_label", "");
  ledger.version.search_date = detail::date_from_json(v.at("search_date"),
                                                      "search_date");
  ledger.version.next_search_date =
      detail::date_from_json(v.at("next_search_date"), "next_search_date");
  ledger.version.next_version_date =
      detail::date_from_json(v.at("next_version_date"), "next_version_date");
  ledger.version.status = version_status_from(v.value("status", ""));
  ledger.version.changelog = v.value("changelog", std::vector<std::string>{});
  ledger.version.ledger_snapshot_ref = v.value("ledger_snapshot_ref", "");
  ledger.version.results_snapshot_ref = v.value("results_snapshot_ref", "");

  ledger.search_string = j.value("search_string", "");

  ledger.prisma = detail::prisma_from_json(j.at("prisma"));
  if (j.contains("prisma_baseline"))
    ledger.prisma_baseline = detail::prisma_from_json(j.at("prisma_baseline"));

  for (const auto& s : j.value("screening", json::array())) {
    ScreeningRecord r;
    r.record_id = s.value("record_id", "");
    r.title = s.value("title", "");
    r.year = s.value("year", 0);
    r.date = s.value("date", "");
    r.source = s.value("source", "");
    r.status = screen_status_from(s.value("status", ""));
    r.reason = s.value("reason", "");
    r.duplicate_of = s.value("duplicate_of", "");
    r.re_inclusion = s.value("re_inclusion", false);
    ledger.screening.push_back(std::move(r));
  }

  for (const auto& sj : j.value("studies", json::array())) {
    StudyRecord s;
    s.study_id = sj.value("study_id", "");
    s.citation = sj.value("citation", "");
    s.publication_date =
        detail::date_from_json(sj.at("publication_date"), "publication_date");
    s.publication_format =
        publication_format_from(sj.value("publication_format", ""));
    s.n_participants = sj.value("n_participants", 0);
    s.isced_levels = sj.value("isced_levels", std::vector<std::string>{});
    s.content_areas = sj.value("content_areas", std::vector<std::string>{});
    s.ai_purpose = sj.value("ai_purpose", std::vector<std::string>{});
    s.ai_role = sj.value("ai_role", std::vector<std::string>{});
    s.ai_system_modification =
        sj.value("ai_system_modification", std::vector<int>{});

    for (const auto& aj : sj.value("arms", json::array())) {
      ArmData a;
      a.arm_id = aj.value("arm_id", "");
      a.condition = condition_from(aj.value("condition", ""));
      a.n = aj.value("n", 0);
      for (const auto& oj : aj.value("outcomes", json::array())) {
        TimepointOutcome o;
        o.timepoint_index = oj.value("timepoint_index", 0);
        o.mean = oj.value("mean", 0.0);
        o.sd = oj.value("sd", 0.0);
        a.outcomes.push_back(o);
      }
      if (aj.contains("t_statistic"))
        a.t_statistic = aj.at("t_statistic").get<double>();
      if (aj.contains("f_statistic"))
        a.f_statistic = aj.at("f_statistic").get<double>();
      s.arms.push_back(std::move(a));
    }

    for (const auto& ej : sj.value("effects", json::array())) {
      EffectRef e;
      e.effect_id = ej.value("effect_id", "");
      e.group_label = ej.value("group_label", "");
      e.outcome_label = ej.value("outcome_label", "");
      e.timepoint_index = ej.value("timepoint_index", 0);
      e.analyzable = ej.value("analyzable", true);
      s.effects.push_back(std::move(e));
    }

    if (!sj.contains("codes"))
      fail_validation("study '" + s.study_id + "': codes block missing");
    s.codes = moderator_codes_from_json(s.study_id, sj.at("codes"));
    s.pooled_g = sj.value("pooled_g", 0.0);
    ledger.studies.push_back(std::move(s));
  }

  if (j.contains("results")) {
    const json& r = j.at("results");
    ResultsSnapshot rs;
    rs.pooled_mean = r.value("pooled_mean", 0.0);
    rs.pooled_median = r.value("pooled_median", 0.0);
    rs.cri_lo = r.value("cri_lo", 0.0);
    rs.cri_hi = r.value("cri_hi", 0.0);
    rs.tau_median = r.value("tau_median", 0.0);
    rs.omega_median = r.value("omega_median", 0.0);
    rs.n_effects_analyzed = r.value("n_effects_analyzed", 0L);
    rs.diagnostics_pass = r.value("diagnostics_pass", false);
    ledger.results = rs;
  }
  return ledger;
}

inline std::string canonical_text(const Ledger& ledger) {
  return to_json(ledger).dump(2) + "\n";
}

// Snapshot identity: hash of the canonical text with the (self-referential)
// snapshot fields blanked.
inline std::string snapshot_hash(const Ledger& ledger) {
  Ledger copy = ledger;
  copy.version.ledger_snapshot_ref = "";
  copy.version.results_snapshot_ref = "";
  return sha256_hex(canonical_text(copy));
}

inline void save_ledger(const Ledger& ledger, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_validation("cannot write ledger file '" + path + "'");
  out << canonical_text(ledger);
}

inline Ledger load_ledger(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_validation("cannot read ledger file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded())
    fail_validation("ledger file '" + path + "' is not valid JSON");
  return ledger_from_json(j);
}

// ---------------------------------------------------------------------------
// Analysis dataset

// Study-level analysis effects reconstructed from the ledger's pooled study
// effects: one effect per study, sampling variance approximated as
// 4/n + g^2/(2n) (equal-arm split), already AI-positive oriented.
inline std::vector<EffectEstimate> reconstruction_effects(
    const Ledger& ledger) {
  std::vector<EffectEstimate> out;
  for (const auto& s : ledger.studies) {
    EffectEstimate e;
    e.effect_id = s.study_id + ":pooled";
    e.study_id = s.study_id;
    e.g = s.pooled_g;
    const double n = static_cast<double>(s.n_participants);
    e.var_g = 4.0 / n + s.pooled_g * s.pooled_g / (2.0 * n);
    e.group_label = "pooled";
    e.outcome_label = "pooled";
    e.timepoint_index = 0;
    e.derivation = Derivation::study_pooled;
    e.oriented = true;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace livingmeta

#endif
