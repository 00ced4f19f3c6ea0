#ifndef LIVINGMETA_LIVING_HPP
#define LIVINGMETA_LIVING_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "livingmeta/common.hpp"
#include "livingmeta/covariance.hpp"
#include "livingmeta/csv.hpp"
#include "livingmeta/ledger.hpp"
#include "livingmeta/model.hpp"
#include "livingmeta/moderators.hpp"
#include "livingmeta/rng.hpp"
#include "livingmeta/sampler.hpp"
#include "livingmeta/summary.hpp"

// Living-review lifecycle: moderator gating, cumulative-evidence refits,
// version sealing, bumping, retirement, and inter-version diffs.

namespace livingmeta {

// ---------------------------------------------------------------------------
// Moderator gating

inline constexpr long kCategoricalGate = 10;
inline constexpr long kContinuousGate = 20;

struct LevelCount {
  std::string level;
  long count = 0;
};

struct GateResult {
  std::string moderator_id;
  FieldKind kind = FieldKind::categorical;
  std::vector<LevelCount> level_counts;  // categorical: fixed vocabulary order
  long study_count = 0;                  // continuous: studies with a value
  bool eligible = false;
  std::string deficit;  // empty when eligible
};

// Gate decision from raw per-level counts; the vocabulary is fixed, so every
// level appears even at count zero and adding a study can only raise counts.
inline GateResult gate_categorical(const std::string& moderator_id,
                                   const std::vector<LevelCount>& counts) {
  if (counts.empty()) fail_validation("gate: no levels for '" + moderator_id + "'");
  GateResult r;
  r.moderator_id = moderator_id;
  r.kind = FieldKind::categorical;
  r.level_counts = counts;
  const LevelCount* worst = &counts.front();
  for (const auto& lc : counts)
    if (lc.count < worst->count) worst = &lc;
  r.eligible = worst->count >= kCategoricalGate;
  if (!r.eligible)
    r.deficit = "level '" + worst->level + "' has " +
                std::to_string(worst->count) + " of " +
                std::to_string(kCategoricalGate) + " required studies";
  return r;
}

inline GateResult gate_continuous(const std::string& moderator_id,
                                  long study_count) {
  GateResult r;
  r.moderator_id = moderator_id;
  r.kind = FieldKind::continuous;
  r.study_count = study_count;
  r.eligible = study_count >= kContinuousGate;
  if (!r.eligible)
    r.deficit = std::to_string(study_count) + " of " +
                std::to_string(kContinuousGate) + " required studies";
  return r;
}

// Count coded studies in the ledger for one schema moderator. Missing codes
// are excluded; multi-select codes count toward each selected level.
inline GateResult gate_moderator(const Ledger& ledger,
                                 const std::string& moderator_id) {
  const ModeratorField* field = find_moderator(moderator_id);
  if (field == nullptr)
    fail_validation("unknown moderator '" + moderator_id + "'");

  if (field->kind == FieldKind::continuous) {
    long n = 0;
    for (const auto& s : ledger.studies)
      if (!s.codes.at(moderator_id).missing) ++n;
    return gate_continuous(moderator_id, n);
  }

  std::vector<LevelCount> counts;
  for (const auto& level : field->levels) counts.push_back({level, 0});
  for (const auto& s : ledger.studies) {
    const CodeValue& v = s.codes.at(moderator_id);
    if (v.missing) continue;
    for (const auto& coded : v.levels)
      for (auto& lc : counts)
        if (lc.level == coded) ++lc.count;
  }
  return gate_categorical(moderator_id, counts);
}

inline std::vector<GateResult> gate_all(const Ledger& ledger) {
  std::vector<GateResult> out;
  for (const auto& f : moderator_schema())
    out.push_back(gate_moderator(ledger, f.id));
  return out;
}

inline json gates_json(const std::vector<GateResult>& gates) {
  json arr = json::array();
  for (const auto& g : gates) {
    json j;
    j["moderator"] = g.moderator_id;
    j["kind"] = g.kind == FieldKind::categorical ? "categorical" : "continuous";
    if (g.kind == FieldKind::categorical) {
      json levels = json::array();
      for (const auto& lc : g.level_counts) {
        json l;
        l["level"] = lc.level;
        l["studies"] = lc.count;
        levels.push_back(l);
      }
      j["levels"] = levels;
    } else {
      j["studies"] = g.study_count;
    }
    j["eligible"] = g.eligible;
    j["deficit"] = g.deficit;
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Cumulative-evidence trajectory

struct CumulativePoint {
  Date cutoff;
  long n_studies = 0;
  long n_effects = 0;
  double median = 0.0;
  double cri_lo = 0.0;
  double cri_hi = 0.0;
  double precision = 0.0;  // summed precision of the studies added here
};

struct CumulativeTrajectory {
  std::vector<CumulativePoint> points;
};

namespace detail {
inline constexpr std::uint64_t kCumulativeSalt = 0x63756d756c000000ull;
}

// One full refit per distinct publication date, each including every study
// published on or before the cutoff. The final point reuses the master seed
// unchanged, so it reproduces the standalone full-data fit bit for bit.
inline CumulativeTrajectory cumulative_fit(const Ledger& ledger,
                                           const ModelSpec& spec,
                                           const McmcConfig& cfg,
                                           const CovarianceSpec& cov) {
  if (ledger.studies.empty()) fail_validation("cumulative fit: no studies");
  std::string undated;
  for (const auto& s : ledger.studies)
    if (!s.publication_date.valid())
      undated += (undated.empty() ? "" : ", ") + s.study_id;
  if (!undated.empty())
    fail_validation("cumulative fit: studies missing publication dates: " +
                    undated);

  std::vector<Date> cutoffs;
  for (const auto& s : ledger.studies) cutoffs.push_back(s.publication_date);
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  const std::vector<EffectEstimate> all_effects = reconstruction_effects(ledger);

  CumulativeTrajectory out;
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    const Date& cutoff = cutoffs[i];
    std::vector<EffectEstimate> subset;
    std::vector<std::string> added;
    for (std::size_t k = 0; k < all_effects.size(); ++k) {
      const Date& d = ledger.studies[k].publication_date;
      if (d <= cutoff) subset.push_back(all_effects[k]);
      if (d == cutoff) added.push_back(ledger.studies[k].study_id);
    }

    SamplingCovariance vcov = build_vcov(subset, cov);
    Model model(vcov, spec);
    McmcConfig point_cfg = cfg;
    if (i + 1 < cutoffs.size())
      point_cfg.master_seed =
          mix_seed(cfg.master_seed, detail::kCumulativeSalt + i);
    PosteriorDraws draws = fit(model, point_cfg);
    PosteriorSummary summary = summarize(draws);
    const ParameterSummary& mu = summary.for_parameter("mu");

    CumulativePoint p;
    p.cutoff = cutoff;
    p.n_studies = static_cast<long>(subset.size());
    p.n_effects = 0;
    for (const auto& s : ledger.studies)
      if (s.publication_date <= cutoff)
        p.n_effects += static_cast<long>(s.n_effects_analyzable());
    p.median = mu.median;
    p.cri_lo = mu.cri_lo;
    p.cri_hi = mu.cri_hi;
    for (const auto& id : added) p.precision += vcov.study_precision(id);
    out.points.push_back(p);
  }
  return out;
}

inline std::string trajectory_to_csv(const CumulativeTrajectory& t) {
  csv::Writer w;
  w.row({"date", "n_studies", "median", "lo95", "hi95", "precision"});
  for (const auto& p : t.points)
    w.row({p.cutoff.iso(), std::to_string(p.n_studies), fmt_full(p.median),
           fmt_full(p.cri_lo), fmt_full(p.cri_hi), fmt_full(p.precision)});
  return w.str();
}

// ---------------------------------------------------------------------------
// Sealing, bumping, retiring

inline bool is_sealed(const Ledger& ledger) {
  return !ledger.version.ledger_snapshot_ref.empty();
}

// Pin the ledger's content hash into its own version record. Idempotent on
// an unchanged ledger; refuses to re-seal changed content.
inline void seal_ledger(Ledger& ledger) {
  const std::string h = snapshot_hash(ledger);
  if (is_sealed(ledger)) {
    if (ledger.version.ledger_snapshot_ref != h)
      fail_integrity("ledger content changed since it was sealed as '" +
                     ledger.version.version_label + "'");
    return;
  }
  ledger.version.ledger_snapshot_ref = h;
}

inline void verify_seal(const Ledger& ledger) {
  if (!is_sealed(ledger))
    fail_integrity("version '" + ledger.version.version_label +
                   "' is not sealed");
  if (snapshot_hash(ledger) != ledger.version.ledger_snapshot_ref)
    fail_integrity("snapshot hash mismatch for '" +
                   ledger.version.version_label + "'");
}

struct VersionDates {
  Date search_date;
  Date next_search_date;
  Date next_version_date;
};

// Open the successor version: number +1, label taken from the predecessor's
// scheduled next-version month, changelog from the declared changes. The
// predecessor must be sealed and ongoing; the successor starts unsealed with
// no pinned results.
inline Ledger bump_version(const Ledger& prev,
                           const std::vector<std::string>& changes,
                           const VersionDates& dates) {
  if (prev.version.status == VersionStatus::retired)
    fail_validation("cannot bump retired version '" +
                    prev.version.version_label + "'");
  if (changes.empty())
    fail_validation("a new version must declare its changes");
  verify_seal(prev);
  if (!dates.search_date.valid())
    fail_validation("bump: invalid search date");

  const Date& label_month = prev.version.next_version_date;
  if (!label_month.valid())
    fail_validation("bump: predecessor has no scheduled next version date");

  Ledger next = prev;
  next.version.version_number = prev.version.version_number + 1;
  next.version.version_label = format_version_label(
      {next.version.version_number, label_month.month, label_month.year % 100});
  next.version.search_date = dates.search_date;
  next.version.next_search_date = dates.next_search_date;
  next.version.next_version_date = dates.next_version_date;
  next.version.status = VersionStatus::ongoing;
  next.version.changelog = changes;
  next.version.ledger_snapshot_ref = "";
  next.version.results_snapshot_ref = "";
  next.results.reset();
  return next;
}

// Close the living lifecycle: the version becomes a permanent publication.
// A sealed ledger is re-sealed so its self-hash stays valid.
inline void retire_version(Ledger& ledger) {
  if (ledger.version.status == VersionStatus::retired)
    fail_validation("version '" + ledger.version.version_label +
                    "' is already retired");
  const bool was_sealed = is_sealed(ledger);
  ledger.version.status = VersionStatus::retired;
  if (was_sealed) {
    ledger.version.ledger_snapshot_ref = "";
    seal_ledger(ledger);
  }
}

// ---------------------------------------------------------------------------
// Version diff

struct GateChange {
  std::string moderator_id;
  bool was_eligible = false;
  bool now_eligible = false;
};

struct VersionDiff {
  std::string label_a;
  std::string label_b;
  std::vector<std::string> studies_added;
  std::vector<std::string> studies_removed;
  std::vector<std::string> re_included_records;
  long effect_delta = 0;
  std::optional<double> pooled_delta;
  std::vector<GateChange> gate_changes;

  bool empty() const {
    return studies_added.empty() && studies_removed.empty() &&
           re_included_records.empty() && effect_delta == 0 &&
           (!pooled_delta.has_value() || *pooled_delta == 0.0) &&
           gate_changes.empty();
  }
};

// Compare two sealed versions (a no newer than b). Both seals must verify
// before any content is compared.
inline VersionDiff diff_versions(const Ledger& a, const Ledger& b) {
  verify_seal(a);
  verify_seal(b);
  if (a.version.version_number > b.version.version_number)
    fail_validation("diff requires version order: '" +
                    a.version.version_label + "' is newer than '" +
                    b.version.version_label + "'");

  VersionDiff d;
  d.label_a = a.version.version_label;
  d.label_b = b.version.version_label;

  for (const auto& s : b.studies)
    if (a.find_study(s.study_id) == nullptr) d.studies_added.push_back(s.study_id);
  for (const auto& s : a.studies)
    if (b.find_study(s.study_id) == nullptr) d.studies_removed.push_back(s.study_id);

  for (const auto& r : b.screening) {
    if (!r.re_inclusion) continue;
    bool already = false;
    for (const auto& ra : a.screening)
      if (ra.record_id == r.record_id && ra.re_inclusion) { already = true; break; }
    if (!already) d.re_included_records.push_back(r.record_id);
  }

  d.effect_delta =
      ledger_totals(b).n_effects_coded - ledger_totals(a).n_effects_coded;
  if (a.results.has_value() && b.results.has_value())
    d.pooled_delta = b.results->pooled_mean - a.results->pooled_mean;

  const std::vector<GateResult> ga = gate_all(a);
  const std::vector<GateResult> gb = gate_all(b);
  for (std::size_t i = 0; i < ga.size(); ++i)
    if (ga[i].eligible != gb[i].eligible)
      d.gate_changes.push_back(
          {ga[i].moderator_id, ga[i].eligible, gb[i].eligible});
  return d;
}

inline std::string diff_to_text(const VersionDiff& d) {
  std::string out = "Diff " + d.label_a + " -> " + d.label_b + "\n";
  if (d.empty() && d.label_a == d.label_b) return out + "  (no changes)\n";
  auto list = [&out](const std::string& head,
                     const std::vector<std::string>& items) {
    out += "  " + head + ": ";
    if (items.empty()) {
      out += "none\n";
      return;
    }
    for (std::size_t i = 0; i < items.size(); ++i)
      out += (i ? ", " : "") + items[i];
    out += "\n";
  };
  list("studies added", d.studies_added);
  list("studies removed", d.studies_removed);
  list("re-inclusions", d.re_included_records);
  out += "  coded-effect delta: " + std::to_string(d.effect_delta) + "\n";
  out += "  pooled-mean delta: " +
         (d.pooled_delta ? fmt_full(*d.pooled_delta)
                         : std::string("unavailable")) +
         "\n";
  out += "  gate changes: ";
  if (d.gate_changes.empty()) {
    out += "none\n";
  } else {
    for (std::size_t i = 0; i < d.gate_changes.size(); ++i) {
      const auto& g = d.gate_changes[i];
      out += (i ? ", " : "") + g.moderator_id + " (" +
             (g.was_eligible ? "eligible" : "ineligible") + " -> " +
             (g.now_eligible ? "eligible" : "ineligible") + ")";
    }
    out += "\n";
  }
  return out;
}

}  // namespace livingmeta

#endif
