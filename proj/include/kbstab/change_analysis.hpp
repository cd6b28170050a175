#pragma once

// Observable change detection between two snapshots and heuristic
// classification of each change as real-world evolution, delayed
// completion or correction.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kbstab/ingest.hpp"
#include "kbstab/kb_model.hpp"
#include "kbstab/metrics.hpp"

namespace kbstab {

enum class Criterion { timestamp, pca, bulk };

inline constexpr std::array<Criterion, 3> kAllCriteria{Criterion::timestamp, Criterion::pca, Criterion::bulk};

std::string_view to_string(Criterion c);
Criterion parse_criterion(std::string_view text);

struct AnalysisOptions {
  RecordEquality equality = RecordEquality::object_and_valid_time;
  // Restrict the timestamp criterion to records added between the snapshots.
  bool timestamp_added_only = false;
  // Minimum normalized edit similarity for a same-valid-time replacement to
  // count as a modification.
  double similarity_threshold = 0.8;
};

struct ModifiedPair {
  ObjectRecord before;
  ObjectRecord after;
};

struct PairDiff {
  std::vector<ObjectRecord> added;
  std::vector<ObjectRecord> removed;
  std::vector<ModifiedPair> modified;

  bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
  /// Edits, replacements and removals only: every added record is matched
  /// by a removed one.
  bool pure_correction() const { return !empty() && added.size() <= removed.size(); }
};

struct CriterionSignals {
  bool timestamp = false;
  bool pca = false;
  bool bulk = false;
  // Set when the change also removed or modified records.
  bool correction = false;

  bool verdict(Criterion c) const;
};

struct ChangeRecord {
  EntityId subject;
  PropertyId property;
  Interval interval;
  PairDiff diff;
  ChangeLabel label = ChangeLabel::none;
  CriterionSignals signals;
};

/// 2 * LCS(a, b) / (|a| + |b|); 1 when both are empty.
double edit_similarity(std::string_view a, std::string_view b);

bool observable_change(const PairState& before, const PairState& after,
                       RecordEquality eq = RecordEquality::object_and_valid_time);

/// added = after \ before, removed = before \ after, with removed/added
/// records paired into modifications when they share the object (different
/// valid time) or share the valid time with similar object text.
PairDiff diff(const PairState& before, const PairState& after, const AnalysisOptions& options = {});

/// Some record has tau1 < t_v <= tau2.
bool timestamp_criterion(std::span<const ObjectRecord> records, const Interval& interval);
bool timestamp_criterion(const PairState& after, const Interval& interval);

/// before is non-empty and after holds an object that no record of before has.
bool pca_criterion(const PairState& before, const PairState& after);

/// Real-world candidate unless at least two distinct new objects were all
/// added on the same day.
bool bulk_criterion(const PairState& before, const PairState& after,
                    RecordEquality eq = RecordEquality::object_and_valid_time);

ChangeRecord classify(const PairState& before, const PairState& after, const Interval& interval,
                      Criterion criterion, const AnalysisOptions& options = {});

/// Label the record would get under another criterion, from its signals.
ChangeLabel label_under(const ChangeRecord& record, Criterion criterion);

/// Classifies every (subject, property) pair present in either snapshot and
/// returns the changed ones sorted by (subject, property).
std::vector<ChangeRecord> analyze_snapshots(const Snapshot& before, const Snapshot& after,
                                            const Interval& interval, Criterion criterion,
                                            const AnalysisOptions& options = {}, unsigned threads = 1);

inline constexpr std::size_t kLabelCount = 4;
using LabelMatrix = std::array<std::array<std::size_t, kLabelCount>, kLabelCount>;

/// Evaluation of one criterion; real_world is the positive class.
struct CriterionEvaluation {
  Criterion criterion;
  BinaryMetrics binary;
  LabelMatrix confusion{};                     // [gold][predicted], indexed by ChangeLabel
  std::array<std::size_t, kLabelCount> support{};  // gold label counts
};

/// Throws ValidationError listing records without a gold label.
std::vector<CriterionEvaluation> evaluate_criteria(const std::vector<ChangeRecord>& records,
                                                   const std::vector<GoldLabel>& gold);

struct CategoryRow {
  std::string property;  // "total" for the aggregate row
  std::array<std::size_t, kLabelCount> counts{};
};

/// Per-property distribution of assigned labels over changed records.
std::vector<CategoryRow> category_distribution(const std::vector<ChangeRecord>& records);

void write_distribution_csv(std::ostream& out, const std::vector<CategoryRow>& rows);
void write_criteria_csv(std::ostream& out, const std::vector<CriterionEvaluation>& evals);

std::string change_record_to_json(const ChangeRecord& record);
ChangeRecord change_record_from_json(std::string_view line);
void write_change_records(std::ostream& out, const std::vector<ChangeRecord>& records);
std::vector<ChangeRecord> parse_change_records(std::string_view content, const std::string& source = "<report>");

}  // namespace kbstab
