#pragma once

// Filters for inherently stable entities and properties.

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "kbstab/ingest.hpp"
#include "kbstab/kb_model.hpp"
#include "kbstab/metrics.hpp"

namespace kbstab {

/// Death date, dissolution date, end time, abolished date.
std::set<PropertyId> default_terminating_properties();

/// True iff the subject has a fact on any terminating property. Throws
/// ValidationError when the set is empty.
bool entity_is_stable(const Snapshot& snapshot, const EntityId& subject,
                      const std::set<PropertyId>& terminating_properties);

struct ActivityThresholds {
  std::size_t max_edits = 10;  // in-window edits must stay below this
  double max_growth = 0.05;    // relative page growth must stay below this
  bool enabled = false;
};

struct ArticleSize {
  KbTimestamp as_of;
  std::size_t bytes;
};

/// Quiet page: fewer in-window edits than the threshold AND relative byte
/// growth (size at tau2 vs size at tau1) below the threshold. Edits count when
/// tau1 < t <= tau2.
bool entity_activity_stable(std::span<const EditLogEntry> edits, std::span<const ArticleSize> sizes,
                            const Interval& window, const ActivityThresholds& thresholds);

/// Relative growth used by entity_activity_stable; exposed for reporting.
double page_growth(std::span<const ArticleSize> sizes, const Interval& window);

enum class ChangeMeasure { kb_edits, object_multiplicity, timestamp_multiplicity };

std::string_view to_string(ChangeMeasure m);
/// Accepts "kb_edits", "objects"/"object_multiplicity", "timestamps"/"timestamp_multiplicity".
ChangeMeasure parse_change_measure(std::string_view text);

/// Historic change count of (subject, property):
///   kb_edits                edit-log entries for the pair
///   object_multiplicity     max(#records - 1, 0)
///   timestamp_multiplicity  max(#records with valid time - 1, 0)
/// kb_edits without an edit log throws ValidationError.
std::size_t property_change_count(const EntityId& subject, const PropertyId& property, ChangeMeasure measure,
                                  const Snapshot& snapshot, const std::vector<EditLogEntry>* edit_log = nullptr);

/// Counts edit-log entries per (subject, property) once for repeated queries.
class EditCounter {
 public:
  explicit EditCounter(std::span<const EditLogEntry> log);
  std::size_t count(const EntityId& subject, const PropertyId& property) const;

 private:
  std::map<std::pair<std::string, std::string>, std::size_t> counts_;
};

struct PropertyVerdict {
  PropertyId property;
  std::size_t changed_entities = 0;
  std::size_t class_size = 0;
  double fraction = 0.0;
  bool unstable = false;
};

/// Unstable iff the fraction of class entities whose change count is at
/// least one reaches the threshold. Throws ValidationError for an empty class.
PropertyVerdict property_is_unstable(std::span<const EntityId> class_entities, const PropertyId& property,
                                     ChangeMeasure measure, const Snapshot& snapshot, double threshold = 0.05,
                                     const std::vector<EditLogEntry>* edit_log = nullptr);

/// Unstable is the positive class. Throws ValidationError listing properties
/// present in only one of the maps.
BinaryMetrics evaluate_filter(const std::map<PropertyId, bool>& predicted, const std::map<PropertyId, bool>& gold);

}  // namespace kbstab
