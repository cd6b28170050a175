#include "kbstab/stability_filters.hpp"

#include <algorithm>
#include <limits>

namespace kbstab {

std::set<PropertyId> default_terminating_properties() {
  // date of death, dissolved/abolished date, end time, date of official closure
  return {PropertyId("P570"), PropertyId("P576"), PropertyId("P582"), PropertyId("P3999")};
}

bool entity_is_stable(const Snapshot& snapshot, const EntityId& subject,
                      const std::set<PropertyId>& terminating_properties) {
  if (terminating_properties.empty()) throw ValidationError("terminating property set must be non-empty");
  const auto facts = snapshot.facts_of(subject);
  return std::any_of(facts.begin(), facts.end(),
                     [&](const Fact& f) { return terminating_properties.contains(f.property); });
}

namespace {

// Size of the latest version at or before t; 0 when none exists yet.
std::size_t size_at(std::span<const ArticleSize> sizes, const KbTimestamp& t) {
  const ArticleSize* best = nullptr;
  for (const auto& s : sizes) {
    if (s.as_of <= t && (!best || best->as_of <= s.as_of)) best = &s;
  }
  return best ? best->bytes : 0;
}

}  // namespace

double page_growth(std::span<const ArticleSize> sizes, const Interval& window) {
  const double start = static_cast<double>(size_at(sizes, window.tau1()));
  const double end = static_cast<double>(size_at(sizes, window.tau2()));
  if (start == 0.0) return end == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (end - start) / start;
}

bool entity_activity_stable(std::span<const EditLogEntry> edits, std::span<const ArticleSize> sizes,
                            const Interval& window, const ActivityThresholds& thresholds) {
  const auto in_window = static_cast<std::size_t>(std::count_if(
      edits.begin(), edits.end(), [&](const EditLogEntry& e) { return window.contains(e.transaction_time); }));
  return in_window < thresholds.max_edits && page_growth(sizes, window) < thresholds.max_growth;
}

std::string_view to_string(ChangeMeasure m) {
  switch (m) {
    case ChangeMeasure::kb_edits: return "kb_edits";
    case ChangeMeasure::object_multiplicity: return "objects";
    case ChangeMeasure::timestamp_multiplicity: return "timestamps";
  }
  return "?";
}

ChangeMeasure parse_change_measure(std::string_view text) {
  if (text == "kb_edits") return ChangeMeasure::kb_edits;
  if (text == "objects" || text == "object_multiplicity") return ChangeMeasure::object_multiplicity;
  if (text == "timestamps" || text == "timestamp_multiplicity") return ChangeMeasure::timestamp_multiplicity;
  throw ValidationError("unknown measure '" + std::string(text) + "'");
}

EditCounter::EditCounter(std::span<const EditLogEntry> log) {
  for (const auto& e : log) ++counts_[{e.subject.str(), e.property.str()}];
}

std::size_t EditCounter::count(const EntityId& subject, const PropertyId& property) const {
  auto it = counts_.find({subject.str(), property.str()});
  return it == counts_.end() ? 0 : it->second;
}

namespace {

std::size_t count_from_snapshot(const EntityId& subject, const PropertyId& property, ChangeMeasure measure,
                                const Snapshot& snapshot) {
  const auto facts = snapshot.facts_of(subject, property);
  std::size_t n = facts.size();
  if (measure == ChangeMeasure::timestamp_multiplicity) {
    n = static_cast<std::size_t>(
        std::count_if(facts.begin(), facts.end(), [](const Fact& f) { return f.valid_time.has_value(); }));
  }
  return n == 0 ? 0 : n - 1;
}

}  // namespace

std::size_t property_change_count(const EntityId& subject, const PropertyId& property, ChangeMeasure measure,
                                  const Snapshot& snapshot, const std::vector<EditLogEntry>* edit_log) {
  if (measure == ChangeMeasure::kb_edits) {
    if (!edit_log) throw ValidationError("kb_edits measure requires an edit log");
    return static_cast<std::size_t>(std::count_if(edit_log->begin(), edit_log->end(), [&](const EditLogEntry& e) {
      return e.subject == subject && e.property == property;
    }));
  }
  return count_from_snapshot(subject, property, measure, snapshot);
}

PropertyVerdict property_is_unstable(std::span<const EntityId> class_entities, const PropertyId& property,
                                     ChangeMeasure measure, const Snapshot& snapshot, double threshold,
                                     const std::vector<EditLogEntry>* edit_log) {
  if (class_entities.empty()) throw ValidationError("entity class must be non-empty");
  if (measure == ChangeMeasure::kb_edits && !edit_log) {
    throw ValidationError("kb_edits measure requires an edit log");
  }
  std::optional<EditCounter> counter;
  if (measure == ChangeMeasure::kb_edits) counter.emplace(*edit_log);

  PropertyVerdict v{property, 0, class_entities.size(), 0.0, false};
  for (const EntityId& e : class_entities) {
    const std::size_t n = counter ? counter->count(e, property) : count_from_snapshot(e, property, measure, snapshot);
    if (n >= 1) ++v.changed_entities;
  }
  v.fraction = static_cast<double>(v.changed_entities) / static_cast<double>(v.class_size);
  v.unstable = v.fraction >= threshold;
  return v;
}

BinaryMetrics evaluate_filter(const std::map<PropertyId, bool>& predicted, const std::map<PropertyId, bool>& gold) {
  std::string missing;
  for (const auto& [p, _] : predicted) {
    if (!gold.contains(p)) missing += (missing.empty() ? "" : ", ") + p.str() + " (no gold)";
  }
  for (const auto& [p, _] : gold) {
    if (!predicted.contains(p)) missing += (missing.empty() ? "" : ", ") + p.str() + " (no prediction)";
  }
  if (!missing.empty()) throw ValidationError("property sets differ: " + missing);

  BinaryCounts counts;
  for (const auto& [p, unstable] : predicted) counts.add(unstable, gold.at(p));
  return compute_metrics(counts);
}

}  // namespace kbstab
