#pragma once

// Temporal knowledge-base model: quintuple facts (s, p, o, t_v, t_a),
// snapshots sampled at a timepoint, and the per-(subject, property) view
// used by every change and stability computation.

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kbstab/errors.hpp"

namespace kbstab {

/// Opaque non-empty identifier. Tag distinguishes entities from properties.
template <class Tag>
class Identifier {
 public:
  explicit Identifier(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw ValidationError(std::string(Tag::kName) + " must be non-empty");
  }

  const std::string& str() const noexcept { return id_; }

  friend bool operator==(const Identifier&, const Identifier&) = default;
  friend auto operator<=>(const Identifier&, const Identifier&) = default;

 private:
  std::string id_;
};

struct EntityTag {
  static constexpr const char* kName = "entity id";
};
struct PropertyTag {
  static constexpr const char* kName = "property id";
};

using EntityId = Identifier<EntityTag>;
using PropertyId = Identifier<PropertyTag>;

/// An object is either another entity or a literal in canonical text form.
class ObjectValue {
 public:
  enum class Kind : std::uint8_t { entity, literal };

  static ObjectValue entity(std::string id);
  static ObjectValue literal(std::string text);

  Kind kind() const noexcept { return kind_; }
  bool is_entity() const noexcept { return kind_ == Kind::entity; }
  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const ObjectValue&, const ObjectValue&) = default;
  friend auto operator<=>(const ObjectValue& a, const ObjectValue& b) {
    if (auto c = a.text_ <=> b.text_; c != 0) return c;
    return a.kind_ <=> b.kind_;
  }

 private:
  ObjectValue(Kind kind, std::string text) : kind_(kind), text_(std::move(text)) {}

  Kind kind_;
  std::string text_;
};

std::string_view to_string(ObjectValue::Kind kind);

/// Finer precisions order first when two timestamps share their earliest day.
enum class Precision : std::uint8_t { day = 0, month = 1, year = 2 };

char precision_tag(Precision p);
Precision parse_precision_tag(std::string_view tag);

/// Calendar date with year/month/day precision. Always stored in canonical
/// form: the earliest day of the covered period.
class KbTimestamp {
 public:
  static KbTimestamp of_year(int year);
  static KbTimestamp of_month(int year, unsigned month);
  static KbTimestamp of_day(int year, unsigned month, unsigned day);
  static KbTimestamp from_day_number(std::int32_t days, Precision precision = Precision::day);

  /// Parses "YYYY-MM-DD" (or a shorter "YYYY", "YYYY-MM") and coerces it to
  /// the given precision.
  static KbTimestamp parse(std::string_view date, Precision precision);
  /// Parses "YYYY", "YYYY-MM" or "YYYY-MM-DD"; the precision follows the form.
  static KbTimestamp parse_compact(std::string_view text);

  int year() const noexcept { return year_; }
  unsigned month() const noexcept { return month_; }
  unsigned day() const noexcept { return day_; }
  Precision precision() const noexcept { return precision_; }

  /// Days since 1970-01-01 of the earliest covered instant.
  std::int32_t day_number() const noexcept { return days_; }
  /// Year plus the elapsed fraction of that year; integral for year precision.
  double fractional_year() const noexcept;

  std::string iso_date() const;  // always YYYY-MM-DD
  std::string compact() const;   // form matches precision

  friend bool operator==(const KbTimestamp& a, const KbTimestamp& b) noexcept {
    return a.days_ == b.days_ && a.precision_ == b.precision_;
  }
  friend std::strong_ordering operator<=>(const KbTimestamp& a, const KbTimestamp& b) noexcept {
    if (auto c = a.days_ <=> b.days_; c != 0) return c;
    return a.precision_ <=> b.precision_;
  }

 private:
  KbTimestamp(int year, unsigned month, unsigned day, Precision precision);

  std::int32_t days_;
  std::int16_t year_;
  std::uint8_t month_;
  std::uint8_t day_;
  Precision precision_;
};

/// One quintuple. Only the valid time may be absent.
struct Fact {
  EntityId subject;
  PropertyId property;
  ObjectValue object;
  std::optional<KbTimestamp> valid_time;
  KbTimestamp transaction_time;
};

/// (o, t_v, t_a) for a fixed (s, p).
struct ObjectRecord {
  ObjectValue object;
  std::optional<KbTimestamp> valid_time;
  KbTimestamp transaction_time;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

/// Which record fields take part in record identity.
enum class RecordEquality {
  object_and_valid_time,  // default: transaction time is provenance only
  strict,                 // also compares transaction time
};

/// Orders records by (object, valid_time), and by transaction time too in
/// strict mode.
std::weak_ordering compare_records(const ObjectRecord& a, const ObjectRecord& b,
                                   RecordEquality eq = RecordEquality::object_and_valid_time);

/// Sorts by (subject, property, object, valid_time).
bool canonical_less(const Fact& a, const Fact& b);

/// Object-timestamps set of one (subject, property) pair. Records are kept
/// sorted by (object, valid_time) and are unique on that key.
class PairState {
 public:
  PairState(EntityId subject, PropertyId property, std::vector<ObjectRecord> records = {});

  const EntityId& subject() const noexcept { return subject_; }
  const PropertyId& property() const noexcept { return property_; }
  std::span<const ObjectRecord> records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }

 private:
  EntityId subject_;
  PropertyId property_;
  std::vector<ObjectRecord> records_;
};

/// Sampling interval (tau1, tau2] with tau2 > tau1.
class Interval {
 public:
  Interval(KbTimestamp tau1, KbTimestamp tau2);

  const KbTimestamp& tau1() const noexcept { return tau1_; }
  const KbTimestamp& tau2() const noexcept { return tau2_; }
  /// tau1 < t <= tau2
  bool contains(const KbTimestamp& t) const noexcept { return tau1_ < t && t <= tau2_; }

  friend bool operator==(const Interval&, const Interval&) = default;
  friend auto operator<=>(const Interval&, const Interval&) = default;

 private:
  KbTimestamp tau1_;
  KbTimestamp tau2_;
};

enum class DuplicatePolicy {
  reject,         // duplicate (s, p, o, t_v) is a validation error
  keep_earliest,  // collapse to the fact with the earliest transaction time
};

/// All facts visible at sampled_at, sorted canonically.
class Snapshot {
 public:
  Snapshot(KbTimestamp sampled_at, std::vector<Fact> facts,
           DuplicatePolicy duplicates = DuplicatePolicy::reject);

  const KbTimestamp& sampled_at() const noexcept { return sampled_at_; }
  std::span<const Fact> facts() const noexcept { return facts_; }
  std::size_t size() const noexcept { return facts_.size(); }
  bool empty() const noexcept { return facts_.empty(); }

  std::span<const Fact> facts_of(const EntityId& subject) const;
  std::span<const Fact> facts_of(const EntityId& subject, const PropertyId& property) const;

  /// Distinct subjects in sorted order.
  std::vector<EntityId> subjects() const;

 private:
  KbTimestamp sampled_at_;
  std::vector<Fact> facts_;
};

/// Records of all facts matching (subject, property); empty when none match.
PairState project(const Snapshot& snapshot, const EntityId& subject, const PropertyId& property);

/// Builds a PairState from a contiguous run of facts of one pair.
PairState to_pair_state(const EntityId& subject, const PropertyId& property,
                        std::span<const Fact> facts);

/// True iff both object-timestamps sets are equal under the given equality.
/// Throws ContractViolation when the states belong to different pairs.
bool is_stable(const PairState& before, const PairState& after,
               RecordEquality eq = RecordEquality::object_and_valid_time);

void require_same_pair(const PairState& a, const PairState& b);

}  // namespace kbstab
