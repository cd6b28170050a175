#include "kbstab/kb_model.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>

namespace kbstab {

namespace {

namespace chr = std::chrono;

std::int32_t civil_to_days(int y, unsigned m, unsigned d) {
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  return static_cast<std::int32_t>(chr::sys_days{ymd}.time_since_epoch().count());
}

int parse_int(std::string_view s, std::string_view what, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ValidationError("invalid " + std::string(what) + " in date '" + std::string(whole) + "'");
  }
  return value;
}

struct DateParts {
  int year;
  unsigned month;
  unsigned day;
  Precision form;  // precision implied by the number of components
};

DateParts split_date(std::string_view text) {
  if (text.empty()) throw ValidationError("empty date");
  if (!(text.size() == 4 || text.size() == 7 || text.size() == 10) || (text.size() > 4 && text[4] != '-') ||
      (text.size() > 7 && text[7] != '-')) {
    throw ValidationError("date '" + std::string(text) + "' is not YYYY, YYYY-MM or YYYY-MM-DD");
  }
  DateParts out{0, 1, 1, Precision::year};
  const auto first = text.find('-');
  out.year = parse_int(text.substr(0, first), "year", text);
  if (first == std::string_view::npos) return out;
  const auto rest = text.substr(first + 1);
  const auto second = rest.find('-');
  out.month = static_cast<unsigned>(parse_int(rest.substr(0, second), "month", text));
  out.form = Precision::month;
  if (second == std::string_view::npos) return out;
  out.day = static_cast<unsigned>(parse_int(rest.substr(second + 1), "day", text));
  out.form = Precision::day;
  return out;
}

}  // namespace

ObjectValue ObjectValue::entity(std::string id) {
  if (id.empty()) throw ValidationError("entity object must be non-empty");
  for (unsigned char c : id) {
    if (c <= ' ') throw ValidationError("entity object '" + id + "' contains whitespace");
  }
  return ObjectValue(Kind::entity, std::move(id));
}

ObjectValue ObjectValue::literal(std::string text) { return ObjectValue(Kind::literal, std::move(text)); }

std::string_view to_string(ObjectValue::Kind kind) {
  return kind == ObjectValue::Kind::entity ? "entity" : "literal";
}

char precision_tag(Precision p) {
  switch (p) {
    case Precision::day: return 'd';
    case Precision::month: return 'm';
    case Precision::year: return 'y';
  }
  return '?';
}

Precision parse_precision_tag(std::string_view tag) {
  if (tag == "d") return Precision::day;
  if (tag == "m") return Precision::month;
  if (tag == "y") return Precision::year;
  throw ValidationError("unknown precision tag '" + std::string(tag) + "'");
}

KbTimestamp::KbTimestamp(int year, unsigned month, unsigned day, Precision precision)
    : days_(0), year_(0), month_(1), day_(1), precision_(precision) {
  if (year < 0 || year > 9999) throw ValidationError("year out of range: " + std::to_string(year));
  if (precision == Precision::year) month = 1;
  if (precision != Precision::day) day = 1;
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) {
    throw ValidationError("invalid calendar date " + std::to_string(year) + "-" +
                          std::to_string(month) + "-" + std::to_string(day));
  }
  year_ = static_cast<std::int16_t>(year);
  month_ = static_cast<std::uint8_t>(month);
  day_ = static_cast<std::uint8_t>(day);
  days_ = civil_to_days(year, month, day);
}

KbTimestamp KbTimestamp::of_year(int year) { return KbTimestamp(year, 1, 1, Precision::year); }

KbTimestamp KbTimestamp::of_month(int year, unsigned month) {
  return KbTimestamp(year, month, 1, Precision::month);
}

KbTimestamp KbTimestamp::of_day(int year, unsigned month, unsigned day) {
  return KbTimestamp(year, month, day, Precision::day);
}

KbTimestamp KbTimestamp::from_day_number(std::int32_t days, Precision precision) {
  const chr::year_month_day ymd{chr::sys_days{chr::days{days}}};
  return KbTimestamp(static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()), precision);
}

KbTimestamp KbTimestamp::parse(std::string_view date, Precision precision) {
  const DateParts p = split_date(date);
  KbTimestamp(p.year, p.month, p.day, p.form);  // the written date must exist even when truncated
  return KbTimestamp(p.year, p.month, p.day, precision);
}

KbTimestamp KbTimestamp::parse_compact(std::string_view text) {
  const DateParts p = split_date(text);
  return KbTimestamp(p.year, p.month, p.day, p.form);
}

double KbTimestamp::fractional_year() const noexcept {
  const std::int32_t start = civil_to_days(year_, 1, 1);
  const std::int32_t next = civil_to_days(year_ + 1, 1, 1);
  return static_cast<double>(year_) +
         static_cast<double>(days_ - start) / static_cast<double>(next - start);
}

std::string KbTimestamp::iso_date() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(year_), unsigned{month_},
                unsigned{day_});
  return buf;
}

std::string KbTimestamp::compact() const {
  std::string s = iso_date();
  switch (precision_) {
    case Precision::year: return s.substr(0, 4);
    case Precision::month: return s.substr(0, 7);
    case Precision::day: return s;
  }
  return s;
}

std::weak_ordering compare_records(const ObjectRecord& a, const ObjectRecord& b, RecordEquality eq) {
  if (auto c = a.object <=> b.object; c != 0) return c;
  if (auto c = a.valid_time <=> b.valid_time; c != 0) return c;
  if (eq == RecordEquality::strict) return a.transaction_time <=> b.transaction_time;
  return std::weak_ordering::equivalent;
}

bool canonical_less(const Fact& a, const Fact& b) {
  if (auto c = a.subject <=> b.subject; c != 0) return c < 0;
  if (auto c = a.property <=> b.property; c != 0) return c < 0;
  if (auto c = a.object <=> b.object; c != 0) return c < 0;
  return a.valid_time < b.valid_time;
}

PairState::PairState(EntityId subject, PropertyId property, std::vector<ObjectRecord> records)
    : subject_(std::move(subject)), property_(std::move(property)), records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const ObjectRecord& a, const ObjectRecord& b) { return compare_records(a, b) < 0; });
  auto dup = std::adjacent_find(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
    return compare_records(a, b) == 0;
  });
  if (dup != records_.end()) {
    throw ValidationError("duplicate record (" + dup->object.text() + ") for " + subject_.str() +
                          "/" + property_.str());
  }
}

Interval::Interval(KbTimestamp tau1, KbTimestamp tau2) : tau1_(tau1), tau2_(tau2) {
  if (!(tau2_ > tau1_)) {
    throw ValidationError("interval requires tau2 > tau1 (got " + tau1_.compact() + ", " +
                          tau2_.compact() + ")");
  }
}

Snapshot::Snapshot(KbTimestamp sampled_at, std::vector<Fact> facts, DuplicatePolicy duplicates)
    : sampled_at_(sampled_at), facts_(std::move(facts)) {
  for (const Fact& f : facts_) {
    if (f.transaction_time > sampled_at_) {
      throw ValidationError("fact " + f.subject.str() + "/" + f.property.str() +
                            " has transaction time " + f.transaction_time.compact() +
                            " after snapshot time " + sampled_at_.compact());
    }
  }
  // Stable sort keeps the input order among equal keys; the earliest-t_a pass
  // below then decides which duplicate survives.
  std::stable_sort(facts_.begin(), facts_.end(), canonical_less);
  auto same_key = [](const Fact& a, const Fact& b) {
    return !canonical_less(a, b) && !canonical_less(b, a);
  };
  if (duplicates == DuplicatePolicy::reject) {
    auto dup = std::adjacent_find(facts_.begin(), facts_.end(), same_key);
    if (dup != facts_.end()) {
      throw ValidationError("duplicate fact " + dup->subject.str() + "/" + dup->property.str() +
                            "/" + dup->object.text());
    }
    return;
  }
  std::vector<Fact> out;
  out.reserve(facts_.size());
  for (Fact& f : facts_) {
    if (!out.empty() && same_key(out.back(), f)) {
      if (f.transaction_time < out.back().transaction_time) out.back().transaction_time = f.transaction_time;
      continue;
    }
    out.push_back(std::move(f));
  }
  facts_ = std::move(out);
}

std::span<const Fact> Snapshot::facts_of(const EntityId& subject) const {
  auto lo = std::partition_point(facts_.begin(), facts_.end(),
                                 [&](const Fact& f) { return f.subject < subject; });
  auto hi = std::partition_point(lo, facts_.end(), [&](const Fact& f) { return f.subject == subject; });
  return {lo, hi};
}

std::span<const Fact> Snapshot::facts_of(const EntityId& subject, const PropertyId& property) const {
  auto all = facts_of(subject);
  auto lo = std::partition_point(all.begin(), all.end(),
                                 [&](const Fact& f) { return f.property < property; });
  auto hi = std::partition_point(lo, all.end(), [&](const Fact& f) { return f.property == property; });
  return {lo, hi};
}

std::vector<EntityId> Snapshot::subjects() const {
  std::vector<EntityId> out;
  for (const Fact& f : facts_) {
    if (out.empty() || out.back() != f.subject) out.push_back(f.subject);
  }
  return out;
}

PairState to_pair_state(const EntityId& subject, const PropertyId& property, std::span<const Fact> facts) {
  std::vector<ObjectRecord> records;
  records.reserve(facts.size());
  for (const Fact& f : facts) records.push_back({f.object, f.valid_time, f.transaction_time});
  return PairState(subject, property, std::move(records));
}

PairState project(const Snapshot& snapshot, const EntityId& subject, const PropertyId& property) {
  return to_pair_state(subject, property, snapshot.facts_of(subject, property));
}

void require_same_pair(const PairState& a, const PairState& b) {
  if (a.subject() != b.subject() || a.property() != b.property()) {
    throw ContractViolation("pair mismatch: " + a.subject().str() + "/" + a.property().str() +
                            " vs " + b.subject().str() + "/" + b.property().str());
  }
}

bool is_stable(const PairState& before, const PairState& after, RecordEquality eq) {
  require_same_pair(before, after);
  const auto a = before.records();
  const auto b = after.records();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (compare_records(a[i], b[i], eq) != 0) return false;
  }
  return true;
}

}  // namespace kbstab
