#include "kbstab/change_analysis.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace kbstab {

namespace {

using nlohmann::json;

std::size_t index_of(ChangeLabel label) { return static_cast<std::size_t>(label); }

// Records of `a` whose key is absent from `b`. Both inputs are sorted by key.
std::vector<ObjectRecord> set_difference(std::span<const ObjectRecord> a, std::span<const ObjectRecord> b,
                                         RecordEquality eq) {
  std::vector<ObjectRecord> out;
  std::size_t j = 0;
  for (const ObjectRecord& r : a) {
    while (j < b.size() && compare_records(b[j], r) < 0) ++j;
    bool found = false;
    for (std::size_t k = j; k < b.size() && compare_records(b[k], r) == 0; ++k) {
      if (compare_records(b[k], r, eq) == 0) found = true;
    }
    if (!found) out.push_back(r);
  }
  return out;
}

json record_json(const ObjectRecord& r) {
  return json{{"kind", std::string(to_string(r.object.kind()))},
              {"object", r.object.text()},
              {"valid_time", r.valid_time ? json(r.valid_time->compact()) : json(nullptr)},
              {"transaction_time", r.transaction_time.compact()}};
}

ObjectRecord record_from(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  std::string text = j.at("object").get<std::string>();
  ObjectValue object = kind == "entity" ? ObjectValue::entity(std::move(text)) : ObjectValue::literal(std::move(text));
  std::optional<KbTimestamp> vt;
  if (!j.at("valid_time").is_null()) vt = KbTimestamp::parse_compact(j.at("valid_time").get<std::string>());
  return {std::move(object), vt, KbTimestamp::parse_compact(j.at("transaction_time").get<std::string>())};
}

json records_json(const std::vector<ObjectRecord>& rs) {
  json arr = json::array();
  for (const auto& r : rs) arr.push_back(record_json(r));
  return arr;
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::timestamp: return "timestamp";
    case Criterion::pca: return "pca";
    case Criterion::bulk: return "bulk";
  }
  return "?";
}

Criterion parse_criterion(std::string_view text) {
  if (text == "timestamp") return Criterion::timestamp;
  if (text == "pca") return Criterion::pca;
  if (text == "bulk") return Criterion::bulk;
  throw ValidationError("unknown criterion '" + std::string(text) + "'");
}

bool CriterionSignals::verdict(Criterion c) const {
  switch (c) {
    case Criterion::timestamp: return timestamp;
    case Criterion::pca: return pca;
    case Criterion::bulk: return bulk;
  }
  return false;
}

double edit_similarity(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return 2.0 * static_cast<double>(prev[b.size()]) / static_cast<double>(a.size() + b.size());
}

bool observable_change(const PairState& before, const PairState& after, RecordEquality eq) {
  return !is_stable(before, after, eq);
}

PairDiff diff(const PairState& before, const PairState& after, const AnalysisOptions& options) {
  require_same_pair(before, after);
  PairDiff out;
  std::vector<ObjectRecord> added = set_difference(after.records(), before.records(), options.equality);
  std::vector<ObjectRecord> removed = set_difference(before.records(), after.records(), options.equality);
  std::vector<bool> added_used(added.size(), false);
  std::vector<bool> removed_used(removed.size(), false);

  // Same object, different valid time (or transaction time in strict mode).
  for (std::size_t r = 0; r < removed.size(); ++r) {
    for (std::size_t a = 0; a < added.size(); ++a) {
      if (!added_used[a] && added[a].object == removed[r].object) {
        out.modified.push_back({removed[r], added[a]});
        added_used[a] = removed_used[r] = true;
        break;
      }
    }
  }
  // Same valid time, edit-similar object text; best match wins.
  for (std::size_t r = 0; r < removed.size(); ++r) {
    if (removed_used[r]) continue;
    std::size_t best = added.size();
    double best_sim = -1.0;
    for (std::size_t a = 0; a < added.size(); ++a) {
      if (added_used[a] || added[a].valid_time != removed[r].valid_time) continue;
      const double sim = edit_similarity(removed[r].object.text(), added[a].object.text());
      if (sim >= options.similarity_threshold && sim > best_sim) {
        best = a;
        best_sim = sim;
      }
    }
    if (best < added.size()) {
      out.modified.push_back({removed[r], added[best]});
      added_used[best] = removed_used[r] = true;
    }
  }
  for (std::size_t a = 0; a < added.size(); ++a) {
    if (!added_used[a]) out.added.push_back(std::move(added[a]));
  }
  for (std::size_t r = 0; r < removed.size(); ++r) {
    if (!removed_used[r]) out.removed.push_back(std::move(removed[r]));
  }
  return out;
}

bool timestamp_criterion(std::span<const ObjectRecord> records, const Interval& interval) {
  return std::any_of(records.begin(), records.end(), [&](const ObjectRecord& r) {
    return r.valid_time && interval.contains(*r.valid_time);
  });
}

bool timestamp_criterion(const PairState& after, const Interval& interval) {
  return timestamp_criterion(after.records(), interval);
}

bool pca_criterion(const PairState& before, const PairState& after) {
  require_same_pair(before, after);
  if (before.empty()) return false;
  std::set<ObjectValue> known;
  for (const auto& r : before.records()) known.insert(r.object);
  return std::any_of(after.records().begin(), after.records().end(),
                     [&](const ObjectRecord& r) { return !known.contains(r.object); });
}

bool bulk_criterion(const PairState& before, const PairState& after, RecordEquality eq) {
  require_same_pair(before, after);
  const auto fresh = set_difference(after.records(), before.records(), eq);
  std::set<ObjectValue> objects;
  std::set<std::int32_t> days;
  for (const auto& r : fresh) {
    objects.insert(r.object);
    days.insert(r.transaction_time.day_number());
  }
  // With two or more distinct objects, differing days across the new records
  // imply some pair of distinct objects was added on different days.
  return objects.size() <= 1 || days.size() > 1;
}

ChangeRecord classify(const PairState& before, const PairState& after, const Interval& interval,
                      Criterion criterion, const AnalysisOptions& options) {
  ChangeRecord rec{before.subject(), before.property(), interval, diff(before, after, options),
                   ChangeLabel::none, {}};
  if (rec.diff.empty()) return rec;

  if (options.timestamp_added_only) {
    std::vector<ObjectRecord> fresh = rec.diff.added;
    for (const auto& m : rec.diff.modified) fresh.push_back(m.after);
    rec.signals.timestamp = timestamp_criterion(fresh, interval);
  } else {
    rec.signals.timestamp = timestamp_criterion(after, interval);
  }
  rec.signals.pca = pca_criterion(before, after);
  rec.signals.bulk = bulk_criterion(before, after, options.equality);
  rec.signals.correction = !rec.diff.removed.empty() || !rec.diff.modified.empty();
  rec.label = label_under(rec, criterion);
  return rec;
}

ChangeLabel label_under(const ChangeRecord& record, Criterion criterion) {
  if (record.diff.empty()) return ChangeLabel::none;
  if (record.diff.pure_correction()) return ChangeLabel::correction;
  return record.signals.verdict(criterion) ? ChangeLabel::real_world : ChangeLabel::completion;
}

namespace {

struct PairSlice {
  std::span<const Fact> before;
  std::span<const Fact> after;
};

bool same_facts(std::span<const Fact> a, std::span<const Fact> b, RecordEquality eq) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].object != b[i].object || a[i].valid_time != b[i].valid_time) return false;
    if (eq == RecordEquality::strict && a[i].transaction_time != b[i].transaction_time) return false;
  }
  return true;
}

std::size_t run_end(std::span<const Fact> facts, std::size_t i) {
  std::size_t j = i + 1;
  while (j < facts.size() && facts[j].subject == facts[i].subject && facts[j].property == facts[i].property) ++j;
  return j;
}

int compare_pair(const Fact& a, const Fact& b) {
  if (auto c = a.subject <=> b.subject; c != 0) return c < 0 ? -1 : 1;
  if (auto c = a.property <=> b.property; c != 0) return c < 0 ? -1 : 1;
  return 0;
}

}  // namespace

std::vector<ChangeRecord> analyze_snapshots(const Snapshot& before, const Snapshot& after,
                                            const Interval& interval, Criterion criterion,
                                            const AnalysisOptions& options, unsigned threads) {
  const auto fa = before.facts();
  const auto fb = after.facts();

  // Merge-walk the two sorted fact lists into per-pair slices, dropping pairs
  // whose fact runs are identical.
  std::vector<PairSlice> changed;
  std::size_t i = 0, j = 0;
  while (i < fa.size() || j < fb.size()) {
    int c = i == fa.size() ? 1 : j == fb.size() ? -1 : compare_pair(fa[i], fb[j]);
    if (c < 0) {
      const std::size_t e = run_end(fa, i);
      changed.push_back({fa.subspan(i, e - i), {}});
      i = e;
    } else if (c > 0) {
      const std::size_t e = run_end(fb, j);
      changed.push_back({{}, fb.subspan(j, e - j)});
      j = e;
    } else {
      const std::size_t ei = run_end(fa, i);
      const std::size_t ej = run_end(fb, j);
      PairSlice s{fa.subspan(i, ei - i), fb.subspan(j, ej - j)};
      if (!same_facts(s.before, s.after, options.equality)) changed.push_back(s);
      i = ei;
      j = ej;
    }
  }

  const auto classify_slice = [&](const PairSlice& s) {
    const Fact& any = s.before.empty() ? s.after.front() : s.before.front();
    return classify(to_pair_state(any.subject, any.property, s.before),
                    to_pair_state(any.subject, any.property, s.after), interval, criterion, options);
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(changed.size() / 1024 + 1)));
  std::vector<std::vector<ChangeRecord>> parts(threads);
  const std::size_t chunk = (changed.size() + threads - 1) / threads;
  auto work = [&](unsigned t) {
    const std::size_t lo = std::min(changed.size(), t * chunk);
    const std::size_t hi = std::min(changed.size(), lo + chunk);
    parts[t].reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
      ChangeRecord rec = classify_slice(changed[k]);
      if (rec.label != ChangeLabel::none) parts[t].push_back(std::move(rec));
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  std::vector<ChangeRecord> out;
  for (auto& p : parts) std::move(p.begin(), p.end(), std::back_inserter(out));
  return out;
}

std::vector<CriterionEvaluation> evaluate_criteria(const std::vector<ChangeRecord>& records,
                                                   const std::vector<GoldLabel>& gold) {
  using Key = std::tuple<std::string, std::string, std::int32_t, int, std::int32_t, int>;
  const auto key = [](const EntityId& s, const PropertyId& p, const Interval& iv) {
    return Key{s.str(), p.str(), iv.tau1().day_number(), static_cast<int>(iv.tau1().precision()),
               iv.tau2().day_number(), static_cast<int>(iv.tau2().precision())};
  };
  std::map<Key, ChangeLabel> gold_by_key;
  for (const auto& g : gold) gold_by_key.insert_or_assign(key(g.subject, g.property, g.interval), g.label);

  std::vector<ChangeLabel> truth;
  truth.reserve(records.size());
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& r : records) {
    auto it = gold_by_key.find(key(r.subject, r.property, r.interval));
    if (it == gold_by_key.end()) {
      if (n_missing++ < 20) {
        missing += (missing.empty() ? "" : ", ") + r.subject.str() + "/" + r.property.str() + "@(" +
                   r.interval.tau1().compact() + "," + r.interval.tau2().compact() + "]";
      }
      continue;
    }
    truth.push_back(it->second);
  }
  if (n_missing > 0) {
    throw ValidationError(std::to_string(n_missing) + " change record(s) without gold label: " + missing +
                          (n_missing > 20 ? ", ..." : ""));
  }

  std::vector<CriterionEvaluation> out;
  for (Criterion c : kAllCriteria) {
    CriterionEvaluation ev{c, {}, {}, {}};
    BinaryCounts counts;
    for (std::size_t k = 0; k < records.size(); ++k) {
      const ChangeLabel predicted = label_under(records[k], c);
      ++ev.confusion[index_of(truth[k])][index_of(predicted)];
      ++ev.support[index_of(truth[k])];
      counts.add(predicted == ChangeLabel::real_world, truth[k] == ChangeLabel::real_world);
    }
    ev.binary = compute_metrics(counts);
    out.push_back(ev);
  }
  return out;
}

std::vector<CategoryRow> category_distribution(const std::vector<ChangeRecord>& records) {
  std::map<std::string, CategoryRow> by_property;
  CategoryRow total{"total", {}};
  for (const auto& r : records) {
    auto& row = by_property.try_emplace(r.property.str(), CategoryRow{r.property.str(), {}}).first->second;
    ++row.counts[index_of(r.label)];
    ++total.counts[index_of(r.label)];
  }
  std::vector<CategoryRow> out;
  for (auto& [_, row] : by_property) out.push_back(row);
  out.push_back(total);
  return out;
}

void write_distribution_csv(std::ostream& out, const std::vector<CategoryRow>& rows) {
  out << "property,changes,real_world,completion,correction,real_world_frac,completion_frac,correction_frac\n";
  for (const auto& row : rows) {
    const std::size_t rw = row.counts[index_of(ChangeLabel::real_world)];
    const std::size_t co = row.counts[index_of(ChangeLabel::completion)];
    const std::size_t cr = row.counts[index_of(ChangeLabel::correction)];
    const std::size_t n = rw + co + cr;
    const auto frac = [n](std::size_t k) { return format_real(n == 0 ? 0.0 : double(k) / double(n), 4); };
    out << row.property << ',' << n << ',' << rw << ',' << co << ',' << cr << ',' << frac(rw) << ',' << frac(co)
        << ',' << frac(cr) << '\n';
  }
}

void write_criteria_csv(std::ostream& out, const std::vector<CriterionEvaluation>& evals) {
  out << "criterion,precision,recall,f1,tp,fp,fn,tn,gold_real_world,gold_completion,gold_correction,gold_none\n";
  for (const auto& ev : evals) {
    const auto& m = ev.binary;
    out << to_string(ev.criterion) << ',' << format_real(m.precision, 4) << ',' << format_real(m.recall, 4) << ','
        << format_real(m.f1, 4) << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ','
        << m.counts.tn << ',' << ev.support[index_of(ChangeLabel::real_world)] << ','
        << ev.support[index_of(ChangeLabel::completion)] << ',' << ev.support[index_of(ChangeLabel::correction)]
        << ',' << ev.support[index_of(ChangeLabel::none)] << '\n';
  }
}

std::string change_record_to_json(const ChangeRecord& r) {
  json modified = json::array();
  for (const auto& m : r.diff.modified) modified.push_back({{"before", record_json(m.before)}, {"after", record_json(m.after)}});
  json j{{"subject", r.subject.str()},
         {"property", r.property.str()},
         {"tau1", r.interval.tau1().compact()},
         {"tau2", r.interval.tau2().compact()},
         {"label", std::string(to_string(r.label))},
         {"signals",
          {{"timestamp", r.signals.timestamp},
           {"pca", r.signals.pca},
           {"bulk", r.signals.bulk},
           {"correction", r.signals.correction}}},
         {"added", records_json(r.diff.added)},
         {"removed", records_json(r.diff.removed)},
         {"modified", modified}};
  return j.dump();
}

ChangeRecord change_record_from_json(std::string_view line) {
  const json j = json::parse(line);
  ChangeRecord r{EntityId(j.at("subject").get<std::string>()),
                 PropertyId(j.at("property").get<std::string>()),
                 Interval(KbTimestamp::parse_compact(j.at("tau1").get<std::string>()),
                          KbTimestamp::parse_compact(j.at("tau2").get<std::string>())),
                 {},
                 parse_change_label(j.at("label").get<std::string>()),
                 {}};
  const json& s = j.at("signals");
  r.signals = {s.at("timestamp").get<bool>(), s.at("pca").get<bool>(), s.at("bulk").get<bool>(),
               s.at("correction").get<bool>()};
  for (const auto& x : j.at("added")) r.diff.added.push_back(record_from(x));
  for (const auto& x : j.at("removed")) r.diff.removed.push_back(record_from(x));
  for (const auto& x : j.at("modified")) r.diff.modified.push_back({record_from(x.at("before")), record_from(x.at("after"))});
  return r;
}

void write_change_records(std::ostream& out, const std::vector<ChangeRecord>& records) {
  for (const auto& r : records) out << change_record_to_json(r) << '\n';
}

std::vector<ChangeRecord> parse_change_records(std::string_view content, const std::string& source) {
  std::vector<ChangeRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(change_record_from_json(line));
    } catch (const std::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

}  // namespace kbstab
