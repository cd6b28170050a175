// Simplified adapter for Wikidata entity dumps (one JSON document per line).

#include <fstream>
#include <istream>

#include "json.hpp"
#include "kbstab/ingest.hpp"

namespace kbstab {

namespace {

using nlohmann::json;

constexpr const char* kStartTime = "P580";
constexpr const char* kPointInTime = "P585";

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// "+2018-07-10T00:00:00Z" with Wikidata precision code (9 year, 10 month,
// 11 day; coarser codes collapse to year).
KbTimestamp parse_wikidata_time(const json& value) {
  const std::string& raw = value.at("time").get_ref<const std::string&>();
  const int code = value.value("precision", 11);
  if (raw.size() < 11 || raw[0] != '+') throw ValidationError("unsupported time '" + raw + "'");
  const auto t = raw.find('T');
  std::string date = raw.substr(1, t == std::string::npos ? std::string::npos : t - 1);
  // Year- and month-precision values carry 00 components.
  if (date.size() >= 10) {
    if (date.compare(5, 2, "00") == 0) date.replace(5, 2, "01");
    if (date.compare(8, 2, "00") == 0) date.replace(8, 2, "01");
  }
  const Precision p = code >= 11 ? Precision::day : code == 10 ? Precision::month : Precision::year;
  return KbTimestamp::parse(date, p);
}

std::optional<ObjectValue> snak_object(const json& snak) {
  if (snak.value("snaktype", "value") != "value") return std::nullopt;
  const auto dv = snak.find("datavalue");
  if (dv == snak.end()) return std::nullopt;
  const std::string type = dv->value("type", "");
  const json& v = dv->at("value");
  if (type == "wikibase-entityid") {
    if (v.contains("id")) return ObjectValue::entity(v.at("id").get<std::string>());
    return ObjectValue::entity("Q" + std::to_string(v.at("numeric-id").get<long long>()));
  }
  if (type == "string") return ObjectValue::literal(v.get<std::string>());
  if (type == "monolingualtext") return ObjectValue::literal(v.at("text").get<std::string>());
  if (type == "time") {
    try {
      return ObjectValue::literal(parse_wikidata_time(v).compact());
    } catch (const ValidationError&) {
      return ObjectValue::literal(v.at("time").get<std::string>());
    }
  }
  if (type == "quantity") {
    std::string amount = v.at("amount").get<std::string>();
    if (!amount.empty() && amount[0] == '+') amount.erase(0, 1);
    const std::string unit = v.value("unit", "1");
    if (unit != "1") amount += " " + unit.substr(unit.find_last_of('/') + 1);
    return ObjectValue::literal(amount);
  }
  if (type == "globecoordinate") {
    return ObjectValue::literal(v.at("latitude").dump() + "," + v.at("longitude").dump());
  }
  return ObjectValue::literal(v.is_string() ? v.get<std::string>() : v.dump());
}

struct QualifierTime {
  std::optional<KbTimestamp> time;
  bool malformed = false;
};

QualifierTime qualifier_time(const json& statement, const char* property) {
  QualifierTime out;
  const auto quals = statement.find("qualifiers");
  if (quals == statement.end() || !quals->contains(property)) return out;
  for (const json& snak : quals->at(property)) {
    if (snak.value("snaktype", "value") != "value") continue;
    try {
      out.time = parse_wikidata_time(snak.at("datavalue").at("value"));
      return out;
    } catch (const std::exception&) {
      out.malformed = true;
    }
  }
  return out;
}

}  // namespace

WikidataConversion convert_wikidata(std::istream& in, const std::set<PropertyId>& property_allowlist,
                                    const KbTimestamp& sampled_at) {
  std::vector<Fact> facts;
  std::size_t entities = 0;
  std::size_t skipped = 0;
  std::size_t bad_dates = 0;
  std::size_t future = 0;

  std::string raw;
  while (std::getline(in, raw)) {
    std::string_view line = trim(raw);
    if (!line.empty() && line.back() == ',') line.remove_suffix(1);
    if (line.empty() || line == "[" || line == "]") continue;

    json doc;
    try {
      doc = json::parse(line);
      if (!doc.is_object() || !doc.contains("id")) throw std::runtime_error("not an entity document");
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    std::vector<Fact> entity_facts;
    try {
      EntityId subject(doc.at("id").get<std::string>());
      const auto claims = doc.find("claims");
      if (claims != doc.end() && claims->is_object()) {
        for (const auto& [pid, statements] : claims->items()) {
          PropertyId property(pid);
          if (!property_allowlist.contains(property)) continue;
          const bool has_preferred = std::any_of(statements.begin(), statements.end(), [](const json& s) {
            return s.value("rank", "normal") == "preferred";
          });
          const std::string wanted = has_preferred ? "preferred" : "normal";
          for (const json& st : statements) {
            if (st.value("rank", "normal") != wanted) continue;
            auto object = snak_object(st.at("mainsnak"));
            if (!object) continue;

            std::optional<KbTimestamp> valid_time;
            bool malformed = false;
            for (const char* q : {kStartTime, kPointInTime}) {
              const QualifierTime qt = qualifier_time(st, q);
              malformed = malformed || qt.malformed;
              if (qt.time) {
                valid_time = qt.time;
                break;
              }
            }
            if (malformed && !valid_time) ++bad_dates;

            KbTimestamp added = sampled_at;
            if (const auto fs = st.find("first_seen"); fs != st.end() && fs->is_string()) {
              try {
                added = KbTimestamp::parse_compact(fs->get<std::string>());
              } catch (const ValidationError&) {
                ++bad_dates;
              }
            }
            if (added > sampled_at) {
              ++future;
              continue;
            }
            entity_facts.push_back(Fact{subject, property, std::move(*object), valid_time, added});
          }
        }
      }
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    ++entities;
    std::move(entity_facts.begin(), entity_facts.end(), std::back_inserter(facts));
  }
  return WikidataConversion{Snapshot(sampled_at, std::move(facts), DuplicatePolicy::keep_earliest), entities,
                            skipped, bad_dates, future};
}

WikidataConversion convert_wikidata(const std::filesystem::path& path,
                                    const std::set<PropertyId>& property_allowlist,
                                    const KbTimestamp& sampled_at) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return convert_wikidata(in, property_allowlist, sampled_at);
}

}  // namespace kbstab
