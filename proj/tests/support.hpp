#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kbstab/kb_model.hpp"

namespace kbstab::testing {

inline KbTimestamp ts(const std::string& compact) { return KbTimestamp::parse_compact(compact); }

inline std::optional<KbTimestamp> tv(const std::string& compact) {
  if (compact.empty()) return std::nullopt;
  return ts(compact);
}

inline ObjectRecord rec(const std::string& object, const std::string& valid = "", const std::string& tx = "2000") {
  return {ObjectValue::literal(object), tv(valid), ts(tx)};
}

inline ObjectRecord erec(const std::string& object, const std::string& valid = "", const std::string& tx = "2000") {
  return {ObjectValue::entity(object), tv(valid), ts(tx)};
}

inline PairState state(const std::string& s, const std::string& p, std::vector<ObjectRecord> records) {
  return PairState(EntityId(s), PropertyId(p), std::move(records));
}

inline Fact fact(const std::string& s, const std::string& p, const std::string& o, const std::string& valid,
                 const std::string& tx) {
  return {EntityId(s), PropertyId(p), ObjectValue::entity(o), tv(valid), ts(tx)};
}

inline std::string data_path(const std::string& name) { return std::string(KBSTAB_TEST_DATA) + "/" + name; }

}  // namespace kbstab::testing
