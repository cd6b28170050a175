#pragma once

// Synthetic evolving KB with known change causes, plus article text with
// planted change vocabulary. Output is deterministic for a given seed.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kbstab/ingest.hpp"
#include "kbstab/kb_model.hpp"

namespace kbstab {

struct PropertySpec {
  PropertyId id;
  ObjectValue::Kind kind;
};

struct GeneratorConfig {
  // Probability of each cause per (entity, property) pair; must sum to 1.
  double real_world = 0.25;
  double completion = 0.25;
  double correction = 0.25;
  double none = 0.25;
  std::size_t entity_count = 100;
  std::vector<PropertySpec> properties{{PropertyId("P54"), ObjectValue::Kind::entity},
                                       {PropertyId("P1082"), ObjectValue::Kind::literal}};
  KbTimestamp tau1 = KbTimestamp::of_year(2017);
  KbTimestamp tau2 = KbTimestamp::of_year(2020);
  std::size_t max_base_records = 3;
  std::uint64_t seed = 0;
};

/// Throws ValidationError on rates outside [0, 1] or not summing to 1, an
/// empty entity set or property list, or tau2 <= tau1.
void validate(const GeneratorConfig& config);

struct GeneratedKb {
  Snapshot before;  // sampled at tau1
  Snapshot after;   // sampled at tau2
  std::vector<GoldLabel> gold;  // one per (entity, property), including none
  std::vector<EntityId> entities;
};

/// Per pair: real-world changes add one record with a day-precision valid
/// time inside (tau1, tau2]; completions add two to four records with null
/// or pre-tau1 valid times, all recorded on one day; corrections remove a
/// record or perturb an object's text keeping its valid time.
GeneratedKb generate(const GeneratorConfig& config);

struct TextConfig {
  double signal_rate = 0.9;
  std::vector<std::string> signal_tokens{"signed", "contract", "club", "new"};
  std::vector<std::string> distractor_tokens{"retired", "injured"};
  std::size_t vocabulary_size = 300;
  std::size_t words_per_doc = 60;
  std::size_t words_added = 20;
  // Entities are positive when they have a real_world label for this
  // property; an empty value means any property.
  std::string property;
};

/// One (tau1, tau2) article pair per labelled entity, in entity order. The
/// later version appends a paragraph that, with probability signal_rate,
/// contains the signal tokens for positive entities and the distractor
/// tokens for the others.
std::vector<std::pair<ArticleVersion, ArticleVersion>> generate_text(const std::vector<GoldLabel>& gold,
                                                                      const TextConfig& config, std::uint64_t seed);

/// Applies the recognised keys (real_world, completion, correction, none,
/// entity_count, properties as "P54:entity,P1082:literal", tau1, tau2,
/// max_base_records, signal_rate, signal_tokens, distractor_tokens,
/// vocabulary_size, words_per_doc, words_added, text_property) and ignores
/// the rest. Malformed values are a ValidationError.
void apply_generator_settings(const std::map<std::string, std::string>& settings, GeneratorConfig& kb,
                              TextConfig& text);

}  // namespace kbstab
