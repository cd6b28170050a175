#pragma once

// Loaders and writers for every file format the toolkit reads. All formats
// are UTF-8, line-delimited and tab-separated; '#' starts a comment line.
// Free-text fields escape backslash, tab, CR and LF as \\ \t \r \n.
//
//   snapshot   header "#snapshot<TAB>date<TAB>prec", then
//              subject property kind value vt_date vt_prec ta_date ta_prec
//   edit log   subject property time kind
//   articles   entity as_of text
//   embeddings entity x_1 ... x_d
//   labels     subject property tau1 tau2 label
//
// Dates in the snapshot format are full YYYY-MM-DD with a y/m/d precision
// tag. Everywhere else dates are written compactly (YYYY, YYYY-MM or
// YYYY-MM-DD) and the form carries the precision.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbstab/kb_model.hpp"

namespace kbstab {

enum class ChangeLabel { none, correction, completion, real_world };

std::string_view to_string(ChangeLabel label);
ChangeLabel parse_change_label(std::string_view text);

enum class EditKind { add, remove, modify };

std::string_view to_string(EditKind kind);
EditKind parse_edit_kind(std::string_view text);

struct EditLogEntry {
  EntityId subject;
  PropertyId property;
  KbTimestamp transaction_time;
  EditKind kind;
};

/// One version of an entity's article. Empty text means no article.
struct ArticleVersion {
  EntityId entity;
  KbTimestamp as_of;
  std::string text;
};

struct GoldLabel {
  EntityId subject;
  PropertyId property;
  Interval interval;
  ChangeLabel label;
};

/// Entity id -> dense vector, all rows of one dimension with finite values.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dimension);

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return rows_.size(); }

  /// Throws ValidationError naming the entity on dimension mismatch,
  /// non-finite values or a repeated id.
  void insert(const EntityId& entity, std::vector<double> values);
  const std::vector<double>* find(const EntityId& entity) const;
  const std::vector<double>& at(const EntityId& entity) const;  // throws ValidationError
  std::vector<EntityId> ids() const;  // sorted

  /// Copy with every vector multiplied by factor.
  EmbeddingTable scaled(double factor) const;

 private:
  std::size_t dimension_;
  std::unordered_map<std::string, std::vector<double>> rows_;
};

// Field escaping shared by all text formats.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view escaped);
std::vector<std::string_view> split_tabs(std::string_view line);

/// Reads an entire file; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);

Snapshot parse_snapshot(std::string_view content, const std::string& source = "<snapshot>");
Snapshot load_snapshot(const std::filesystem::path& path);
void write_snapshot(std::ostream& out, const Snapshot& snapshot);
std::string snapshot_to_string(const Snapshot& snapshot);

std::vector<EditLogEntry> parse_edit_log(std::string_view content, const std::string& source = "<edit log>");
std::vector<EditLogEntry> load_edit_log(const std::filesystem::path& path);
void write_edit_log(std::ostream& out, const std::vector<EditLogEntry>& entries);

std::vector<ArticleVersion> parse_articles(std::string_view content, const std::string& source = "<articles>");
std::vector<ArticleVersion> load_articles(const std::filesystem::path& path);
void write_articles(std::ostream& out, const std::vector<ArticleVersion>& articles);

EmbeddingTable parse_embeddings(std::string_view content, const std::string& source = "<embeddings>");
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingTable& table);

std::vector<GoldLabel> parse_labels(std::string_view content, const std::string& source = "<labels>");
std::vector<GoldLabel> load_labels(const std::filesystem::path& path);
void write_labels(std::ostream& out, const std::vector<GoldLabel>& labels);

/// One entity id per line.
std::vector<EntityId> load_entity_list(const std::filesystem::path& path);
/// "property<TAB>unstable|stable" per line; true means unstable.
std::map<PropertyId, bool> load_property_labels(const std::filesystem::path& path);

struct WikidataConversion {
  Snapshot snapshot;
  std::size_t entities_read = 0;
  std::size_t skipped_lines = 0;      // unparseable documents
  std::size_t bad_qualifier_dates = 0;
  std::size_t not_yet_visible = 0;   // first-seen date after sampled_at
};

/// Reads an entity-per-line dump (the JSON array brackets and trailing
/// commas of full dumps are tolerated). Only truthy statements of
/// allow-listed properties become facts: preferred-rank statements when a
/// property has any, otherwise normal-rank ones.
WikidataConversion convert_wikidata(std::istream& in, const std::set<PropertyId>& property_allowlist,
                                    const KbTimestamp& sampled_at);
WikidataConversion convert_wikidata(const std::filesystem::path& path,
                                    const std::set<PropertyId>& property_allowlist,
                                    const KbTimestamp& sampled_at);

}  // namespace kbstab
