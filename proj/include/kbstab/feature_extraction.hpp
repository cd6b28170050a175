#pragma once

// Entity features for stability prediction: structured bag-of-words over KB
// facts, tf-idf n-grams of article text (full or delta), scalar age, KB
// embeddings and the k-nearest-neighbour change fraction.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kbstab/ingest.hpp"
#include "kbstab/kb_model.hpp"

namespace kbstab {

struct NgramRange {
  unsigned low = 1;
  unsigned high = 1;
};

/// Throws ValidationError unless 1 <= low <= high <= 3.
void validate(const NgramRange& range);
NgramRange parse_ngram_range(std::string_view text);  // "1-3" or "2"

/// Lowercases ASCII, splits on runs of non-alphanumeric bytes (bytes >= 0x80
/// count as alphanumeric so UTF-8 words stay whole), keeps numeric tokens and
/// emits every n-gram in range joined by a single space.
std::vector<std::string> tokenize(std::string_view text, NgramRange range);

/// Sorted term list with document frequencies.
class Vocabulary {
 public:
  Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> doc_freq, std::size_t n_docs,
             NgramRange range);

  std::span<const std::string> terms() const noexcept { return terms_; }
  std::span<const std::size_t> doc_freq() const noexcept { return doc_freq_; }
  std::size_t n_docs() const noexcept { return n_docs_; }
  NgramRange ngram_range() const noexcept { return range_; }
  std::size_t size() const noexcept { return terms_.size(); }

  std::optional<std::size_t> index_of(std::string_view term) const;
  /// ln((1 + n_docs) / (1 + df)) + 1
  double idf(std::size_t index) const;

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> doc_freq_;
  std::size_t n_docs_;
  NgramRange range_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Keeps tokens present in at least min_df documents. Throws ValidationError
/// on an empty corpus.
Vocabulary fit_vocabulary(std::span<const std::vector<std::string>> token_docs, std::size_t min_df,
                          NgramRange range = {});
Vocabulary fit_vocabulary(std::span<const std::string> texts, NgramRange range, std::size_t min_df);
Vocabulary fit_vocabulary(std::span<const ArticleVersion> corpus, NgramRange range, std::size_t min_df);

void write_vocabulary(std::ostream& out, const Vocabulary& vocab);
Vocabulary parse_vocabulary(std::string_view content, const std::string& source = "<vocabulary>");

enum class FeatureKind { structured_bow, text_tfidf, scalar, embedding, knn_fraction };

std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);
/// Scalar, embedding and kNN blocks are dense and get z-scored for training.
bool is_dense(FeatureKind kind);

struct SparseEntry {
  std::uint32_t index;
  double value;
};

/// Sparse vector of a fixed dimension; entries sorted by index.
struct FeatureVector {
  EntityId entity;
  FeatureKind kind;
  std::size_t dimension = 0;
  std::vector<SparseEntry> entries;

  double norm() const;
  double value_at(std::size_t index) const;
  std::vector<double> dense() const;
};

FeatureVector dense_vector(EntityId entity, FeatureKind kind, std::span<const double> values);

enum class WeightMode { count, tfidf };

WeightMode parse_weight_mode(std::string_view text);

/// Term counts over vocab (count mode) or L2-normalized tf * idf (tfidf
/// mode). Out-of-vocabulary tokens are ignored.
FeatureVector vectorize_tokens(const EntityId& entity, std::span<const std::string> tokens, const Vocabulary& vocab,
                               WeightMode mode, FeatureKind kind);

/// tf-idf vector of a text, tokenized with the vocabulary's n-gram range.
FeatureVector vectorize_tfidf(const EntityId& entity, std::string_view doc, const Vocabulary& vocab);

/// "prop:<id>" and "propval:<id>=<lowercased object>" for each fact of the
/// subject, skipping the excluded (target) property.
std::vector<std::string> structured_tokens(const Snapshot& snapshot, const EntityId& subject,
                                           const PropertyId& exclude);

FeatureVector structured_bow(const Snapshot& snapshot, const EntityId& subject, const PropertyId& exclude,
                             WeightMode mode, const Vocabulary& vocab);

/// Lines of the new version that a longest-common-subsequence line diff marks
/// as inserted, excluding lines that merely moved. Throws ContractViolation
/// for versions of different entities.
std::string text_delta(const ArticleVersion& old_version, const ArticleVersion& new_version);

/// Latest article version per entity at or before a timepoint.
class ArticleIndex {
 public:
  explicit ArticleIndex(std::span<const ArticleVersion> articles);
  const ArticleVersion* at(const EntityId& entity, const KbTimestamp& as_of) const;

 private:
  std::map<std::string, std::vector<const ArticleVersion*>> by_entity_;
};

/// Whole years between the earliest birth fact (valid time, else the object
/// parsed as a date) and as_of. Absent without a usable birth fact.
std::optional<double> age_feature(const Snapshot& snapshot, const EntityId& subject, const PropertyId& birth_property,
                                  const KbTimestamp& as_of);

struct ReferenceLabel {
  EntityId entity;
  bool changed;
};

/// Fraction of the k nearest reference entities (Euclidean, subject
/// excluded, ties by entity id) whose property changed.
double knn_change_fraction(const EntityId& subject, const EmbeddingTable& embeddings,
                           std::span<const ReferenceLabel> reference, std::size_t k);

/// A named block of feature rows, one per entity.
struct FeatureMatrix {
  FeatureKind kind;
  std::vector<std::string> names;
  std::vector<FeatureVector> rows;
};

/// Header "#features<TAB>kind<TAB>dimension", a name line
/// "entity<TAB>name_0...", then one row per entity: dense kinds list every
/// value, sparse kinds list index:value pairs.
void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix);
FeatureMatrix parse_feature_matrix(std::string_view content, const std::string& source = "<features>");

/// Shortest round-trip decimal text.
std::string format_exact(double value);

}  // namespace kbstab
