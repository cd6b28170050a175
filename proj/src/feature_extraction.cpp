#include "kbstab/feature_extraction.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

namespace kbstab {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c); }

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  if (text.empty()) return lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(pos, end - pos));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return lines;
}

}  // namespace

void validate(const NgramRange& range) {
  if (range.low < 1 || range.high > 3 || range.low > range.high) {
    throw ValidationError("n-gram range must satisfy 1 <= low <= high <= 3 (got " + std::to_string(range.low) +
                          "-" + std::to_string(range.high) + ")");
  }
}

NgramRange parse_ngram_range(std::string_view text) {
  const auto dash = text.find('-');
  const auto num = [&](std::string_view s) {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
      throw ValidationError("invalid n-gram range '" + std::string(text) + "'");
    }
    return v;
  };
  NgramRange r;
  r.low = num(text.substr(0, dash));
  r.high = dash == std::string_view::npos ? r.low : num(text.substr(dash + 1));
  validate(r);
  return r;
}

std::vector<std::string> tokenize(std::string_view text, NgramRange range) {
  validate(range);
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur += lower(c);
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));

  if (range.low == 1 && range.high == 1) return words;
  std::vector<std::string> out;
  for (unsigned n = range.low; n <= range.high; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string gram = words[i];
      for (std::size_t k = 1; k < n; ++k) {
        gram += ' ';
        gram += words[i + k];
      }
      out.push_back(std::move(gram));
    }
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> doc_freq, std::size_t n_docs,
                       NgramRange range)
    : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)), n_docs_(n_docs), range_(range) {
  validate(range_);
  if (terms_.size() != doc_freq_.size()) throw ValidationError("vocabulary terms and frequencies differ in length");
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0 && !(terms_[i - 1] < terms_[i])) throw ValidationError("vocabulary terms must be unique and sorted");
    if (doc_freq_[i] < 1 || doc_freq_[i] > n_docs_) {
      throw ValidationError("document frequency of '" + terms_[i] + "' out of range");
    }
    index_.emplace(terms_[i], i);
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double Vocabulary::idf(std::size_t index) const {
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(doc_freq_[index]))) + 1.0;
}

Vocabulary fit_vocabulary(std::span<const std::vector<std::string>> token_docs, std::size_t min_df,
                          NgramRange range) {
  if (token_docs.empty()) throw ValidationError("cannot fit a vocabulary on an empty corpus");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : token_docs) {
    std::set<std::string_view> seen(doc.begin(), doc.end());
    for (std::string_view t : seen) ++df[std::string(t)];
  }
  std::vector<std::string> terms;
  std::vector<std::size_t> freq;
  for (auto& [term, n] : df) {
    if (n >= min_df) {
      terms.push_back(term);
      freq.push_back(n);
    }
  }
  return Vocabulary(std::move(terms), std::move(freq), token_docs.size(), range);
}

Vocabulary fit_vocabulary(std::span<const std::string> texts, NgramRange range, std::size_t min_df) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(texts.size());
  for (const auto& t : texts) docs.push_back(tokenize(t, range));
  return fit_vocabulary(docs, min_df, range);
}

Vocabulary fit_vocabulary(std::span<const ArticleVersion> corpus, NgramRange range, std::size_t min_df) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& a : corpus) docs.push_back(tokenize(a.text, range));
  return fit_vocabulary(docs, min_df, range);
}

void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << "#vocabulary\t" << vocab.n_docs() << '\t' << vocab.ngram_range().low << '\t' << vocab.ngram_range().high
      << '\n';
  for (std::size_t i = 0; i < vocab.size(); ++i) out << escape_field(vocab.terms()[i]) << '\t' << vocab.doc_freq()[i] << '\n';
}

Vocabulary parse_vocabulary(std::string_view content, const std::string& source) {
  std::size_t line_no = 0, pos = 0;
  std::optional<std::size_t> n_docs;
  NgramRange range;
  std::vector<std::string> terms;
  std::vector<std::size_t> freq;
  const auto to_size = [&](std::string_view s) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
      throw ParseError(source, line_no, "invalid integer '" + std::string(s) + "'");
    }
    return v;
  };
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (!n_docs) {
      if (f.size() != 4 || f[0] != "#vocabulary") throw ParseError(source, line_no, "missing #vocabulary header");
      n_docs = to_size(f[1]);
      range = {static_cast<unsigned>(to_size(f[2])), static_cast<unsigned>(to_size(f[3]))};
      continue;
    }
    if (f.size() != 2) throw ParseError(source, line_no, "expected term<TAB>df");
    terms.push_back(unescape_field(f[0]));
    freq.push_back(to_size(f[1]));
  }
  if (!n_docs) throw ParseError(source, 1, "missing #vocabulary header");
  try {
    return Vocabulary(std::move(terms), std::move(freq), *n_docs, range);
  } catch (const ValidationError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::structured_bow: return "structured_bow";
    case FeatureKind::text_tfidf: return "text_tfidf";
    case FeatureKind::scalar: return "scalar";
    case FeatureKind::embedding: return "embedding";
    case FeatureKind::knn_fraction: return "knn_fraction";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view text) {
  for (FeatureKind k : {FeatureKind::structured_bow, FeatureKind::text_tfidf, FeatureKind::scalar,
                        FeatureKind::embedding, FeatureKind::knn_fraction}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown feature kind '" + std::string(text) + "'");
}

bool is_dense(FeatureKind kind) {
  return kind == FeatureKind::scalar || kind == FeatureKind::embedding || kind == FeatureKind::knn_fraction;
}

double FeatureVector::norm() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.value * e.value;
  return std::sqrt(s);
}

double FeatureVector::value_at(std::size_t index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const SparseEntry& e, std::size_t i) { return e.index < i; });
  return (it != entries.end() && it->index == index) ? it->value : 0.0;
}

std::vector<double> FeatureVector::dense() const {
  std::vector<double> out(dimension, 0.0);
  for (const auto& e : entries) out[e.index] = e.value;
  return out;
}

FeatureVector dense_vector(EntityId entity, FeatureKind kind, std::span<const double> values) {
  FeatureVector v{std::move(entity), kind, values.size(), {}};
  v.entries.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw ValidationError("non-finite feature value for " + v.entity.str());
    v.entries.push_back({static_cast<std::uint32_t>(i), values[i]});
  }
  return v;
}

WeightMode parse_weight_mode(std::string_view text) {
  if (text == "count") return WeightMode::count;
  if (text == "tfidf") return WeightMode::tfidf;
  throw ValidationError("unknown weighting '" + std::string(text) + "'");
}

FeatureVector vectorize_tokens(const EntityId& entity, std::span<const std::string> tokens, const Vocabulary& vocab,
                               WeightMode mode, FeatureKind kind) {
  std::map<std::uint32_t, double> tf;
  for (const auto& t : tokens) {
    if (auto i = vocab.index_of(t)) tf[static_cast<std::uint32_t>(*i)] += 1.0;
  }
  FeatureVector v{entity, kind, vocab.size(), {}};
  v.entries.reserve(tf.size());
  for (const auto& [i, count] : tf) {
    v.entries.push_back({i, mode == WeightMode::tfidf ? count * vocab.idf(i) : count});
  }
  if (mode == WeightMode::tfidf) {
    const double n = v.norm();
    if (n > 0.0) {
      for (auto& e : v.entries) e.value /= n;
    }
  }
  return v;
}

FeatureVector vectorize_tfidf(const EntityId& entity, std::string_view doc, const Vocabulary& vocab) {
  const auto tokens = tokenize(doc, vocab.ngram_range());
  return vectorize_tokens(entity, tokens, vocab, WeightMode::tfidf, FeatureKind::text_tfidf);
}

std::vector<std::string> structured_tokens(const Snapshot& snapshot, const EntityId& subject,
                                           const PropertyId& exclude) {
  std::vector<std::string> out;
  for (const Fact& f : snapshot.facts_of(subject)) {
    if (f.property == exclude) continue;
    out.push_back("prop:" + f.property.str());
    std::string value;
    value.reserve(f.object.text().size());
    for (unsigned char c : f.object.text()) value += lower(c);
    out.push_back("propval:" + f.property.str() + "=" + value);
  }
  return out;
}

FeatureVector structured_bow(const Snapshot& snapshot, const EntityId& subject, const PropertyId& exclude,
                             WeightMode mode, const Vocabulary& vocab) {
  const auto tokens = structured_tokens(snapshot, subject, exclude);
  return vectorize_tokens(subject, tokens, vocab, mode, FeatureKind::structured_bow);
}

std::string text_delta(const ArticleVersion& old_version, const ArticleVersion& new_version) {
  if (old_version.entity != new_version.entity) {
    throw ContractViolation("text_delta across entities " + old_version.entity.str() + " and " +
                            new_version.entity.str());
  }
  const auto a = split_lines(old_version.text);
  const auto b = split_lines(new_version.text);

  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  const std::size_t n = a.size() - prefix - suffix;
  const std::size_t m = b.size() - prefix - suffix;

  // LCS table over the differing middle section.
  std::vector<std::uint32_t> dp((n + 1) * (m + 1), 0);
  const auto cell = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      cell(i, j) = a[prefix + i] == b[prefix + j] ? cell(i + 1, j + 1) + 1 : std::max(cell(i + 1, j), cell(i, j + 1));
    }
  }
  std::vector<std::string_view> unmatched_old, unmatched_new;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[prefix + i] == b[prefix + j]) {
      ++i;
      ++j;
    } else if (cell(i + 1, j) >= cell(i, j + 1)) {
      unmatched_old.push_back(a[prefix + i++]);
    } else {
      unmatched_new.push_back(b[prefix + j++]);
    }
  }
  for (; i < n; ++i) unmatched_old.push_back(a[prefix + i]);
  for (; j < m; ++j) unmatched_new.push_back(b[prefix + j]);

  // Moved lines reappear among the unmatched old lines; they are not new text.
  std::map<std::string_view, std::size_t> moved;
  for (auto line : unmatched_old) ++moved[line];
  std::string out;
  bool first = true;
  for (auto line : unmatched_new) {
    auto it = moved.find(line);
    if (it != moved.end() && it->second > 0) {
      --it->second;
      continue;
    }
    if (!first) out += '\n';
    out += line;
    first = false;
  }
  return out;
}

ArticleIndex::ArticleIndex(std::span<const ArticleVersion> articles) {
  for (const auto& a : articles) by_entity_[a.entity.str()].push_back(&a);
  for (auto& [_, versions] : by_entity_) {
    std::stable_sort(versions.begin(), versions.end(),
                     [](const ArticleVersion* x, const ArticleVersion* y) { return x->as_of < y->as_of; });
  }
}

const ArticleVersion* ArticleIndex::at(const EntityId& entity, const KbTimestamp& as_of) const {
  auto it = by_entity_.find(entity.str());
  if (it == by_entity_.end()) return nullptr;
  const ArticleVersion* best = nullptr;
  for (const ArticleVersion* v : it->second) {
    if (v->as_of <= as_of) best = v;
  }
  return best;
}

std::optional<double> age_feature(const Snapshot& snapshot, const EntityId& subject, const PropertyId& birth_property,
                                  const KbTimestamp& as_of) {
  std::optional<KbTimestamp> birth;
  for (const Fact& f : snapshot.facts_of(subject, birth_property)) {
    std::optional<KbTimestamp> t = f.valid_time;
    if (!t) {
      try {
        t = KbTimestamp::parse_compact(f.object.text());
      } catch (const ValidationError&) {
        continue;
      }
    }
    if (!birth || *t < *birth) birth = t;
  }
  if (!birth || as_of < *birth) return std::nullopt;
  int years = as_of.year() - birth->year();
  if (std::pair(as_of.month(), as_of.day()) < std::pair(birth->month(), birth->day())) --years;
  return static_cast<double>(std::max(years, 0));
}

double knn_change_fraction(const EntityId& subject, const EmbeddingTable& embeddings,
                           std::span<const ReferenceLabel> reference, std::size_t k) {
  const auto& x = embeddings.at(subject);
  struct Candidate {
    double dist2;
    const ReferenceLabel* ref;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(reference.size());
  for (const auto& r : reference) {
    const auto& y = embeddings.at(r.entity);
    if (r.entity == subject) continue;
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    candidates.push_back({d, &r});
  }
  if (k == 0 || k > candidates.size()) {
    throw ValidationError("k = " + std::to_string(k) + " outside [1, " + std::to_string(candidates.size()) +
                          "] reference entities");
  }
  const auto closer = [](const Candidate& a, const Candidate& b) {
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    return a.ref->entity < b.ref->entity;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), closer);
  const auto changed = std::count_if(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                                     [](const Candidate& c) { return c.ref->changed; });
  return static_cast<double>(changed) / static_cast<double>(k);
}

std::string format_exact(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, static_cast<std::size_t>(ptr - buf));
}

void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix) {
  out << "#features\t" << to_string(matrix.kind) << '\t' << matrix.names.size() << '\n';
  out << "entity";
  for (const auto& name : matrix.names) out << '\t' << escape_field(name);
  out << '\n';
  const bool dense = is_dense(matrix.kind);
  for (const auto& row : matrix.rows) {
    out << row.entity.str();
    if (dense) {
      for (std::size_t i = 0; i < matrix.names.size(); ++i) out << '\t' << format_exact(row.value_at(i));
    } else {
      for (const auto& e : row.entries) out << '\t' << e.index << ':' << format_exact(e.value);
    }
    out << '\n';
  }
}

FeatureMatrix parse_feature_matrix(std::string_view content, const std::string& source) {
  std::size_t line_no = 0, pos = 0;
  std::optional<FeatureMatrix> m;
  bool have_names = false;
  std::size_t dim = 0;
  const auto number = [&](std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError(source, line_no, "invalid number '" + std::string(s) + "'");
    }
    return v;
  };
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    try {
      if (!m) {
        if (f.size() != 3 || f[0] != "#features") throw ParseError(source, line_no, "missing #features header");
        dim = static_cast<std::size_t>(number(f[2]));
        m = FeatureMatrix{parse_feature_kind(f[1]), {}, {}};
        continue;
      }
      if (!have_names) {
        if (f.size() != dim + 1 || f[0] != "entity") {
          throw ParseError(source, line_no, "name line must list " + std::to_string(dim) + " feature names");
        }
        for (std::size_t i = 1; i < f.size(); ++i) m->names.push_back(unescape_field(f[i]));
        have_names = true;
        continue;
      }
      FeatureVector v{EntityId(std::string(f[0])), m->kind, dim, {}};
      if (is_dense(m->kind)) {
        if (f.size() != dim + 1) throw ParseError(source, line_no, "dense row must have " + std::to_string(dim) + " values");
        std::vector<double> values;
        for (std::size_t i = 1; i < f.size(); ++i) values.push_back(number(f[i]));
        v = dense_vector(v.entity, m->kind, values);
      } else {
        for (std::size_t i = 1; i < f.size(); ++i) {
          const auto colon = f[i].find(':');
          if (colon == std::string_view::npos) throw ParseError(source, line_no, "expected index:value");
          const double idx = number(f[i].substr(0, colon));
          if (idx < 0 || idx >= static_cast<double>(dim) || (!v.entries.empty() && idx <= v.entries.back().index)) {
            throw ParseError(source, line_no, "sparse index out of range or order");
          }
          v.entries.push_back({static_cast<std::uint32_t>(idx), number(f[i].substr(colon + 1))});
        }
      }
      m->rows.push_back(std::move(v));
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!m || !have_names) throw ParseError(source + ": incomplete feature matrix header");
  return std::move(*m);
}

}  // namespace kbstab
