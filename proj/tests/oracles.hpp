#pragma once

// Brute-force reference computations written independently of the library
// code they check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "kbstab/feature_extraction.hpp"
#include "kbstab/kb_model.hpp"
#include "kbstab/random.hpp"

namespace kbstab::testing {

// Tokenizer built on <cctype> byte classification; n-grams come from the
// unigram list.
inline std::vector<std::string> oracle_tokens(const std::string& text, unsigned lo, unsigned hi) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text + " ") {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  std::vector<std::string> out;
  for (unsigned n = lo; n <= hi; ++n) {
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::string g = words[i];
      for (unsigned k = 1; k < n; ++k) g += " " + words[i + k];
      out.push_back(g);
    }
  }
  return out;
}

/// Smoothed tf-idf of docs[which], L2-normalized, keyed by term.
inline std::map<std::string, double> oracle_tfidf(const std::vector<std::string>& docs, std::size_t which, unsigned lo,
                                                  unsigned hi) {
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    const auto toks = oracle_tokens(d, lo, hi);
    for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
  }
  std::map<std::string, double> w;
  for (const auto& t : oracle_tokens(docs[which], lo, hi)) w[t] += 1.0;
  double norm2 = 0.0;
  for (auto& [t, v] : w) {
    v *= std::log((1.0 + static_cast<double>(docs.size())) / (1.0 + static_cast<double>(df[t]))) + 1.0;
    norm2 += v * v;
  }
  for (auto& [t, v] : w) v /= std::sqrt(norm2);
  return w;
}

/// n points around two centres; even indices sit near +1, odd near -1.
inline EmbeddingTable planted_embeddings(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable t(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    const double centre = i % 2 == 0 ? 1.0 : -1.0;
    for (auto& x : v) x = centre + rng.normal();
    t.insert(EntityId("Q" + std::to_string(i)), v);
  }
  return t;
}

/// Sorts every pairwise distance from the subject, ties broken by id.
inline double brute_knn(const EntityId& subject, const EmbeddingTable& emb, const std::vector<ReferenceLabel>& ref,
                        std::size_t k) {
  std::vector<std::tuple<double, std::string, bool>> all;
  const auto& x = emb.at(subject);
  for (const auto& r : ref) {
    if (r.entity == subject) continue;
    const auto& y = emb.at(r.entity);
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
    all.emplace_back(std::sqrt(d), r.entity.str(), r.changed);
  }
  std::sort(all.begin(), all.end());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < k; ++i) changed += std::get<2>(all[i]) ? 1 : 0;
  return static_cast<double>(changed) / static_cast<double>(k);
}

inline bool same_key(const ObjectRecord& a, const ObjectRecord& b) {
  return a.object == b.object && a.valid_time == b.valid_time;
}

inline std::size_t occurrences(std::span<const ObjectRecord> pool, const ObjectRecord& r) {
  return static_cast<std::size_t>(std::count_if(pool.begin(), pool.end(), [&](const auto& x) { return same_key(x, r); }));
}

/// Some record of the later state has tau1 < t_v <= tau2.
inline bool oracle_timestamp(const PairState& after, const KbTimestamp& tau1, const KbTimestamp& tau2) {
  for (const auto& r : after.records()) {
    if (r.valid_time && tau1 < *r.valid_time && *r.valid_time <= tau2) return true;
  }
  return false;
}

/// The earlier state is non-empty and the later one holds an object it lacked.
inline bool oracle_pca(const PairState& before, const PairState& after) {
  if (before.empty()) return false;
  for (const auto& r : after.records()) {
    bool seen = false;
    for (const auto& x : before.records()) seen = seen || x.object == r.object;
    if (!seen) return true;
  }
  return false;
}

/// Negation of "all distinct new objects share one transaction day", with a
/// single new object counting as no bulk evidence.
inline bool oracle_bulk(const PairState& before, const PairState& after) {
  std::vector<ObjectRecord> fresh;
  for (const auto& r : after.records()) {
    if (occurrences(before.records(), r) == 0) fresh.push_back(r);
  }
  std::set<ObjectValue> distinct;
  for (const auto& x : fresh) distinct.insert(x.object);
  if (distinct.size() <= 1) return true;
  for (const auto& x : fresh) {
    for (const auto& y : fresh) {
      if (x.object != y.object && x.transaction_time.day_number() != y.transaction_time.day_number()) return true;
    }
  }
  return false;
}

}  // namespace kbstab::testing
