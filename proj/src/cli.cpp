#include "kbstab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "kbstab/change_analysis.hpp"
#include "kbstab/errors.hpp"
#include "kbstab/feature_extraction.hpp"
#include "kbstab/ingest.hpp"
#include "kbstab/predictor.hpp"
#include "kbstab/stability_filters.hpp"
#include "kbstab/temporal_density.hpp"
#include "kbstab/test_harness.hpp"

namespace fs = std::filesystem;

namespace kbstab::cli {

std::string digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

using Settings = std::map<std::string, std::string>;

Settings parse_settings(std::string_view content, const std::string& source) {
  Settings out;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string line(content.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

// Per-invocation state: inputs read, outputs written, and the manifest fields.
struct Context {
  Context(std::ostream& o, std::ostream& e) : out(o), err(e) {}

  std::ostream& out;
  std::ostream& err;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  std::string config_path;
  std::string config_digest = "none";
  Settings settings;
  std::string command;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<std::pair<std::string, std::string>> inputs;

  std::string load(const std::string& path) {
    std::string content = read_file(path);
    inputs.emplace_back(path, digest(content));
    return content;
  }

  std::string manifest(const std::string& output) const {
    std::ostringstream m;
    m << "#manifest\ncommand\t" << command << "\noutput\t" << fs::path(output).filename().string() << "\nseed\t"
      << seed << "\nconfig\t" << config_digest << '\n';
    for (const auto& [k, v] : params) m << "param\t" << k << '\t' << v << '\n';
    for (const auto& [p, d] : inputs) m << "input\t" << p << '\t' << d << '\n';
    return m.str();
  }

  void emit(const std::string& path, const std::string& content) {
    write_atomic(path, content);
    write_atomic(path + ".manifest", manifest(path) + "digest\t" + digest(content) + '\n');
  }

  static void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path() && !fs::is_directory(target.parent_path())) {
      throw IoError("output directory does not exist: " + target.parent_path().string());
    }
    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot write " + tmp);
      f << content;
      f.flush();
      if (!f) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw IoError("cannot move output into place: " + path);
    }
  }
};

KbTimestamp date(const std::string& text) { return KbTimestamp::parse_compact(text); }

std::vector<EntityId> entity_list(Context& ctx, const std::string& path) {
  ctx.load(path);
  return load_entity_list(path);
}

std::set<PropertyId> property_set(const std::vector<std::string>& items) {
  std::set<PropertyId> out;
  for (const auto& s : items) out.insert(PropertyId(s));
  return out;
}

Snapshot snapshot_input(Context& ctx, const std::string& path) { return parse_snapshot(ctx.load(path), path); }

// ---- targets and split files ------------------------------------------------

struct Targets {
  PropertyId property;
  Interval interval;
  std::vector<EntityTarget> rows;
};

std::string targets_to_string(const Targets& t) {
  std::ostringstream o;
  o << "#targets\t" << t.property.str() << '\t' << t.interval.tau1().compact() << '\t' << t.interval.tau2().compact()
    << '\n';
  for (const auto& r : t.rows) o << r.entity.str() << '\t' << r.target << '\n';
  return o.str();
}

Targets parse_targets(std::string_view content, const std::string& source) {
  std::optional<Targets> t;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    try {
      if (!t) {
        if (f.size() != 4 || f[0] != "#targets") throw ParseError(source, line_no, "missing #targets header");
        t = Targets{PropertyId(std::string(f[1])), Interval(date(std::string(f[2])), date(std::string(f[3]))), {}};
        continue;
      }
      if (line.front() == '#') continue;
      if (f.size() != 2 || (f[1] != "0" && f[1] != "1")) {
        throw ParseError(source, line_no, "expected entity<TAB>0|1");
      }
      t->rows.push_back({EntityId(std::string(f[0])), f[1] == "1" ? 1 : 0});
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!t) throw ParseError(source + ": empty targets file");
  return *t;
}

struct SplitFile {
  std::size_t knn_k = 0;
  std::map<std::string, bool> in_test;  // entity -> test partition
};

std::string split_to_string(const LabeledDataset& train_set, const LabeledDataset& test_set, std::size_t knn_k) {
  std::ostringstream o;
  o << "#split\t" << knn_k << '\n';
  for (const auto& r : train_set.rows) o << r.entity.str() << "\ttrain\n";
  for (const auto& r : test_set.rows) o << r.entity.str() << "\ttest\n";
  return o.str();
}

SplitFile parse_split(std::string_view content, const std::string& source) {
  SplitFile s;
  bool header = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (!header) {
      if (f.size() != 2 || f[0] != "#split") throw ParseError(source, line_no, "missing #split header");
      auto [p, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), s.knn_k);
      if (ec != std::errc{} || p != f[1].data() + f[1].size()) throw ParseError(source, line_no, "invalid k");
      header = true;
      continue;
    }
    if (f.size() != 2 || (f[1] != "train" && f[1] != "test")) {
      throw ParseError(source, line_no, "expected entity<TAB>train|test");
    }
    s.in_test[std::string(f[0])] = f[1] == "test";
  }
  if (!header) throw ParseError(source + ": empty split file");
  return s;
}

FeatureSet feature_inputs(Context& ctx, const std::vector<std::string>& paths) {
  FeatureSet fs;
  for (const auto& p : paths) fs.add_block(parse_feature_matrix(ctx.load(p), p));
  return fs;
}

bool model_uses_knn(const LogRegModel& m) {
  return !m.feature_names.empty() && m.feature_names.back() == "knn_fraction";
}

// Rebuilds the train and test partitions recorded by `train`.
std::pair<LabeledDataset, LabeledDataset> partitions(Context& ctx, const Targets& targets, const FeatureSet& features,
                                                     const SplitFile& split, const std::string& knn_embeddings) {
  LabeledDataset train_set{targets.property, targets.interval, features.names(), features.dense_columns(), {}, {}};
  LabeledDataset test_set = train_set;
  for (const auto& t : targets.rows) {
    auto it = split.in_test.find(t.entity.str());
    if (it == split.in_test.end()) continue;
    auto x = features.lookup(t.entity);
    if (!x) throw ValidationError("no features for split entity " + t.entity.str());
    (it->second ? test_set : train_set).rows.push_back({t.entity, std::move(*x), t.target});
  }
  if (split.knn_k > 0) {
    if (knn_embeddings.empty()) throw ValidationError("the model uses the kNN feature; pass --knn-embeddings");
    const auto emb = parse_embeddings(ctx.load(knn_embeddings), knn_embeddings);
    add_knn_feature(train_set, test_set, emb, split.knn_k);
  }
  return {std::move(train_set), std::move(test_set)};
}

// ---- subcommands ------------------------------------------------------------

struct Command {
  CLI::App* app;
  std::function<void(Context&)> body;
};

struct Options {
  // shared
  std::string out, entities, snapshot, property, tau1, tau2, edit_log, articles, embeddings, model, dataset, split;
  std::vector<std::string> features;
  // analyze
  std::string t1, t2, criterion = "timestamp", summary;
  bool strict = false, added_only = false;
  double similarity = 0.8;
  // eval-criteria
  std::string report, gold;
  // filter-entities
  std::vector<std::string> terminating;
  bool activity = false;
  std::size_t max_edits = 10;
  double max_growth = 0.05;
  // filter-properties
  std::string class_list, measure = "objects", labels, metrics_out;
  std::vector<std::string> properties;
  double threshold = 0.05;
  // extract-features
  std::string kind, as_of, from, to, vocab, vocab_out, ngram = "1-1", weight = "tfidf", birth_property = "P569",
                                                          targets;
  std::size_t min_df = 5, k = 10;
  // train
  double l2 = 1.0, test_frac = 0.4, tolerance = 1e-6;
  std::size_t max_iter = 1000;
  std::string knn_embeddings, split_out;
  // inspect-model
  std::size_t top = 30;
  // kde
  std::size_t bins = 50;
  double bandwidth = 0.0;
  // gen
  std::string out_dir;
  // convert-wikidata
  std::string dump, sampled_at;
};

void analyze(const Options& o, Context& ctx) {
  const auto before = snapshot_input(ctx, o.t1);
  const auto after = snapshot_input(ctx, o.t2);
  const Interval interval(o.tau1.empty() ? before.sampled_at() : date(o.tau1),
                          o.tau2.empty() ? after.sampled_at() : date(o.tau2));
  AnalysisOptions opts;
  opts.equality = o.strict ? RecordEquality::strict : RecordEquality::object_and_valid_time;
  opts.timestamp_added_only = o.added_only;
  opts.similarity_threshold = o.similarity;
  const auto records = analyze_snapshots(before, after, interval, parse_criterion(o.criterion), opts, ctx.threads);
  std::ostringstream report, summary;
  write_change_records(report, records);
  write_distribution_csv(summary, category_distribution(records));
  ctx.emit(o.out, report.str());
  ctx.emit(o.summary.empty() ? o.out + ".summary.csv" : o.summary, summary.str());
  ctx.out << records.size() << " changed pairs\n";
}

void eval_criteria(const Options& o, Context& ctx) {
  const auto records = parse_change_records(ctx.load(o.report), o.report);
  const auto gold = parse_labels(ctx.load(o.gold), o.gold);
  std::ostringstream csv;
  write_criteria_csv(csv, evaluate_criteria(records, gold));
  ctx.emit(o.out, csv.str());
}

void filter_entities(const Options& o, Context& ctx) {
  const auto snap = snapshot_input(ctx, o.snapshot);
  const auto entities = o.entities.empty() ? snap.subjects() : entity_list(ctx, o.entities);
  const auto terminating = o.terminating.empty() ? default_terminating_properties() : property_set(o.terminating);

  ActivityThresholds thresholds{o.max_edits, o.max_growth, o.activity};
  std::vector<EditLogEntry> log;
  std::vector<ArticleVersion> arts;
  std::optional<Interval> window;
  if (o.activity) {
    if (o.edit_log.empty() || o.articles.empty() || o.tau1.empty() || o.tau2.empty()) {
      throw ValidationError("--activity needs --edit-log, --articles, --tau1 and --tau2");
    }
    log = parse_edit_log(ctx.load(o.edit_log), o.edit_log);
    arts = parse_articles(ctx.load(o.articles), o.articles);
    window.emplace(date(o.tau1), date(o.tau2));
  }
  std::map<std::string, std::vector<EditLogEntry>> edits_by;
  std::map<std::string, std::vector<ArticleSize>> sizes_by;
  for (const auto& e : log) edits_by[e.subject.str()].push_back(e);
  for (const auto& a : arts) sizes_by[a.entity.str()].push_back({a.as_of, a.text.size()});

  std::ostringstream csv;
  csv << "entity,terminating,activity,verdict\n";
  for (const auto& e : entities) {
    const bool term = entity_is_stable(snap, e, terminating);
    std::string act = "na";
    bool quiet = false;
    if (o.activity) {
      quiet = entity_activity_stable(edits_by[e.str()], sizes_by[e.str()], *window, thresholds);
      act = quiet ? "quiet" : "active";
    }
    csv << e.str() << ',' << (term ? "yes" : "no") << ',' << act << ',' << (term || quiet ? "stable" : "candidate")
        << '\n';
  }
  ctx.emit(o.out, csv.str());
}

void filter_properties(const Options& o, Context& ctx) {
  const auto snap = snapshot_input(ctx, o.snapshot);
  const auto cls = entity_list(ctx, o.class_list);
  const auto measure = parse_change_measure(o.measure);
  std::vector<EditLogEntry> log;
  if (!o.edit_log.empty()) log = parse_edit_log(ctx.load(o.edit_log), o.edit_log);

  std::map<PropertyId, bool> gold;
  if (!o.labels.empty()) {
    ctx.load(o.labels);
    gold = load_property_labels(o.labels);
  }
  std::set<PropertyId> props = property_set(o.properties);
  if (props.empty()) {
    for (const auto& [p, _] : gold) props.insert(p);
  }
  if (props.empty()) {
    for (const auto& e : cls) {
      for (const auto& f : snap.facts_of(e)) props.insert(f.property);
    }
  }

  std::ostringstream csv;
  csv << "property,changed_entities,class_size,fraction,verdict\n";
  std::map<PropertyId, bool> predicted;
  for (const auto& p : props) {
    const auto v = property_is_unstable(cls, p, measure, snap, o.threshold, o.edit_log.empty() ? nullptr : &log);
    predicted[p] = v.unstable;
    csv << p.str() << ',' << v.changed_entities << ',' << v.class_size << ',' << format_real(v.fraction, 6) << ','
        << (v.unstable ? "unstable" : "stable") << '\n';
  }
  ctx.emit(o.out, csv.str());
  if (!gold.empty()) {
    const auto m = evaluate_filter(predicted, gold);
    std::ostringstream mcsv;
    mcsv << "precision,recall,f1,accuracy,tp,fp,fn,tn\n"
         << format_real(m.precision, 4) << ',' << format_real(m.recall, 4) << ',' << format_real(m.f1, 4) << ','
         << format_real(m.accuracy, 4) << ',' << m.counts.tp << ',' << m.counts.fp << ',' << m.counts.fn << ','
         << m.counts.tn << '\n';
    ctx.emit(o.metrics_out.empty() ? o.out + ".metrics.csv" : o.metrics_out, mcsv.str());
  }
}

void extract_features(const Options& o, Context& ctx) {
  const std::string& kind = o.kind;
  FeatureMatrix matrix{FeatureKind::scalar, {}, {}};
  const auto require = [](const std::string& v, const char* flag) {
    if (v.empty()) throw ValidationError(std::string("this feature kind needs ") + flag);
  };
  const auto finish_vocab = [&](const Vocabulary& vocab) {
    matrix.names.assign(vocab.terms().begin(), vocab.terms().end());
    if (!o.vocab_out.empty()) {
      std::ostringstream v;
      write_vocabulary(v, vocab);
      ctx.emit(o.vocab_out, v.str());
    }
  };
  const auto load_vocab = [&]() -> std::optional<Vocabulary> {
    if (o.vocab.empty()) return std::nullopt;
    return parse_vocabulary(ctx.load(o.vocab), o.vocab);
  };

  if (kind == "text" || kind == "text-delta") {
    require(o.articles, "--articles");
    require(o.entities, "--entities");
    const auto arts = parse_articles(ctx.load(o.articles), o.articles);
    const auto entities = entity_list(ctx, o.entities);
    const ArticleIndex index(arts);
    std::vector<EntityId> ids;
    std::vector<std::string> docs;
    for (const auto& e : entities) {
      if (kind == "text") {
        require(o.as_of, "--as-of");
        if (const auto* a = index.at(e, date(o.as_of)); a && !a->text.empty()) {
          ids.push_back(e);
          docs.push_back(a->text);
        }
      } else {
        require(o.from, "--from");
        require(o.to, "--to");
        const auto* newer = index.at(e, date(o.to));
        if (!newer) continue;
        const auto* older = index.at(e, date(o.from));
        ids.push_back(e);
        docs.push_back(older && older != newer ? text_delta(*older, *newer) : newer->text);
      }
    }
    const NgramRange range = parse_ngram_range(o.ngram);
    auto loaded = load_vocab();
    const auto vocab = loaded ? std::move(*loaded) : fit_vocabulary(std::span<const std::string>(docs), range, o.min_df);
    matrix.kind = FeatureKind::text_tfidf;
    finish_vocab(vocab);
    for (std::size_t i = 0; i < ids.size(); ++i) matrix.rows.push_back(vectorize_tfidf(ids[i], docs[i], vocab));
  } else if (kind == "structured") {
    require(o.snapshot, "--snapshot");
    require(o.property, "--property");
    const auto snap = snapshot_input(ctx, o.snapshot);
    const auto entities = o.entities.empty() ? snap.subjects() : entity_list(ctx, o.entities);
    const PropertyId target(o.property);
    std::vector<std::vector<std::string>> docs;
    for (const auto& e : entities) docs.push_back(structured_tokens(snap, e, target));
    auto loaded = load_vocab();
    const auto vocab =
        loaded ? std::move(*loaded) : fit_vocabulary(std::span<const std::vector<std::string>>(docs), o.min_df);
    matrix.kind = FeatureKind::structured_bow;
    finish_vocab(vocab);
    const auto mode = parse_weight_mode(o.weight);
    for (std::size_t i = 0; i < entities.size(); ++i) {
      matrix.rows.push_back(vectorize_tokens(entities[i], docs[i], vocab, mode, FeatureKind::structured_bow));
    }
  } else if (kind == "age") {
    require(o.snapshot, "--snapshot");
    require(o.as_of, "--as-of");
    const auto snap = snapshot_input(ctx, o.snapshot);
    const auto entities = o.entities.empty() ? snap.subjects() : entity_list(ctx, o.entities);
    matrix.kind = FeatureKind::scalar;
    matrix.names = {"age"};
    for (const auto& e : entities) {
      if (auto age = age_feature(snap, e, PropertyId(o.birth_property), date(o.as_of))) {
        const double v[] = {*age};
        matrix.rows.push_back(dense_vector(e, FeatureKind::scalar, v));
      }
    }
  } else if (kind == "embedding") {
    require(o.embeddings, "--embeddings");
    const auto emb = parse_embeddings(ctx.load(o.embeddings), o.embeddings);
    const auto entities = o.entities.empty() ? emb.ids() : entity_list(ctx, o.entities);
    matrix.kind = FeatureKind::embedding;
    for (std::size_t j = 0; j < emb.dimension(); ++j) matrix.names.push_back("dim_" + std::to_string(j));
    for (const auto& e : entities) {
      if (const auto* v = emb.find(e)) matrix.rows.push_back(dense_vector(e, FeatureKind::embedding, *v));
    }
  } else if (kind == "knn") {
    require(o.embeddings, "--embeddings");
    require(o.targets, "--targets");
    const auto emb = parse_embeddings(ctx.load(o.embeddings), o.embeddings);
    const auto targets = parse_targets(ctx.load(o.targets), o.targets);
    std::vector<ReferenceLabel> reference;
    for (const auto& t : targets.rows) {
      if (emb.find(t.entity)) reference.push_back({t.entity, t.target == 1});
    }
    const auto entities = o.entities.empty() ? emb.ids() : entity_list(ctx, o.entities);
    matrix.kind = FeatureKind::knn_fraction;
    matrix.names = {"knn_fraction"};
    for (const auto& e : entities) {
      if (!emb.find(e)) continue;
      const bool self = std::any_of(reference.begin(), reference.end(), [&](const auto& r) { return r.entity == e; });
      const std::size_t available = reference.size() - (self ? 1 : 0);
      const double v[] = {knn_change_fraction(e, emb, reference, std::min(o.k, available))};
      matrix.rows.push_back(dense_vector(e, FeatureKind::knn_fraction, v));
    }
  } else {
    throw ValidationError("unknown feature kind '" + kind + "' (text, text-delta, structured, age, embedding, knn)");
  }
  std::ostringstream out;
  write_feature_matrix(out, matrix);
  ctx.emit(o.out, out.str());
  ctx.out << matrix.rows.size() << " rows, " << matrix.names.size() << " features\n";
}

void build_dataset_cmd(const Options& o, Context& ctx) {
  const auto before = snapshot_input(ctx, o.t1);
  const auto after = snapshot_input(ctx, o.t2);
  const Interval interval(o.tau1.empty() ? before.sampled_at() : date(o.tau1),
                          o.tau2.empty() ? after.sampled_at() : date(o.tau2));
  std::vector<EntityId> entities;
  if (o.entities.empty()) {
    std::set<EntityId> all;
    for (const auto& s : before.subjects()) all.insert(s);
    for (const auto& s : after.subjects()) all.insert(s);
    entities.assign(all.begin(), all.end());
  } else {
    entities = entity_list(ctx, o.entities);
  }
  const PropertyId property(o.property);
  Targets t{property, interval,
            compute_targets(entities, property, interval, before, after, parse_criterion(o.criterion))};
  ctx.emit(o.out, targets_to_string(t));
  const auto pos = std::count_if(t.rows.begin(), t.rows.end(), [](const auto& r) { return r.target == 1; });
  ctx.out << t.rows.size() << " entities, " << pos << " changed\n";
}

void train_cmd(const Options& o, Context& ctx) {
  const auto targets = parse_targets(ctx.load(o.dataset), o.dataset);
  const auto features = feature_inputs(ctx, o.features);
  const auto dataset = assemble_dataset(targets.property, targets.interval, targets.rows, features, ctx.seed);
  auto [train_set, test_set] = split(dataset, o.test_frac, ctx.seed);
  std::size_t k = 0;
  if (!o.knn_embeddings.empty()) {
    const auto emb = parse_embeddings(ctx.load(o.knn_embeddings), o.knn_embeddings);
    add_knn_feature(train_set, test_set, emb, o.k);
    k = o.k;
  }
  const auto model = train(train_set, Hyperparams{o.l2, o.tolerance, o.max_iter, ctx.seed});
  std::ostringstream m;
  write_model(m, model);
  ctx.emit(o.out, m.str());
  ctx.emit(o.split_out.empty() ? o.out + ".split" : o.split_out, split_to_string(train_set, test_set, k));
  ctx.out << "train " << train_set.rows.size() << " rows, test " << test_set.rows.size() << " rows, "
          << (model.converged ? "converged" : "not converged") << " after " << model.iterations << " iterations\n";
}

void eval_cmd(const Options& o, Context& ctx) {
  const auto model = parse_model(ctx.load(o.model), o.model);
  const auto targets = parse_targets(ctx.load(o.dataset), o.dataset);
  const auto features = feature_inputs(ctx, o.features);
  const std::string split_path = o.split.empty() ? o.model + ".split" : o.split;
  const auto split_file = parse_split(ctx.load(split_path), split_path);
  auto [train_set, test_set] = partitions(ctx, targets, features, split_file, o.knn_embeddings);
  const auto report = evaluate(model, test_set);
  const auto& m = report.metrics;
  std::ostringstream csv;
  csv << "property,rows,precision,recall,f1,accuracy,random_baseline\n"
      << targets.property.str() << ',' << report.rows << ',' << format_real(m.precision, 4) << ','
      << format_real(m.recall, 4) << ',' << format_real(m.f1, 4) << ',' << format_real(m.accuracy, 4) << ','
      << format_real(report.random_baseline, 2) << '\n';
  ctx.emit(o.out, csv.str());
}

void predict_cmd(const Options& o, Context& ctx) {
  const auto model = parse_model(ctx.load(o.model), o.model);
  const auto features = feature_inputs(ctx, o.features);
  std::optional<EmbeddingTable> emb;
  std::vector<ReferenceLabel> reference;
  std::size_t k = 0;
  if (model_uses_knn(model)) {
    if (o.dataset.empty() || o.knn_embeddings.empty()) {
      throw ValidationError("the model uses the kNN feature; pass --dataset and --knn-embeddings");
    }
    const std::string split_path = o.split.empty() ? o.model + ".split" : o.split;
    const auto split_file = parse_split(ctx.load(split_path), split_path);
    const auto targets = parse_targets(ctx.load(o.dataset), o.dataset);
    for (const auto& t : targets.rows) {
      auto it = split_file.in_test.find(t.entity.str());
      if (it != split_file.in_test.end() && !it->second) reference.push_back({t.entity, t.target == 1});
    }
    emb = parse_embeddings(ctx.load(o.knn_embeddings), o.knn_embeddings);
    k = split_file.knn_k;
  }
  std::vector<EntityId> entities;
  if (!o.entities.empty()) {
    entities = entity_list(ctx, o.entities);
  } else {
    // every entity of the first feature file
    const auto first = parse_feature_matrix(read_file(o.features.front()), o.features.front());
    for (const auto& r : first.rows) entities.push_back(r.entity);
  }
  std::ostringstream csv;
  csv << "entity,probability,label\n";
  for (const auto& e : entities) {
    auto x = features.lookup(e);
    if (!x) continue;
    std::size_t dim = features.dimension();
    if (emb) {
      const bool self = std::any_of(reference.begin(), reference.end(), [&](const auto& r) { return r.entity == e; });
      const double f = knn_change_fraction(e, *emb, reference, std::min(k, reference.size() - (self ? 1 : 0)));
      x->push_back({static_cast<std::uint32_t>(dim++), f});
    }
    const auto p = predict(model, *x, dim);
    csv << e.str() << ',' << format_real(p.probability, 6) << ',' << p.label << '\n';
  }
  ctx.emit(o.out, csv.str());
}

void inspect_cmd(const Options& o, Context& ctx) {
  const auto model = parse_model(ctx.load(o.model), o.model);
  const auto ins = inspect(model, o.top);
  std::ostringstream csv;
  csv << "rank,positive_feature,positive_weight,negative_feature,negative_weight\n";
  for (std::size_t i = 0; i < std::max(ins.positive.size(), ins.negative.size()); ++i) {
    csv << i + 1 << ',';
    if (i < ins.positive.size()) csv << ins.positive[i].first << ',' << format_real(ins.positive[i].second, 6);
    else csv << ',';
    csv << ',';
    if (i < ins.negative.size()) csv << ins.negative[i].first << ',' << format_real(ins.negative[i].second, 6);
    else csv << ',';
    csv << '\n';
  }
  ctx.emit(o.out, csv.str());
}

void kde_cmd(const Options& o, Context& ctx) {
  const auto snap = snapshot_input(ctx, o.snapshot);
  const auto entities = o.entities.empty() ? snap.subjects() : entity_list(ctx, o.entities);
  const auto pooled = pool(entities, PropertyId(o.property), snap, ctx.threads);
  if (pooled.zero_gaps > 0) ctx.err << "warning: dropped " << pooled.zero_gaps << " zero inter-change gaps\n";
  const auto est = kde(pooled.gaps, o.bandwidth > 0.0 ? std::optional<double>(o.bandwidth) : std::nullopt, o.bins,
                       ctx.threads);
  std::ostringstream csv;
  write_density_csv(csv, est);
  ctx.emit(o.out, csv.str());
  ctx.out << pooled.gaps.size() << " inter-change times, bandwidth " << format_real(est.bandwidth(), 6) << '\n';
}

void gen_cmd(const Options& o, Context& ctx) {
  GeneratorConfig kb;
  TextConfig text;
  apply_generator_settings(ctx.settings, kb, text);
  kb.seed = ctx.seed;
  if (text.property.empty()) text.property = kb.properties.front().id.str();
  const auto g = generate(kb);
  const auto pairs = generate_text(g.gold, text, ctx.seed);

  if (!fs::is_directory(o.out_dir)) {
    std::error_code ec;
    fs::create_directories(o.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + o.out_dir);
  }
  const auto path = [&](const char* name) { return (fs::path(o.out_dir) / name).string(); };
  ctx.emit(path("snapshot_t1.tsv"), snapshot_to_string(g.before));
  ctx.emit(path("snapshot_t2.tsv"), snapshot_to_string(g.after));
  std::ostringstream labels, arts, ents;
  write_labels(labels, g.gold);
  ctx.emit(path("gold.tsv"), labels.str());
  std::vector<ArticleVersion> versions;
  for (const auto& [a, b] : pairs) {
    versions.push_back(a);
    versions.push_back(b);
  }
  write_articles(arts, versions);
  ctx.emit(path("articles.tsv"), arts.str());
  for (const auto& e : g.entities) ents << e.str() << '\n';
  ctx.emit(path("entities.txt"), ents.str());
  ctx.out << g.entities.size() << " entities, " << g.after.size() << " facts at tau2\n";
}

void convert_cmd(const Options& o, Context& ctx) {
  const auto content = ctx.load(o.dump);
  std::istringstream in(content);
  const auto conv = convert_wikidata(in, property_set(o.properties), date(o.sampled_at));
  ctx.emit(o.out, snapshot_to_string(conv.snapshot));
  ctx.out << conv.entities_read << " entities, " << conv.snapshot.size() << " facts, " << conv.skipped_lines
          << " skipped lines, " << conv.bad_qualifier_dates << " bad qualifier dates, " << conv.not_yet_visible
          << " not yet visible\n";
}

std::string normalized(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

bool is_generator_key(const std::string& key) {
  static const std::set<std::string> keys{"real_world", "completion", "correction", "none",
                                          "entity_count", "properties", "tau1", "tau2",
                                          "max_base_records", "signal_rate", "signal_tokens", "distractor_tokens",
                                          "vocabulary_size", "words_per_doc", "words_added", "text_property"};
  return keys.contains(key);
}

// Finds the value of --config before full parsing so file values can act as
// defaults that command-line flags override.
std::string prescan_config(const std::vector<std::string>& args) {
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx(out, err);
  Options o;
  CLI::App app{"Change analysis and stability prediction for temporal knowledge bases", "kbstab"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--threads", ctx.threads, "Worker threads")->check(CLI::Range(1u, 256u));
  app.add_option("--seed", ctx.seed, "Seed for every stochastic step");
  app.add_option("--config", ctx.config_path, "key = value file supplying option defaults");

  std::vector<Command> commands;
  const auto add = [&](const char* name, const char* help, void (*body)(const Options&, Context&)) {
    auto* sub = app.add_subcommand(name, help);
    commands.push_back({sub, [&o, body](Context& c) { body(o, c); }});
    return sub;
  };

  auto* a = add("analyze", "Diff two snapshots and classify every changed pair", analyze);
  a->add_option("--t1", o.t1, "Snapshot at tau1")->required();
  a->add_option("--t2", o.t2, "Snapshot at tau2")->required();
  a->add_option("--criterion", o.criterion, "timestamp, pca or bulk");
  a->add_option("--out", o.out, "Change-record report (JSON lines)")->required();
  a->add_option("--summary", o.summary, "Distribution CSV (default <out>.summary.csv)");
  a->add_option("--tau1", o.tau1, "Interval start (default: sampling date of --t1)");
  a->add_option("--tau2", o.tau2, "Interval end (default: sampling date of --t2)");
  a->add_flag("--strict", o.strict, "Compare transaction times too");
  a->add_flag("--added-only", o.added_only, "Timestamp criterion looks at added records only");
  a->add_option("--similarity", o.similarity, "Edit-similarity threshold for modifications");

  auto* ec = add("eval-criteria", "Score all criteria against gold labels", eval_criteria);
  ec->add_option("--report", o.report, "Report written by analyze")->required();
  ec->add_option("--gold", o.gold, "Gold label file")->required();
  ec->add_option("--out", o.out, "CSV output")->required();

  auto* fe = add("filter-entities", "Flag inherently stable entities", filter_entities);
  fe->add_option("--snapshot", o.snapshot, "Snapshot")->required();
  fe->add_option("--entities", o.entities, "Entity list (default: all subjects)");
  fe->add_option("--terminating", o.terminating, "Terminating properties")->delimiter(',');
  fe->add_flag("--activity", o.activity, "Also apply the page-activity heuristic");
  fe->add_option("--edit-log", o.edit_log, "Edit log");
  fe->add_option("--articles", o.articles, "Article versions");
  fe->add_option("--tau1", o.tau1, "Activity window start");
  fe->add_option("--tau2", o.tau2, "Activity window end");
  fe->add_option("--max-edits", o.max_edits, "Edits allowed in the window (exclusive)");
  fe->add_option("--max-growth", o.max_growth, "Relative page growth allowed (exclusive)");
  fe->add_option("--out", o.out, "CSV output")->required();

  auto* fp = add("filter-properties", "Flag unstable properties of an entity class", filter_properties);
  fp->add_option("--snapshot", o.snapshot, "Snapshot")->required();
  fp->add_option("--class", o.class_list, "Entity list of the class")->required();
  fp->add_option("--measure", o.measure, "kb_edits, objects or timestamps");
  fp->add_option("--threshold", o.threshold, "Changed-entity fraction that makes a property unstable");
  fp->add_option("--properties", o.properties, "Properties to test")->delimiter(',');
  fp->add_option("--labels", o.labels, "Gold property labels for scoring");
  fp->add_option("--edit-log", o.edit_log, "Edit log (needed for kb_edits)");
  fp->add_option("--out", o.out, "CSV output")->required();
  fp->add_option("--metrics-out", o.metrics_out, "Scores CSV (default <out>.metrics.csv)");

  auto* xf = add("extract-features", "Write a feature matrix", extract_features);
  xf->add_option("--kind", o.kind, "text, text-delta, structured, age, embedding or knn")->required();
  xf->add_option("--entities", o.entities, "Entity list");
  xf->add_option("--articles", o.articles, "Article versions");
  xf->add_option("--as-of", o.as_of, "Article / age reference date");
  xf->add_option("--from", o.from, "Older article date for text-delta");
  xf->add_option("--to", o.to, "Newer article date for text-delta");
  xf->add_option("--vocab", o.vocab, "Reuse a vocabulary instead of fitting one");
  xf->add_option("--vocab-out", o.vocab_out, "Write the fitted vocabulary");
  xf->add_option("--min-df", o.min_df, "Minimum document frequency");
  xf->add_option("--ngram", o.ngram, "n-gram range, e.g. 1-3");
  xf->add_option("--snapshot", o.snapshot, "Snapshot for structured and age features");
  xf->add_option("--property", o.property, "Target property (excluded from structured features)");
  xf->add_option("--weight", o.weight, "count or tfidf");
  xf->add_option("--birth-property", o.birth_property, "Property holding the birth date");
  xf->add_option("--embeddings", o.embeddings, "Embedding table");
  xf->add_option("--targets", o.targets, "Targets file (knn reference labels)");
  xf->add_option("--k", o.k, "Neighbours for knn");
  xf->add_option("--out", o.out, "Feature matrix output")->required();

  auto* bd = add("build-dataset", "Compute per-entity change targets for one property", build_dataset_cmd);
  bd->add_option("--t1", o.t1, "Snapshot at tau1")->required();
  bd->add_option("--t2", o.t2, "Snapshot at tau2")->required();
  bd->add_option("--property", o.property, "Target property")->required();
  bd->add_option("--entities", o.entities, "Entity list (default: all subjects)");
  bd->add_option("--criterion", o.criterion, "Criterion deciding real-world change");
  bd->add_option("--tau1", o.tau1, "Interval start");
  bd->add_option("--tau2", o.tau2, "Interval end");
  bd->add_option("--out", o.out, "Targets output")->required();

  auto* tr = add("train", "Train a logistic-regression stability classifier", train_cmd);
  tr->add_option("--dataset", o.dataset, "Targets file")->required();
  tr->add_option("--features", o.features, "Feature matrices")->required();
  tr->add_option("--l2", o.l2, "L2 strength");
  tr->add_option("--test-frac", o.test_frac, "Test fraction in [0.4, 0.9]");
  tr->add_option("--tolerance", o.tolerance, "Gradient-norm tolerance");
  tr->add_option("--max-iter", o.max_iter, "Iteration cap");
  tr->add_option("--knn-embeddings", o.knn_embeddings, "Add the kNN change-fraction feature");
  tr->add_option("--k", o.k, "Neighbours for the kNN feature");
  tr->add_option("--out", o.out, "Model output")->required();
  tr->add_option("--split-out", o.split_out, "Split output (default <out>.split)");

  auto* pr = add("predict", "Score entities with a trained model", predict_cmd);
  pr->add_option("--model", o.model, "Model file")->required();
  pr->add_option("--features", o.features, "Feature matrices, same order as training")->required();
  pr->add_option("--entities", o.entities, "Entity list (default: rows of the first matrix)");
  pr->add_option("--dataset", o.dataset, "Targets file (kNN models)");
  pr->add_option("--split", o.split, "Split file (default <model>.split)");
  pr->add_option("--knn-embeddings", o.knn_embeddings, "Embedding table (kNN models)");
  pr->add_option("--out", o.out, "CSV output")->required();

  auto* ev = add("eval", "Evaluate a model on its held-out split", eval_cmd);
  ev->add_option("--model", o.model, "Model file")->required();
  ev->add_option("--dataset", o.dataset, "Targets file")->required();
  ev->add_option("--features", o.features, "Feature matrices, same order as training")->required();
  ev->add_option("--split", o.split, "Split file (default <model>.split)");
  ev->add_option("--knn-embeddings", o.knn_embeddings, "Embedding table (kNN models)");
  ev->add_option("--out", o.out, "CSV output")->required();

  auto* im = add("inspect-model", "Rank features by weight", inspect_cmd);
  im->add_option("--model", o.model, "Model file")->required();
  im->add_option("--top", o.top, "Features per direction");
  im->add_option("--out", o.out, "CSV output")->required();

  auto* kd = add("kde", "Inter-change-time histogram and density", kde_cmd);
  kd->add_option("--snapshot", o.snapshot, "Snapshot")->required();
  kd->add_option("--property", o.property, "Property")->required();
  kd->add_option("--entities", o.entities, "Entity list (default: all subjects)");
  kd->add_option("--bins", o.bins, "Histogram bins")->check(CLI::PositiveNumber);
  kd->add_option("--bandwidth", o.bandwidth, "Kernel bandwidth (default: Silverman)");
  kd->add_option("--out", o.out, "CSV output")->required();

  auto* gn = add("gen", "Generate a synthetic evolving KB", gen_cmd);
  gn->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* cw = add("convert-wikidata", "Convert a Wikidata JSON dump into a snapshot", convert_cmd);
  cw->add_option("--dump", o.dump, "Entity-per-line JSON dump")->required();
  cw->add_option("--properties", o.properties, "Properties to keep")->required()->delimiter(',');
  cw->add_option("--sampled-at", o.sampled_at, "Sampling date")->required();
  cw->add_option("--out", o.out, "Snapshot output")->required();

  try {
    ctx.config_path = prescan_config(args);
    if (!ctx.config_path.empty()) {
      const std::string content = read_file(ctx.config_path);
      ctx.config_digest = digest(content);
      ctx.settings = parse_settings(content, ctx.config_path);
      std::set<std::string> known;
      for (const auto& c : commands) {
        for (const auto* opt : c.app->get_options()) {
          for (const auto& n : opt->get_lnames()) known.insert(normalized(n));
        }
      }
      for (const auto& [key, value] : ctx.settings) {
        if (key == "threads" || key == "seed") continue;
        if (!known.contains(key) && !is_generator_key(key)) {
          throw ValidationError(ctx.config_path + ": unknown setting '" + key + "'");
        }
      }
      if (auto it = ctx.settings.find("threads"); it != ctx.settings.end()) app.get_option("--threads")->default_val(it->second);
      if (auto it = ctx.settings.find("seed"); it != ctx.settings.end()) app.get_option("--seed")->default_val(it->second);
      for (const auto& c : commands) {
        for (auto* opt : c.app->get_options()) {
          for (const auto& n : opt->get_lnames()) {
            if (auto it = ctx.settings.find(normalized(n)); it != ctx.settings.end()) opt->default_val(it->second);
          }
        }
      }
    }
  } catch (const CLI::Error& e) {
    err << "kbstab: error: bad config value: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    err << "kbstab: error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "kbstab: error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "kbstab: error: " << e.what() << '\n';
    return 1;
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    ctx.command = c.app->get_name();
    for (const auto* opt : c.app->get_options()) {
      if (opt->count() == 0 || opt->get_lnames().empty()) continue;
      std::string v;
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
      ctx.params.emplace_back(opt->get_lnames().front(), v);
    }
    try {
      c.body(ctx);
      return 0;
    } catch (const ParseError& e) {
      err << "kbstab: error: " << e.what() << '\n';
      return 2;
    } catch (const IoError& e) {
      err << "kbstab: error: " << e.what() << '\n';
      return 2;
    } catch (const ValidationError& e) {
      err << "kbstab: error: " << e.what() << '\n';
      return 1;
    } catch (const ContractViolation& e) {
      err << "kbstab: error: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      err << "kbstab: error: " << e.what() << '\n';
      return 1;
    }
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace kbstab::cli
