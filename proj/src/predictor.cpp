#include "kbstab/predictor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>

#include "kbstab/random.hpp"

namespace kbstab {

FeatureSet::FeatureSet(std::vector<FeatureMatrix> blocks) {
  for (auto& b : blocks) add_block(std::move(b));
}

void FeatureSet::add_block(FeatureMatrix block) {
  Block b{block.kind, names_.size(), {}};
  for (std::size_t i = 0; i < block.rows.size(); ++i) {
    if (block.rows[i].dimension != block.names.size()) {
      throw ValidationError("feature row for " + block.rows[i].entity.str() + " has wrong dimension");
    }
    if (!b.rows.emplace(block.rows[i].entity.str(), i).second) {
      throw ValidationError("duplicate feature row for " + block.rows[i].entity.str());
    }
  }
  blocks_.push_back(std::move(b));
  matrices_.push_back(std::move(block));
  rebuild_names();
}

void FeatureSet::rebuild_names() {
  names_.clear();
  dense_.clear();
  const bool prefix = matrices_.size() > 1;
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    blocks_[k].offset = names_.size();
    for (const auto& n : matrices_[k].names) {
      names_.push_back(prefix ? std::string(to_string(matrices_[k].kind)) + "/" + n : n);
      dense_.push_back(is_dense(matrices_[k].kind));
    }
  }
}

std::optional<std::vector<SparseEntry>> FeatureSet::lookup(const EntityId& entity) const {
  std::vector<SparseEntry> out;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    auto it = blocks_[k].rows.find(entity.str());
    if (it == blocks_[k].rows.end()) return std::nullopt;
    for (const auto& e : matrices_[k].rows[it->second].entries) {
      out.push_back({static_cast<std::uint32_t>(blocks_[k].offset + e.index), e.value});
    }
  }
  return out;
}

std::size_t LabeledDataset::positives() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.target == 1; }));
}

std::size_t LabeledDataset::negatives() const { return rows.size() - positives(); }

std::vector<EntityTarget> compute_targets(std::span<const EntityId> entities, const PropertyId& property,
                                          const Interval& interval, const Snapshot& before, const Snapshot& after,
                                          Criterion criterion) {
  std::vector<EntityTarget> out;
  out.reserve(entities.size());
  for (const auto& e : entities) {
    const auto rec = classify(project(before, e, property), project(after, e, property), interval, criterion);
    out.push_back({e, rec.label == ChangeLabel::real_world ? 1 : 0});
  }
  return out;
}

LabeledDataset assemble_dataset(const PropertyId& property, const Interval& interval,
                                std::span<const EntityTarget> targets, const FeatureSet& features,
                                std::uint64_t seed) {
  LabeledDataset ds{property, interval, features.names(), features.dense_columns(), {}, {}};
  ds.stats.candidates = targets.size();
  std::vector<DatasetRow> pos, neg;
  for (const auto& t : targets) {
    if (t.target != 0 && t.target != 1) throw ValidationError("target for " + t.entity.str() + " must be 0 or 1");
    auto x = features.lookup(t.entity);
    if (!x) {
      ++ds.stats.missing_features;
      continue;
    }
    (t.target == 1 ? pos : neg).push_back({t.entity, std::move(*x), t.target});
  }
  ds.stats.positives = pos.size();
  ds.stats.negatives = neg.size();
  const std::size_t keep = std::min(pos.size(), neg.size());
  if (keep < 2) {
    throw ValidationError("need at least 2 entities per class after balancing (positives " +
                          std::to_string(pos.size()) + ", negatives " + std::to_string(neg.size()) + ")");
  }

  auto& majority = pos.size() > neg.size() ? pos : neg;
  if (majority.size() > keep) {
    std::vector<std::size_t> idx(majority.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<DatasetRow> kept;
    kept.reserve(keep);
    for (auto i : idx) kept.push_back(std::move(majority[i]));
    ds.stats.removed_by_balancing = majority.size() - keep;
    majority = std::move(kept);
  }
  // Restore input order across both classes.
  std::vector<DatasetRow> merged;
  merged.reserve(2 * keep);
  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < targets.size(); ++i) order.emplace(targets[i].entity.str(), i);
  for (auto& r : pos) merged.push_back(std::move(r));
  for (auto& r : neg) merged.push_back(std::move(r));
  std::sort(merged.begin(), merged.end(), [&](const DatasetRow& a, const DatasetRow& b) {
    return order.at(a.entity.str()) < order.at(b.entity.str());
  });
  ds.rows = std::move(merged);
  return ds;
}

LabeledDataset build_dataset(std::span<const EntityId> entities, const PropertyId& property, const Interval& interval,
                             const Snapshot& before, const Snapshot& after, const FeatureSet& features,
                             std::uint64_t seed) {
  const auto targets = compute_targets(entities, property, interval, before, after);
  return assemble_dataset(property, interval, targets, features, seed);
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset, double test_fraction,
                                                std::uint64_t seed) {
  if (!(test_fraction >= 0.4 && test_fraction <= 0.9)) {
    throw ValidationError("test fraction must lie in [0.4, 0.9], got " + format_real(test_fraction, 3));
  }
  LabeledDataset train_set{dataset.property, dataset.interval, dataset.feature_names, dataset.dense_columns, {}, dataset.stats};
  LabeledDataset test_set = train_set;
  std::vector<bool> in_test(dataset.rows.size(), false);
  Rng rng(seed);
  for (int cls : {1, 0}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
      if (dataset.rows[i].target == cls) idx.push_back(i);
    }
    if (idx.size() < 2) throw ValidationError("each class needs at least 2 rows to split");
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    rng.shuffle(idx);
    for (std::size_t k = 0; k < n_test; ++k) in_test[idx[k]] = true;
  }
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    (in_test[i] ? test_set : train_set).rows.push_back(dataset.rows[i]);
  }
  return {std::move(train_set), std::move(test_set)};
}

void add_knn_feature(LabeledDataset& train_set, LabeledDataset& test_set, const EmbeddingTable& embeddings,
                     std::size_t k) {
  std::vector<ReferenceLabel> reference;
  reference.reserve(train_set.rows.size());
  for (const auto& r : train_set.rows) reference.push_back({r.entity, r.target == 1});
  const auto column = static_cast<std::uint32_t>(train_set.feature_names.size());
  // Training rows exclude themselves, so one fewer neighbour is available.
  const std::size_t k_train = std::min(k, reference.size() - 1);
  for (auto* ds : {&train_set, &test_set}) {
    for (auto& row : ds->rows) {
      const double f = knn_change_fraction(row.entity, embeddings, reference, ds == &train_set ? k_train : std::min(k, reference.size()));
      row.x.push_back({column, f});
    }
    ds->feature_names.push_back("knn_fraction");
    ds->dense_columns.push_back(true);
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

// ln(1 + exp(-t)), stable for large |t|.
double log1p_exp_neg(double t) { return t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

LogisticObjective::LogisticObjective(std::span<const DatasetRow> rows, std::size_t dimension, double l2)
    : rows_(rows), dimension_(dimension), l2_(l2) {
  if (rows_.empty()) throw ValidationError("cannot train on an empty dataset");
  if (!(l2_ >= 0.0)) throw ValidationError("l2 strength must be non-negative");
}

double LogisticObjective::value(std::span<const double> params) const {
  double loss = 0.0;
  for (const auto& r : rows_) {
    double z = params[dimension_];
    for (const auto& e : r.x) z += params[e.index] * e.value;
    loss += log1p_exp_neg(r.target == 1 ? z : -z);
  }
  loss /= static_cast<double>(rows_.size());
  return loss + 0.5 * l2_ * dot(params.first(dimension_), params.first(dimension_));
}

double LogisticObjective::value_and_gradient(std::span<const double> params, std::span<double> gradient) const {
  std::fill(gradient.begin(), gradient.end(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(rows_.size());
  double loss = 0.0;
  for (const auto& r : rows_) {
    double z = params[dimension_];
    for (const auto& e : r.x) z += params[e.index] * e.value;
    const double y = r.target == 1 ? 1.0 : -1.0;
    loss += log1p_exp_neg(y * z);
    const double dz = -y * sigmoid(-y * z) * inv_n;
    for (const auto& e : r.x) gradient[e.index] += dz * e.value;
    gradient[dimension_] += dz;
  }
  for (std::size_t i = 0; i < dimension_; ++i) gradient[i] += l2_ * params[i];
  return loss * inv_n + 0.5 * l2_ * dot(params.first(dimension_), params.first(dimension_));
}

LogRegModel train(const LabeledDataset& train_set, const Hyperparams& hp) {
  const std::size_t d = train_set.feature_names.size();
  LogRegModel model;
  model.feature_names = train_set.feature_names;
  model.hyperparams = hp;
  model.means.assign(d, 0.0);
  model.scales.assign(d, 1.0);

  // z-score dense columns with training statistics
  std::vector<double> sum(d, 0.0), sum2(d, 0.0);
  const double n = static_cast<double>(train_set.rows.size());
  for (const auto& r : train_set.rows) {
    for (const auto& e : r.x) {
      if (!std::isfinite(e.value)) throw ValidationError("non-finite feature for " + r.entity.str());
      if (e.index >= d) throw ValidationError("feature index out of range for " + r.entity.str());
      sum[e.index] += e.value;
      sum2[e.index] += e.value * e.value;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (!train_set.dense_columns[j]) continue;
    model.means[j] = sum[j] / n;
    const double var = std::max(0.0, sum2[j] / n - model.means[j] * model.means[j]);
    model.scales[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  std::vector<DatasetRow> rows = train_set.rows;
  for (auto& r : rows) {
    for (auto& e : r.x) e.value = (e.value - model.means[e.index]) / model.scales[e.index];
  }

  const LogisticObjective objective(rows, d, hp.l2);
  const std::size_t np = objective.parameter_count();
  std::vector<double> x(np, 0.0), g(np), x_new(np), g_new(np), dir(np);
  Rng rng(hp.seed);
  for (std::size_t i = 0; i < d; ++i) x[i] = 0.01 * rng.normal();

  // L-BFGS with Armijo backtracking; every accepted step decreases the objective.
  constexpr std::size_t kMemory = 10;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  double f = objective.value_and_gradient(x, g);
  model.loss_history.push_back(f);
  std::size_t iter = 0;
  bool converged = std::sqrt(dot(g, g)) < hp.tolerance;
  while (!converged && iter < hp.max_iterations) {
    // two-loop recursion
    dir = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t i = 0; i < np; ++i) dir[i] -= alpha[k] * y_hist[k][i];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : dir) v *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t i = 0; i < np; ++i) dir[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    for (double& v : dir) v = -v;
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < np; ++i) dir[i] = -g[i];
      slope = -dot(g, g);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::sqrt(dot(g, g))) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < np; ++i) x_new[i] = x[i] + step * dir[i];
      f_new = objective.value_and_gradient(x_new, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f_new > f) break;

    std::vector<double> s(np), y(np);
    for (std::size_t i = 0; i < np; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    model.loss_history.push_back(f);
    ++iter;
    converged = std::sqrt(dot(g, g)) < hp.tolerance;
  }

  model.weights.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = x[d];
  model.converged = converged;
  model.iterations = iter;
  return model;
}

Prediction predict(const LogRegModel& model, std::span<const SparseEntry> x, std::size_t dimension) {
  if (dimension != model.weights.size()) {
    throw ValidationError("feature dimension " + std::to_string(dimension) + " does not match model dimension " +
                          std::to_string(model.weights.size()));
  }
  // Dense blocks store every column, so only sparse columns have absent entries (mean 0).
  double z = model.bias;
  for (const auto& e : x) {
    if (e.index >= dimension) throw ValidationError("feature index out of range");
    z += model.weights[e.index] * (e.value - model.means[e.index]) / model.scales[e.index];
  }
  return {sigmoid(z), z >= 0.0 ? 1 : 0};
}

Prediction predict(const LogRegModel& model, const DatasetRow& row) {
  return predict(model, row.x, model.weights.size());
}

EvaluationReport evaluate(const LogRegModel& model, const LabeledDataset& test_set) {
  BinaryCounts counts;
  for (const auto& r : test_set.rows) {
    counts.add(predict(model, r.x, test_set.feature_names.size()).label == 1, r.target == 1);
  }
  return {compute_metrics(counts), test_set.rows.size(), 0.5};
}

Inspection inspect(const LogRegModel& model, std::size_t top_k) {
  std::vector<std::size_t> idx(model.weights.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto by_weight = [&](bool descending) {
    std::vector<std::size_t> order = idx;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return descending ? model.weights[a] > model.weights[b] : model.weights[a] < model.weights[b];
    });
    order.resize(std::min(top_k, order.size()));
    std::vector<std::pair<std::string, double>> out;
    for (auto i : order) out.emplace_back(model.feature_names[i], model.weights[i]);
    return out;
  };
  return {by_weight(true), by_weight(false)};
}

void write_model(std::ostream& out, const LogRegModel& model) {
  out << "#logreg\n";
  out << "l2\t" << format_exact(model.hyperparams.l2) << '\n';
  out << "tolerance\t" << format_exact(model.hyperparams.tolerance) << '\n';
  out << "max_iterations\t" << model.hyperparams.max_iterations << '\n';
  out << "seed\t" << model.hyperparams.seed << '\n';
  out << "converged\t" << (model.converged ? 1 : 0) << '\n';
  out << "iterations\t" << model.iterations << '\n';
  out << "bias\t" << format_exact(model.bias) << '\n';
  out << "features\t" << model.weights.size() << '\n';
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    out << escape_field(model.feature_names[i]) << '\t' << format_exact(model.weights[i]) << '\t'
        << format_exact(model.means[i]) << '\t' << format_exact(model.scales[i]) << '\n';
  }
}

LogRegModel parse_model(std::string_view content, const std::string& source) {
  LogRegModel m;
  std::size_t line_no = 0, pos = 0, expected = 0;
  bool header = false, in_features = false;
  const auto num = [&](std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
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
    if (!header) {
      if (line != "#logreg") throw ParseError(source, line_no, "missing #logreg header");
      header = true;
      continue;
    }
    const auto f = split_tabs(line);
    if (in_features) {
      if (f.size() != 4) throw ParseError(source, line_no, "expected name, weight, mean, scale");
      m.feature_names.push_back(unescape_field(f[0]));
      m.weights.push_back(num(f[1]));
      m.means.push_back(num(f[2]));
      m.scales.push_back(num(f[3]));
      continue;
    }
    if (f.size() != 2) throw ParseError(source, line_no, "expected key<TAB>value");
    if (f[0] == "l2") m.hyperparams.l2 = num(f[1]);
    else if (f[0] == "tolerance") m.hyperparams.tolerance = num(f[1]);
    else if (f[0] == "max_iterations") m.hyperparams.max_iterations = static_cast<std::size_t>(num(f[1]));
    else if (f[0] == "seed") m.hyperparams.seed = static_cast<std::uint64_t>(num(f[1]));
    else if (f[0] == "converged") m.converged = num(f[1]) != 0.0;
    else if (f[0] == "iterations") m.iterations = static_cast<std::size_t>(num(f[1]));
    else if (f[0] == "bias") m.bias = num(f[1]);
    else if (f[0] == "features") {
      expected = static_cast<std::size_t>(num(f[1]));
      in_features = true;
    } else {
      throw ParseError(source, line_no, "unknown key '" + std::string(f[0]) + "'");
    }
  }
  if (!in_features || m.weights.size() != expected) throw ParseError(source + ": truncated model file");
  return m;
}

}  // namespace kbstab
