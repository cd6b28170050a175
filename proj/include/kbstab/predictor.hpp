#pragma once

// Per-(class, property) stability classifier: balanced dataset assembly,
// stratified split, L2-regularized logistic regression, evaluation and
// weight inspection.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kbstab/change_analysis.hpp"
#include "kbstab/feature_extraction.hpp"
#include "kbstab/kb_model.hpp"
#include "kbstab/metrics.hpp"

namespace kbstab {

/// Concatenation of feature blocks. An entity has features only if every
/// block has a row for it. Names get a "<kind>/" prefix when blocks combine.
class FeatureSet {
 public:
  FeatureSet() = default;
  explicit FeatureSet(std::vector<FeatureMatrix> blocks);

  void add_block(FeatureMatrix block);

  std::size_t dimension() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<bool>& dense_columns() const noexcept { return dense_; }

  std::optional<std::vector<SparseEntry>> lookup(const EntityId& entity) const;

 private:
  struct Block {
    FeatureKind kind;
    std::size_t offset;
    std::map<std::string, std::size_t> rows;  // entity -> row index in its matrix
  };

  void rebuild_names();

  std::vector<FeatureMatrix> matrices_;
  std::vector<Block> blocks_;
  std::vector<std::string> names_;
  std::vector<bool> dense_;
};

struct EntityTarget {
  EntityId entity;
  int target;  // 1 = property changed due to real-world change
};

struct DatasetRow {
  EntityId entity;
  std::vector<SparseEntry> x;
  int target;
};

struct DatasetStats {
  std::size_t candidates = 0;
  std::size_t missing_features = 0;
  std::size_t positives = 0;  // before balancing
  std::size_t negatives = 0;
  std::size_t removed_by_balancing = 0;
};

struct LabeledDataset {
  PropertyId property;
  Interval interval;
  std::vector<std::string> feature_names;
  std::vector<bool> dense_columns;
  std::vector<DatasetRow> rows;
  DatasetStats stats;

  std::size_t positives() const;
  std::size_t negatives() const;
};

/// Target per entity: 1 iff the pair's change is classified real_world by
/// the given criterion over the interval.
std::vector<EntityTarget> compute_targets(std::span<const EntityId> entities, const PropertyId& property,
                                          const Interval& interval, const Snapshot& before, const Snapshot& after,
                                          Criterion criterion = Criterion::timestamp);

/// Drops entities without features, then down-samples the majority class
/// uniformly under the seed. Throws ValidationError when a class has fewer
/// than two rows after balancing.
LabeledDataset assemble_dataset(const PropertyId& property, const Interval& interval,
                                std::span<const EntityTarget> targets, const FeatureSet& features,
                                std::uint64_t seed);

LabeledDataset build_dataset(std::span<const EntityId> entities, const PropertyId& property, const Interval& interval,
                             const Snapshot& before, const Snapshot& after, const FeatureSet& features,
                             std::uint64_t seed);

/// Stratified split; each class contributes round(n_class * test_fraction)
/// rows to the test set. test_fraction must lie in [0.4, 0.9].
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset, double test_fraction,
                                                std::uint64_t seed);

/// Appends a kNN change-fraction column to both partitions. Reference
/// neighbours come from the training rows only.
void add_knn_feature(LabeledDataset& train, LabeledDataset& test, const EmbeddingTable& embeddings, std::size_t k);

struct Hyperparams {
  double l2 = 1.0;
  double tolerance = 1e-6;
  std::size_t max_iterations = 1000;
  std::uint64_t seed = 0;
};

/// Mean logistic loss with labels in {-1, +1} plus (l2 / 2) * |w|^2. The
/// parameter vector is [w_0 .. w_{d-1}, b]; the bias is not regularized.
class LogisticObjective {
 public:
  LogisticObjective(std::span<const DatasetRow> rows, std::size_t dimension, double l2);

  std::size_t parameter_count() const noexcept { return dimension_ + 1; }
  double value(std::span<const double> params) const;
  double value_and_gradient(std::span<const double> params, std::span<double> gradient) const;

 private:
  std::span<const DatasetRow> rows_;
  std::size_t dimension_;
  double l2_;
};

struct LogRegModel {
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double bias = 0.0;
  // z-scoring applied before the dot product (mean 0, scale 1 for sparse columns)
  std::vector<double> means;
  std::vector<double> scales;
  Hyperparams hyperparams;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> loss_history;  // objective after every accepted step, starting at the initial point
};

LogRegModel train(const LabeledDataset& train_set, const Hyperparams& hyperparams);

struct Prediction {
  double probability;
  int label;
};

/// Throws ValidationError when the feature dimension differs from the model.
Prediction predict(const LogRegModel& model, std::span<const SparseEntry> x, std::size_t dimension);
Prediction predict(const LogRegModel& model, const DatasetRow& row);

struct EvaluationReport {
  BinaryMetrics metrics;  // change = positive class
  std::size_t rows = 0;
  double random_baseline = 0.5;
};

EvaluationReport evaluate(const LogRegModel& model, const LabeledDataset& test_set);

struct Inspection {
  std::vector<std::pair<std::string, double>> positive;  // descending weight
  std::vector<std::pair<std::string, double>> negative;  // ascending weight
};

Inspection inspect(const LogRegModel& model, std::size_t top_k);

void write_model(std::ostream& out, const LogRegModel& model);
LogRegModel parse_model(std::string_view content, const std::string& source = "<model>");

double sigmoid(double z);

}  // namespace kbstab
