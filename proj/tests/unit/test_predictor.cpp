#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "kbstab/predictor.hpp"
#include "kbstab/random.hpp"
#include "datasets.hpp"
#include "support.hpp"

using namespace kbstab;
using namespace kbstab::testing;

namespace {

const Interval k1720(ts("2017"), ts("2020"));

FeatureMatrix scalar_block(const std::string& name, const std::vector<std::pair<std::string, double>>& rows) {
  FeatureMatrix m{FeatureKind::scalar, {name}, {}};
  for (const auto& [e, v] : rows) m.rows.push_back(dense_vector(EntityId(e), FeatureKind::scalar, std::vector<double>{v}));
  return m;
}

}  // namespace

TEST_CASE("sigmoid") {
  CHECK(sigmoid(2.0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  for (double z = -30; z <= 30; z += 0.7) CHECK(sigmoid(z) + sigmoid(-z) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(71);
  const auto ds = random_dataset(rng, 40, 6, 1.0);
  const LogisticObjective obj(ds.rows, 6, 1.0);
  std::vector<double> p(obj.parameter_count()), g(p.size());
  for (int trial = 0; trial < 100; ++trial) {
    for (auto& v : p) v = 2.0 * rng.normal();
    const double f = obj.value_and_gradient(p, g);
    CHECK(f == doctest::Approx(obj.value(p)).epsilon(1e-14));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double h = 1e-6;
      auto a = p, b = p;
      a[i] += h;
      b[i] -= h;
      const double numeric = (obj.value(a) - obj.value(b)) / (2 * h);
      CHECK(std::abs(numeric - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("the bias is not regularized") {
  const std::vector<DatasetRow> rows{{EntityId("Q1"), {}, 1}, {EntityId("Q2"), {}, 1}, {EntityId("Q3"), {}, 0}};
  const LogisticObjective obj(rows, 1, 100.0);
  std::vector<double> p{0.0, 3.0}, g(2);
  obj.value_and_gradient(p, g);
  // d/db of the mean loss only: (1/3) * sum -y * sigmoid(-y b)
  const double expected = (-2.0 * sigmoid(-3.0) + sigmoid(3.0)) / 3.0;
  CHECK(g[1] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g[0] == 0.0);
}

TEST_CASE("training loss never increases and reaches the tolerance") {
  Rng rng(73);
  for (int round = 0; round < 10; ++round) {
    const auto ds = random_dataset(rng, 80, 5, 0.5);
    const auto m = train(ds, {1.0, 1e-6, 1000, 0});
    CHECK(m.converged);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i) CHECK(m.loss_history[i] <= m.loss_history[i - 1]);
  }
}

TEST_CASE("seeds change the start but not the optimum") {
  Rng rng(79);
  const auto ds = random_dataset(rng, 100, 8, 0.5);
  const auto a = train(ds, {1.0, 1e-6, 1000, 1});
  const auto b = train(ds, {1.0, 1e-6, 1000, 2});
  REQUIRE(a.weights.size() == b.weights.size());
  for (std::size_t i = 0; i < a.weights.size(); ++i) CHECK(std::abs(a.weights[i] - b.weights[i]) <= 1e-4);
  CHECK(std::abs(a.bias - b.bias) <= 1e-4);
}

TEST_CASE("one-dimensional separable data") {
  std::vector<DatasetRow> rows;
  for (int i = 1; i <= 10; ++i) {
    rows.push_back({EntityId("Qp" + std::to_string(i)), dense_x({double(i)}), 1});
    rows.push_back({EntityId("Qn" + std::to_string(i)), dense_x({-double(i)}), 0});
  }
  const auto ds = dataset_of(rows, 1, true);
  const auto m = train(ds, {1.0, 1e-8, 1000, 3});
  CHECK(m.weights[0] > 0.0);
  CHECK(std::abs(m.bias) < 1e-6);
  for (const auto& r : rows) CHECK(predict(m, r).label == r.target);
  // stronger regularization shrinks the weight
  CHECK(train(ds, {10.0, 1e-8, 1000, 3}).weights[0] < m.weights[0]);
}

TEST_CASE("identical columns share their weight") {
  Rng rng(83);
  auto ds = random_dataset(rng, 60, 1, 0.3);
  ds.feature_names.push_back("copy");
  ds.dense_columns.push_back(true);
  for (auto& r : ds.rows) r.x.push_back({1, r.x[0].value});
  const auto m = train(ds, {1.0, 1e-9, 1000, 5});
  CHECK(std::abs(m.weights[0] - m.weights[1]) < 1e-4);
}

TEST_CASE("balancing down-samples the majority class") {
  std::vector<EntityTarget> targets;
  std::vector<std::pair<std::string, double>> feats;
  for (int i = 0; i < 100; ++i) {
    const std::string e = "Q" + std::to_string(i);
    targets.push_back({EntityId(e), i < 60 ? 1 : 0});
    feats.emplace_back(e, double(i));
  }
  targets.push_back({EntityId("Q_nofeat"), 1});
  const FeatureSet fs({scalar_block("x", feats)});
  const auto ds = assemble_dataset(PropertyId("P54"), k1720, targets, fs, 7);
  CHECK(ds.positives() == 40);
  CHECK(ds.negatives() == 40);
  CHECK(ds.stats.removed_by_balancing == 20);
  CHECK(ds.stats.missing_features == 1);
  CHECK(ds.stats.positives == 60);
  CHECK(ds.stats.candidates == 101);
  // input order is preserved
  for (std::size_t i = 1; i < ds.rows.size(); ++i) {
    CHECK(std::stoi(ds.rows[i - 1].entity.str().substr(1)) < std::stoi(ds.rows[i].entity.str().substr(1)));
  }
  // the same seed keeps the same rows
  const auto again = assemble_dataset(PropertyId("P54"), k1720, targets, fs, 7);
  REQUIRE(again.rows.size() == ds.rows.size());
  for (std::size_t i = 0; i < ds.rows.size(); ++i) CHECK(again.rows[i].entity == ds.rows[i].entity);

  std::vector<EntityTarget> lopsided{{EntityId("Q1"), 1}, {EntityId("Q2"), 0}, {EntityId("Q3"), 0}};
  CHECK_THROWS_AS(assemble_dataset(PropertyId("P54"), k1720, lopsided, fs, 7), ValidationError);
}

TEST_CASE("stratified split sizes") {
  std::vector<DatasetRow> rows;
  for (int i = 0; i < 100; ++i) rows.push_back({EntityId("Q" + std::to_string(i)), dense_x({double(i)}), i % 2});
  const auto ds = dataset_of(rows, 1, true);
  const auto [tr, te] = split(ds, 0.4, 11);
  CHECK(tr.rows.size() == 60);
  CHECK(te.rows.size() == 40);
  CHECK(te.positives() == 20);
  std::set<std::string> seen;
  for (const auto& r : tr.rows) seen.insert(r.entity.str());
  for (const auto& r : te.rows) CHECK(seen.insert(r.entity.str()).second);
  CHECK(seen.size() == 100);

  const auto small = dataset_of(std::vector<DatasetRow>(rows.begin(), rows.begin() + 10), 1, true);
  const auto [tr2, te2] = split(small, 0.4, 11);
  CHECK(te2.rows.size() == 4);
  CHECK(tr2.rows.size() == 6);
  CHECK(te2.positives() == 2);

  CHECK_THROWS_AS(split(ds, 0.3, 1), ValidationError);
  CHECK_THROWS_AS(split(ds, 0.95, 1), ValidationError);
}

TEST_CASE("a constant positive model on balanced data") {
  std::vector<DatasetRow> rows;
  for (int i = 0; i < 20; ++i) rows.push_back({EntityId("Q" + std::to_string(i)), dense_x({double(i)}), i % 2});
  const auto ds = dataset_of(rows, 1);
  LogRegModel m;
  m.feature_names = {"f0"};
  m.weights = {0.0};
  m.means = {0.0};
  m.scales = {1.0};
  m.bias = 1.0;
  const auto r = evaluate(m, ds);
  CHECK(r.metrics.precision == 0.5);
  CHECK(r.metrics.recall == 1.0);
  CHECK(r.random_baseline == 0.5);
  CHECK(r.rows == 20);
  CHECK_THROWS_AS(predict(m, dense_x({1.0, 2.0}), 2), ValidationError);
}

TEST_CASE("inspection clamps and orders") {
  LogRegModel m;
  m.feature_names = {"a", "b", "c", "d"};
  m.weights = {0.5, -2.0, 3.0, -0.1};
  const auto top = inspect(m, 10);
  REQUIRE(top.positive.size() == 4);
  REQUIRE(top.negative.size() == 4);
  CHECK(top.positive[0].first == "c");
  CHECK(top.positive[1].first == "a");
  CHECK(top.positive[3].first == "b");
  CHECK(top.negative[0].first == "b");
  CHECK(top.negative[1].first == "d");
  CHECK(inspect(m, 1).positive.size() == 1);
  CHECK(inspect(m, 0).positive.empty());
}

TEST_CASE("feature sets concatenate blocks") {
  FeatureSet fs;
  fs.add_block(scalar_block("age", {{"Q1", 30}, {"Q2", 25}}));
  CHECK(fs.names() == std::vector<std::string>{"age"});
  FeatureMatrix text{FeatureKind::text_tfidf, {"club", "signed"}, {}};
  text.rows.push_back({EntityId("Q1"), FeatureKind::text_tfidf, 2, {{1, 0.5}}});
  fs.add_block(text);
  CHECK(fs.names() == std::vector<std::string>{"scalar/age", "text_tfidf/club", "text_tfidf/signed"});
  CHECK(fs.dense_columns() == std::vector<bool>{true, false, false});
  const auto x = fs.lookup(EntityId("Q1"));
  REQUIRE(x.has_value());
  REQUIRE(x->size() == 2);
  CHECK((*x)[0].value == 30.0);
  CHECK((*x)[1].index == 2);
  CHECK_FALSE(fs.lookup(EntityId("Q2")).has_value());
  CHECK_THROWS_AS(fs.add_block(scalar_block("dup", {{"Q1", 1}, {"Q1", 2}})), ValidationError);
}

TEST_CASE("knn column uses training rows as reference") {
  EmbeddingTable emb(1);
  std::vector<DatasetRow> tr_rows, te_rows;
  for (int i = 0; i < 8; ++i) {
    emb.insert(EntityId("Q" + std::to_string(i)), {double(i)});
    tr_rows.push_back({EntityId("Q" + std::to_string(i)), {}, i < 4 ? 1 : 0});
  }
  emb.insert(EntityId("Qt"), {0.2});
  te_rows.push_back({EntityId("Qt"), {}, 0});
  auto tr = dataset_of(tr_rows, 0);
  auto te = dataset_of(te_rows, 0);
  add_knn_feature(tr, te, emb, 3);
  CHECK(tr.feature_names == std::vector<std::string>{"knn_fraction"});
  CHECK(te.dense_columns == std::vector<bool>{true});
  // Qt's nearest training rows are Q0, Q1, Q2, all changed
  CHECK(te.rows[0].x[0].value == 1.0);
  // Q3 sees Q2, Q4 (tie, by id) and then Q1 or Q5; ties at distance 2 go to Q1
  CHECK(tr.rows[3].x[0].value == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("models round-trip through text") {
  Rng rng(89);
  const auto ds = random_dataset(rng, 50, 4, 0.5);
  const auto m = train(ds, {0.5, 1e-6, 1000, 9});
  std::ostringstream out;
  write_model(out, m);
  const auto back = parse_model(out.str());
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.means == m.means);
  CHECK(back.scales == m.scales);
  CHECK(back.hyperparams.l2 == 0.5);
  CHECK(back.converged == m.converged);
  std::ostringstream again;
  write_model(again, back);
  CHECK(again.str() == out.str());
  for (const auto& r : ds.rows) CHECK(predict(back, r).probability == predict(m, r).probability);
  CHECK_THROWS_AS(parse_model("#logreg\nl2\t1\nfeatures\t2\na\t1\t0\t1\n"), ParseError);
  CHECK_THROWS_AS(parse_model("nonsense"), ParseError);
}

TEST_CASE("targets follow the change label") {
  const Snapshot before(ts("2017"), {fact("Q1", "P54", "Q100", "2010", "2011"), fact("Q2", "P54", "Q100", "2010", "2011")});
  const Snapshot after(ts("2020"), {fact("Q1", "P54", "Q100", "2010", "2011"), fact("Q1", "P54", "Q101", "2018", "2018"),
                                    fact("Q2", "P54", "Q100", "2010", "2011"), fact("Q3", "P54", "Q5", "", "2019")});
  const std::vector<EntityId> ents{EntityId("Q1"), EntityId("Q2"), EntityId("Q3")};
  const auto t = compute_targets(ents, PropertyId("P54"), k1720, before, after);
  CHECK(t[0].target == 1);
  CHECK(t[1].target == 0);
  CHECK(t[2].target == 0);
}
