#pragma once

// In-process text pipeline shared by the harness unit tests and the
// acceptance run: generated KB -> planted articles -> text-delta tf-idf ->
// balanced dataset -> logistic regression.

#include <vector>

#include "kbstab/feature_extraction.hpp"
#include "kbstab/predictor.hpp"
#include "kbstab/test_harness.hpp"

namespace kbstab::testing {

struct PlantedRun {
  LabeledDataset dataset;
  EvaluationReport report;
  Inspection inspection;
};

inline PlantedRun planted_signal_run(double signal_rate, std::size_t entity_count, std::uint64_t seed,
                                     double test_fraction = 0.4, std::size_t per_class = 0) {
  GeneratorConfig kb;
  kb.real_world = 0.5;
  kb.completion = 0.0;
  kb.correction = 0.0;
  kb.none = 0.5;
  kb.entity_count = entity_count;
  kb.properties = {{PropertyId("P54"), ObjectValue::Kind::entity}};
  kb.seed = seed;
  const auto g = generate(kb);

  TextConfig text;
  text.signal_rate = signal_rate;
  text.property = "P54";
  const auto pairs = generate_text(g.gold, text, seed + 1);

  std::vector<std::string> deltas;
  for (const auto& [old_v, new_v] : pairs) deltas.push_back(text_delta(old_v, new_v));
  const auto vocab = fit_vocabulary(std::span<const std::string>(deltas), NgramRange{1, 1}, 5);
  FeatureMatrix m{FeatureKind::text_tfidf, {vocab.terms().begin(), vocab.terms().end()}, {}};
  for (std::size_t i = 0; i < pairs.size(); ++i) m.rows.push_back(vectorize_tfidf(pairs[i].first.entity, deltas[i], vocab));
  const FeatureSet features({m});

  const Interval interval(kb.tau1, kb.tau2);
  auto targets = compute_targets(g.entities, PropertyId("P54"), interval, g.before, g.after);
  if (per_class > 0) {
    // keep the first per_class entities of each class
    std::vector<EntityTarget> kept;
    std::size_t seen[2] = {0, 0};
    for (const auto& t : targets) {
      if (seen[t.target]++ < per_class) kept.push_back(t);
    }
    targets = std::move(kept);
  }
  auto dataset = assemble_dataset(PropertyId("P54"), interval, targets, features, seed);
  const auto [train_set, test_set] = split(dataset, test_fraction, seed);
  const auto model = train(train_set, {1.0, 1e-6, 1000, seed});
  return {std::move(dataset), evaluate(model, test_set), inspect(model, 5)};
}

}  // namespace kbstab::testing
