#pragma once

// Small labeled datasets for the optimizer checks.

#include <vector>

#include "kbstab/predictor.hpp"
#include "kbstab/random.hpp"
#include "support.hpp"

namespace kbstab::testing {

inline LabeledDataset dataset_of(std::vector<DatasetRow> rows, std::size_t d, bool dense = false) {
  LabeledDataset ds{PropertyId("P54"), Interval(ts("2017"), ts("2020")), {}, std::vector<bool>(d, dense), std::move(rows), {}};
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  return ds;
}

inline std::vector<SparseEntry> dense_x(const std::vector<double>& v) {
  std::vector<SparseEntry> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({static_cast<std::uint32_t>(i), v[i]});
  return out;
}

// Rows whose label follows the sign of a fixed linear score plus noise.
inline LabeledDataset random_dataset(Rng& rng, std::size_t n, std::size_t d, double noise) {
  std::vector<double> w(d);
  for (auto& x : w) x = rng.normal();
  std::vector<DatasetRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = rng.normal();
      z += w[j] * x[j];
    }
    rows.push_back({EntityId("Q" + std::to_string(i)), dense_x(x), z + noise * rng.normal() > 0 ? 1 : 0});
  }
  return dataset_of(std::move(rows), d, true);
}

}  // namespace kbstab::testing
