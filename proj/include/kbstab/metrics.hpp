#pragma once

#include <cstddef>
#include <string>

namespace kbstab {

/// Binary confusion counts with the positive class fixed by the caller.
struct BinaryCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  void add(bool predicted, bool actual) {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Precision/recall/F1 over a BinaryCounts. Undefined ratios are reported as 0.
struct BinaryMetrics {
  BinaryCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

BinaryMetrics compute_metrics(const BinaryCounts& counts);

/// Fixed-precision decimal formatting used for every CSV report.
std::string format_real(double value, int digits = 6);

}  // namespace kbstab
