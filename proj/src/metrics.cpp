#include "kbstab/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace kbstab {

BinaryMetrics compute_metrics(const BinaryCounts& counts) {
  BinaryMetrics m;
  m.counts = counts;
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(counts.tp, counts.tp + counts.fp);
  m.recall = ratio(counts.tp, counts.tp + counts.fn);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.accuracy = ratio(counts.tp + counts.tn, counts.total());
  return m;
}

std::string format_real(double value, int digits) {
  if (value == 0.0) value = 0.0;  // drop negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  std::string s = buf;
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace kbstab
