#pragma once

// Inter-change times of property histories and their density: histogram and
// Gaussian kernel density estimate.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kbstab/kb_model.hpp"

namespace kbstab {

struct InterChangeTimes {
  std::vector<double> gaps;  // years, all > 0
  std::size_t zero_gaps = 0;
};

/// Consecutive differences of the sorted non-null valid times, in fractional
/// years. Equal valid times give a zero gap, which is dropped and counted.
InterChangeTimes inter_change_times(const PairState& state);

/// Concatenated gaps over the entities, in entity order.
InterChangeTimes pool(std::span<const EntityId> entities, const PropertyId& property, const Snapshot& snapshot,
                      unsigned threads = 1);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [min, max]; the last bin is closed. A degenerate
/// range is widened to [x - 0.5, x + 0.5].
Histogram histogram(std::span<const double> samples, std::size_t bins);

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); sd alone when IQR is 0, 1.0 when sd is 0.
double silverman_bandwidth(std::span<const double> samples);

class DensityEstimate {
 public:
  static constexpr std::size_t kGridPoints = 1024;

  std::span<const double> samples() const noexcept { return samples_; }
  double bandwidth() const noexcept { return bandwidth_; }
  const Histogram& histogram() const noexcept { return histogram_; }

  double density(double x) const;
  /// Trapezoidal integral of the density from the grid start to x, clamped to the grid.
  double cdf(double x) const;

  std::span<const double> grid() const noexcept { return grid_; }
  std::span<const double> grid_density() const noexcept { return grid_density_; }
  std::span<const double> grid_cdf() const noexcept { return grid_cdf_; }

 private:
  friend DensityEstimate kde(std::span<const double>, std::optional<double>, std::size_t, unsigned);

  std::vector<double> samples_;
  double bandwidth_ = 1.0;
  Histogram histogram_;
  std::vector<double> grid_;
  std::vector<double> grid_density_;
  std::vector<double> grid_cdf_;
};

/// Requires at least two samples, all positive, and a positive bandwidth
/// when one is given. The grid spans [min - 4h, max + 4h].
DensityEstimate kde(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
                    std::size_t bins = 50, unsigned threads = 1);

/// "series,x,y" rows: histogram (left edge, count) then density (x, f(x)).
void write_density_csv(std::ostream& out, const DensityEstimate& estimate);

}  // namespace kbstab
