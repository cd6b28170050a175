#include "kbstab/temporal_density.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "kbstab/errors.hpp"
#include "kbstab/metrics.hpp"

namespace kbstab {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

// Runs fn(begin, end) over [0, n) split into at most `threads` chunks.
template <class Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n / 64));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(fn, b, std::min(n, b + chunk));
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

InterChangeTimes inter_change_times(const PairState& state) {
  std::vector<double> times;
  for (const auto& r : state.records()) {
    if (r.valid_time) times.push_back(r.valid_time->fractional_year());
  }
  std::sort(times.begin(), times.end());
  InterChangeTimes out;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double gap = times[i] - times[i - 1];
    if (gap > 0.0) {
      out.gaps.push_back(gap);
    } else {
      ++out.zero_gaps;
    }
  }
  return out;
}

InterChangeTimes pool(std::span<const EntityId> entities, const PropertyId& property, const Snapshot& snapshot,
                      unsigned threads) {
  std::vector<InterChangeTimes> per(entities.size());
  parallel_chunks(entities.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) per[i] = inter_change_times(project(snapshot, entities[i], property));
  });
  InterChangeTimes out;
  for (auto& p : per) {
    out.gaps.insert(out.gaps.end(), p.gaps.begin(), p.gaps.end());
    out.zero_gaps += p.zero_gaps;
  }
  return out;
}

Histogram histogram(std::span<const double> samples, std::size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  double lo = 0.0, hi = 1.0;
  if (!samples.empty()) {
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    lo = *mn;
    hi = *mx;
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + width * static_cast<double>(i));
  h.edges.back() = hi;
  for (double x : samples) {
    if (!std::isfinite(x)) throw ValidationError("histogram sample is not finite");
    auto bin = static_cast<std::size_t>((x - lo) / width);
    h.counts[std::min(bin, bins - 1)]++;
  }
  return h;
}

double silverman_bandwidth(std::span<const double> samples) {
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return 1.0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

double DensityEstimate::density(double x) const {
  double s = 0.0;
  for (double xi : samples_) {
    const double u = (x - xi) / bandwidth_;
    s += std::exp(-0.5 * u * u);
  }
  return s * kInvSqrt2Pi / (static_cast<double>(samples_.size()) * bandwidth_);
}

double DensityEstimate::cdf(double x) const {
  if (x <= grid_.front()) return 0.0;
  if (x >= grid_.back()) return grid_cdf_.back();
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const auto i = static_cast<std::size_t>(it - grid_.begin()) - 1;
  return grid_cdf_[i] + 0.5 * (grid_density_[i] + density(x)) * (x - grid_[i]);
}

DensityEstimate kde(std::span<const double> samples, std::optional<double> bandwidth, std::size_t bins,
                    unsigned threads) {
  if (samples.size() < 2) {
    throw ValidationError("density estimation needs at least 2 samples, got " + std::to_string(samples.size()));
  }
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ValidationError("samples must be positive and finite");
  }
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth))) {
    throw ValidationError("bandwidth must be positive, got " + format_real(*bandwidth));
  }
  DensityEstimate est;
  est.samples_.assign(samples.begin(), samples.end());
  est.bandwidth_ = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  est.histogram_ = histogram(samples, bins);

  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - 4.0 * est.bandwidth_;
  const double hi = *mx + 4.0 * est.bandwidth_;
  const std::size_t n = DensityEstimate::kGridPoints;
  est.grid_.resize(n);
  est.grid_density_.resize(n);
  for (std::size_t i = 0; i < n; ++i) est.grid_[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  parallel_chunks(n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) est.grid_density_[i] = est.density(est.grid_[i]);
  });
  est.grid_cdf_.assign(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    est.grid_cdf_[i] = est.grid_cdf_[i - 1] +
                       0.5 * (est.grid_density_[i] + est.grid_density_[i - 1]) * (est.grid_[i] - est.grid_[i - 1]);
  }
  return est;
}

void write_density_csv(std::ostream& out, const DensityEstimate& estimate) {
  out << "series,x,y\n";
  const auto& h = estimate.histogram();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << "histogram," << format_real(h.edges[i], 6) << ',' << h.counts[i] << '\n';
  }
  for (std::size_t i = 0; i < estimate.grid().size(); ++i) {
    out << "density," << format_real(estimate.grid()[i], 6) << ',' << format_real(estimate.grid_density()[i], 9)
        << '\n';
  }
}

}  // namespace kbstab
