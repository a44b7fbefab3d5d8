#include "simobs/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "simobs/error.hpp"

namespace simobs {

ByteSeries::ByteSeries(double start_time, double step, std::vector<std::uint64_t> values)
    : start_time_(start_time), step_(step), values_(std::move(values)) {
  if (!(step_ > 0.0) || !std::isfinite(step_))
    throw ParameterError("series step must be positive, got " + std::to_string(step_));
  if (!std::isfinite(start_time_)) throw ParameterError("series start time must be finite");
  if (values_.empty()) throw ParameterError("series must have at least one step");
}

std::uint64_t ByteSeries::total() const noexcept {
  return std::accumulate(values_.begin(), values_.end(), std::uint64_t{0});
}

ByteSeries ByteSeries::prefix(std::size_t n) const { return slice(0, n); }

ByteSeries ByteSeries::slice(std::size_t offset, std::size_t n) const {
  if (offset >= values_.size()) throw ParameterError("slice offset beyond series end");
  n = std::clamp<std::size_t>(n, 1, values_.size() - offset);
  std::vector<std::uint64_t> out(values_.begin() + static_cast<std::ptrdiff_t>(offset),
                                 values_.begin() + static_cast<std::ptrdiff_t>(offset + n));
  return ByteSeries(start_time_ + step_ * static_cast<double>(offset), step_, std::move(out));
}

ByteSeries bin_events(std::span<const TimedEvent> events, double start_time, double step,
                      std::size_t n_steps) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw ParameterError("bin step must be positive, got " + std::to_string(step));
  if (n_steps == 0) throw ParameterError("bin count must be at least 1");

  std::vector<std::uint64_t> bins(n_steps, 0);
  for (const auto& e : events) {
    const double pos = std::floor((e.timestamp - start_time) / step);
    if (!(pos >= 0.0) || pos >= static_cast<double>(n_steps)) continue;
    bins[static_cast<std::size_t>(pos)] += e.byte_count;
  }
  return ByteSeries(start_time, step, std::move(bins));
}

NormalizedSeries min_max_normalize(std::span<const double> values) {
  NormalizedSeries out;
  out.values.assign(values.size(), 0.0);
  if (values.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    // Pin the extremes so min = 0 and max = 1 hold exactly.
    if (values[i] == lo)
      out.values[i] = 0.0;
    else if (values[i] == *hi_it)
      out.values[i] = 1.0;
    else
      out.values[i] = std::clamp((values[i] - lo) / range, 0.0, 1.0);
  }
  return out;
}

NormalizedSeries min_max_normalize(const ByteSeries& series) {
  std::vector<double> raw(series.values().begin(), series.values().end());
  return min_max_normalize(std::span<const double>(raw));
}

std::pair<ByteSeries, ByteSeries> align(const ByteSeries& a, const ByteSeries& b) {
  if (std::abs(a.step() - b.step()) > 1e-12 * std::max(a.step(), b.step()))
    throw ParameterError("cannot align series with different steps (" +
                         std::to_string(a.step()) + " vs " + std::to_string(b.step()) + ")");
  const bool a_later = a.start_time() >= b.start_time();
  const ByteSeries& later = a_later ? a : b;
  const ByteSeries& earlier = a_later ? b : a;
  const double step = later.step();

  // Offset of the later start on the earlier grid; sub-step skew is dropped.
  const double raw_offset = (later.start_time() - earlier.start_time()) / step;
  const auto offset = static_cast<std::size_t>(std::floor(raw_offset + 1e-9));
  if (offset >= earlier.size())
    throw AlignmentError("series windows do not overlap");
  const std::size_t n = std::min(later.size(), earlier.size() - offset);

  ByteSeries later_out = later.slice(0, n);
  ByteSeries earlier_out = earlier.slice(offset, n);
  if (a_later) return {std::move(later_out), std::move(earlier_out)};
  return {std::move(earlier_out), std::move(later_out)};
}

}  // namespace simobs
