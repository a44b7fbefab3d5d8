#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace simobs {

inline constexpr double kDefaultStep = 1.0;
inline constexpr std::size_t kDefaultWindow = 60;

// One timestamped chunk of bytes: a captured frame or an encoded sample.
struct TimedEvent {
  double timestamp = 0.0;
  std::uint64_t byte_count = 0;
};

// Byte counts per fixed time step. value(i) covers the half-open wall-clock
// interval [start_time + i*step, start_time + (i+1)*step).
class ByteSeries {
 public:
  // Throws ParameterError when step <= 0 or values is empty.
  ByteSeries(double start_time, double step, std::vector<std::uint64_t> values);

  double start_time() const noexcept { return start_time_; }
  double step() const noexcept { return step_; }
  double end_time() const noexcept { return start_time_ + step_ * static_cast<double>(values_.size()); }
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::uint64_t>& values() const noexcept { return values_; }
  std::uint64_t operator[](std::size_t i) const { return values_[i]; }
  std::uint64_t total() const noexcept;

  // First n steps (n clamped to size(), at least 1).
  ByteSeries prefix(std::size_t n) const;
  // Steps [offset, offset + n).
  ByteSeries slice(std::size_t offset, std::size_t n) const;

  friend bool operator==(const ByteSeries&, const ByteSeries&) = default;

 private:
  double start_time_;
  double step_;
  std::vector<std::uint64_t> values_;
};

// Min-max scaled values in [0,1]. A constant source scales to all zeros with
// degenerate set.
struct NormalizedSeries {
  std::vector<double> values;
  bool degenerate = false;

  std::size_t size() const noexcept { return values.size(); }
};

// Buckets events by floor((t - start_time) / step); events outside the window
// are dropped. Events need not be sorted.
ByteSeries bin_events(std::span<const TimedEvent> events, double start_time,
                      double step, std::size_t n_steps);

NormalizedSeries min_max_normalize(const ByteSeries& series);
NormalizedSeries min_max_normalize(std::span<const double> values);

// Truncates both series to their common wall-clock window, snapped to the
// step grid of the later-starting series. Results keep argument order.
std::pair<ByteSeries, ByteSeries> align(const ByteSeries& a, const ByteSeries& b);

}  // namespace simobs
