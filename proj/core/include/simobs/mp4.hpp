#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "simobs/timeseries.hpp"

namespace simobs {

// One run of the decoding-time table: `count` consecutive samples lasting
// `delta` media ticks each.
struct SttsEntry {
  std::uint32_t count = 0;
  std::uint32_t delta = 0;
  friend bool operator==(const SttsEntry&, const SttsEntry&) = default;
};

struct TrackSampleTable {
  std::uint32_t timescale = 0;
  std::vector<std::uint32_t> sample_sizes;
  std::vector<SttsEntry> sample_deltas;
  std::string handler;  // four-character code, e.g. "vide" or "soun"

  std::uint64_t sample_count() const noexcept { return sample_sizes.size(); }
  bool is_video() const noexcept { return handler == "vide"; }
};

// Walks moov/trak/mdia and returns one sample table per track, in file order.
// Throws StructureError naming the missing box, TruncationError when a box
// overruns its parent.
std::vector<TrackSampleTable> parse_mp4(std::span<const std::uint8_t> data);
std::vector<TrackSampleTable> parse_mp4(std::istream& in);

struct VideoSeriesOptions {
  // Bin every track instead of only the first video track.
  bool all_tracks = false;
};

// Buckets the first video track's sample sizes by decode time. The series is
// media-relative (start_time 0). Throws NoVideoTrackError.
ByteSeries video_byte_series(std::span<const TrackSampleTable> tables, double step,
                             const VideoSeriesOptions& options = {});

}  // namespace simobs
