#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simobs/classify.hpp"
#include "simobs/pcap.hpp"
#include "simobs/timeseries.hpp"

namespace simobs {

// Shortest decimal that parses back to the same double.
std::string format_double(double v);

// Series CSV:
//   start_time,step
//   <start>,<step>
//   index,bytes
//   0,<bytes>
//   ...
void write_series_csv(std::ostream& out, const ByteSeries& series);
// Accepts a single-column device table as well. Throws FormatError.
ByteSeries read_series_csv(std::istream& in);

// {"format": "simobs-series", "start_time", "step", "values"}
void write_series_json(std::ostream& out, const ByteSeries& series);
ByteSeries read_series_json(std::istream& in);

// Device table CSV: the same two-line preamble, then `index,<id>,<id>...` and
// one row per step. All devices must share start and step.
void write_devices_csv(std::ostream& out, std::span<const DeviceStream> devices);
std::vector<DeviceStream> read_devices_csv(std::istream& in);

void write_devices_json(std::ostream& out, std::span<const DeviceStream> devices);
std::vector<DeviceStream> read_devices_json(std::istream& in);

// Parses a MAC, dotted IPv4 or IPv6 literal. Throws FormatError.
DeviceId parse_device_id(const std::string& text);

struct SimilarityRow {
  std::string device_id;
  SimilarityVector sv;
  std::string error;  // non-empty when the row could not be computed
};

// device_id,cc,dtw,kld,jsd,flags[,error]
void write_similarity_csv(std::ostream& out, std::span<const SimilarityRow> rows);
void write_similarity_json(std::ostream& out, std::span<const SimilarityRow> rows);
std::vector<SimilarityRow> read_similarity_csv(std::istream& in);

// device_id,cc,dtw,kld,jsd,flags,label,tags  (tags separated by ';')
void write_samples_csv(std::ostream& out, std::span<const LabeledSample> samples);
std::vector<LabeledSample> read_samples_csv(std::istream& in);

// {"format": "simobs-thresholds", "thresholds": [{measure, threshold,
// direction, f1?}]}. A negative f1 is omitted.
struct ThresholdEntry {
  ThresholdConfig config;
  double f1 = -1.0;
};
void write_thresholds_json(std::ostream& out, std::span<const ThresholdEntry> entries);
std::vector<ThresholdEntry> read_thresholds_json(std::istream& in);

// Device id -> spy label from a simulator manifest.
std::map<std::string, bool> read_manifest_labels(std::istream& in);

}  // namespace simobs
