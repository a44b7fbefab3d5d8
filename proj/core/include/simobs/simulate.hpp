#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "simobs/classify.hpp"
#include "simobs/pcap.hpp"
#include "simobs/timeseries.hpp"

namespace simobs {

enum class ActivityProfile { kStill, kWalking, kBurst, kMixed };

const char* to_string(ActivityProfile p);
ActivityProfile parse_activity_profile(const std::string& name);

// Scene motion magnitude in [0,1], sampled every `resolution` seconds.
struct ActivitySignal {
  double resolution = 0.1;
  std::vector<double> values;

  // Mean motion inside [t0, t0 + width).
  double mean_over(double t0, double width) const;
  double duration() const { return resolution * static_cast<double>(values.size()); }
};

// still: near-zero noise (<= 0.05). walking: mean-reverting walk kept in
// [0.2, 0.8], lightly smoothed. burst: zero baseline with Poisson-timed
// spikes. mixed: 10-20 s segments of the other three.
ActivitySignal gen_activity(ActivityProfile profile, std::size_t duration_steps, std::uint64_t seed,
                            double step = kDefaultStep, double resolution = 0.1);

// Motion-driven encoder traffic of one camera.
struct CameraModel {
  double idle_bytes_per_step = 2000;
  double motion_gain = 60000;  // bytes per unit activity per step
  std::size_t iframe_period = 10;  // steps
  double iframe_bytes = 40000;
  double noise_std = 1500;
  double delay = 0.0;  // seconds
  bool burst_accumulate = false;
  double release_threshold = 0;  // bytes buffered before a burst flush
  double observed_fraction = 1.0;  // share of the scene in view

  // Throws ParameterError on negative byte quantities, period 0 or a
  // fraction outside [0,1].
  void validate() const;
  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

// Smallest frame the simulator emits; a step with fewer bytes rounds up.
inline constexpr std::uint64_t kMinFrameBytes = 64;
inline constexpr std::uint64_t kMtuBytes = 1500;

// Splits `bytes` into ceil(bytes / 1500) near-equal frames spread uniformly
// inside [step_start, step_start + step).
void packetize(std::uint64_t bytes, double step_start, double step, std::vector<TimedEvent>& out);

// Per-step bytes = idle + gain * fraction * mean activity + I-frame burst on
// multiples of iframe_period + Gaussian noise, clipped at 0 and rounded;
// optionally buffered until release_threshold. Events are shifted by delay.
std::vector<TimedEvent> camera_traffic(const ActivitySignal& activity, const CameraModel& model, double step,
                                       std::uint64_t seed, double start_time = 0.0);

enum class BackgroundKind { kCbr, kVbrStream, kBrowsing, kDownload };

const char* to_string(BackgroundKind k);
BackgroundKind parse_background_kind(const std::string& name);

struct BackgroundSpec {
  BackgroundKind kind = BackgroundKind::kCbr;
  // cbr / download: bytes per step; jitter is the Gaussian std in bytes.
  double rate = 20000;
  double jitter = 0;
  // download: linear ramp-up length in steps.
  std::size_t ramp_steps = 5;
  // browsing: exponential on/off periods (seconds), Pareto page sizes.
  double mean_on = 3.0;
  double mean_off = 6.0;
  double page_bytes = 20000;
  double pareto_alpha = 1.5;
  // vbr_stream: a camera watching an unrelated scene.
  CameraModel stream = {2000, 60000, 30, 10000, 2500, 0.0, false, 0, 1.0};
  ActivityProfile stream_profile = ActivityProfile::kMixed;

  friend bool operator==(const BackgroundSpec&, const BackgroundSpec&) = default;
};

std::vector<TimedEvent> background_traffic(const BackgroundSpec& spec, std::size_t duration_steps,
                                           std::uint64_t seed, double step = kDefaultStep,
                                           double start_time = 0.0);

struct SimScenario {
  std::size_t duration = kDefaultWindow;  // steps
  double step = kDefaultStep;
  std::uint64_t seed = 0;
  double start_time = 1700000000.0;
  ActivityProfile activity = ActivityProfile::kWalking;
  CameraModel reference;
  std::vector<CameraModel> spies;
  std::vector<BackgroundSpec> background;
  // Relative per-device jitter of spy byte parameters (uniform +/-).
  double spy_spread = 0.0;
  // Relative per-device jitter of background rates and stream parameters.
  double background_spread = 0.0;
  std::vector<std::string> tags;  // "key=value"

  void validate() const;
};

struct SimDevice {
  DeviceStream stream;
  bool spy = false;
  std::string role;  // "spy" or "background:<kind>"
  std::size_t index = 0;  // position in spies, or in background
};

struct SimDataset {
  SimScenario scenario;
  ByteSeries reference_series{0.0, 1.0, {0}};
  std::vector<SimDevice> devices;  // ascending device id

  std::vector<DeviceStream> streams() const;
  std::vector<bool> labels() const;
};

// Built-in scenarios: "easy" (1 spy, 9 background, walking, 60 steps),
// "indoor" and "outdoor" (two camera regimes tagged regime=...), "crowd"
// (easy with 69 background devices) and "burst" (accumulating spy).
// Throws ConfigError.
SimScenario preset_scenario(const std::string& name);

// Key-value config: `key = value` lines, '#' comments. Keys mirror the
// SimScenario fields (duration, step, seed, start_time, activity, tags,
// spy_spread, background_spread), `preset` seeds the defaults, camera
// fields are set via reference.<field>, spy.<i>.<field> and
// background.<i>.<field>; `spies = N` and `background = N` size the lists and
// `background_tile = N` repeats the configured background devices up to N.
// Editing any reference.<field> re-stamps every spy from the reference
// before spy.<i>.<field> overrides apply. Throws ConfigError.
SimScenario parse_scenario(std::istream& in);
std::string scenario_to_config(const SimScenario& s);

SimDataset render_scenario(const SimScenario& scenario);

// Every candidate's similarity to the reference as a labeled sample. Tags
// are the scenario tags plus role=<role>.
std::vector<LabeledSample> dataset_samples(const SimDataset& ds);

// Renders `renders` copies of the scenario with seeds derived from `seed`
// and pools their samples.
std::vector<LabeledSample> simulate_corpus(const SimScenario& scenario, std::size_t renders, std::uint64_t seed);

enum class PcapLink { kEthernet, kRadiotap };

// Classic microsecond pcap of every device's binned bytes: each step's bytes
// become near-equal frames of at most 1500 bytes, uniformly spaced. Frame
// lengths reproduce the bins under pcap-ingest's default byte basis.
std::vector<std::uint8_t> write_pcap(const SimDataset& dataset, PcapLink link);

// Ground-truth manifest: scenario echo plus per-device id, role and label.
std::string manifest_json(const SimDataset& dataset);

}  // namespace simobs
