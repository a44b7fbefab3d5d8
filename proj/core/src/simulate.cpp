#include "simobs/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <json.hpp>
#include <sstream>

#include "simobs/error.hpp"
#include "simobs/random.hpp"

namespace simobs {
namespace {

// Mean-reversion rate (1/s) and volatility of the walking profile.
constexpr double kWalkReversion = 0.8;
constexpr double kWalkVolatility = 0.25;
constexpr double kWalkLo = 0.2;
constexpr double kWalkHi = 0.8;
constexpr double kBurstRate = 0.08;  // spikes per second
constexpr double kBurstMeanLength = 2.0;  // seconds

// Seed streams. Fixed so adding a device never shifts the others.
constexpr std::uint64_t kSceneStream = 1;
constexpr std::uint64_t kReferenceStream = 2;
constexpr std::uint64_t kIdStream = 5;
constexpr std::uint64_t kSpyModelStream = 1000;
constexpr std::uint64_t kSpyTrafficStream = 2000;
constexpr std::uint64_t kBackgroundModelStream = 3000;
constexpr std::uint64_t kBackgroundTrafficStream = 4000;

std::size_t steps_in(const ActivitySignal& a, double step) {
  return static_cast<std::size_t>(std::floor(a.duration() / step + 1e-9));
}

std::uint64_t clip_bytes(double b) {
  if (!(b > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::llround(b));
}

void emit_step(std::uint64_t bytes, double step_start, double step, std::vector<TimedEvent>& out) {
  if (bytes == 0) return;
  packetize(std::max(bytes, kMinFrameBytes), step_start, step, out);
}

ActivitySignal still_signal(std::size_t n, Rng& rng, double res) {
  ActivitySignal s{res, std::vector<double>(n)};
  for (auto& v : s.values) v = std::min(0.05, std::abs(rng.normal(0.0, 0.01)));
  return s;
}

ActivitySignal walking_signal(std::size_t n, Rng& rng, double res) {
  std::vector<double> raw(n);
  double x = rng.uniform(0.3, 0.7);
  const double sd = kWalkVolatility * std::sqrt(res);
  for (auto& v : raw) {
    x += kWalkReversion * (0.5 - x) * res + sd * rng.normal();
    // Reflect back into the band.
    if (x < kWalkLo) x = std::min(2 * kWalkLo - x, kWalkHi);
    if (x > kWalkHi) x = std::max(2 * kWalkHi - x, kWalkLo);
    v = x;
  }
  ActivitySignal s{res, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = std::min(n - 1, i + 1);
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += raw[k];
    s.values[i] = std::clamp(sum / static_cast<double>(hi - lo + 1), kWalkLo, kWalkHi);
  }
  return s;
}

ActivitySignal burst_signal(std::size_t n, Rng& rng, double res) {
  ActivitySignal s{res, std::vector<double>(n, 0.0)};
  const double p = kBurstRate * res;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() >= p) continue;
    const double amp = rng.uniform(0.5, 1.0);
    const double len = std::max(0.3, rng.exponential(kBurstMeanLength));
    const auto span = static_cast<std::size_t>(std::ceil(len / res));
    for (std::size_t k = i; k < std::min(n, i + span); ++k) s.values[k] = std::max(s.values[k], amp);
  }
  return s;
}

void perturb(double& v, double spread, Rng& rng) { v *= 1.0 + spread * rng.uniform(-1.0, 1.0); }

CameraModel perturb_camera(CameraModel m, double spread, Rng& rng) {
  perturb(m.idle_bytes_per_step, spread, rng);
  perturb(m.motion_gain, spread, rng);
  perturb(m.iframe_bytes, spread, rng);
  perturb(m.noise_std, spread, rng);
  return m;
}

BackgroundSpec perturb_background(BackgroundSpec b, double spread, Rng& rng) {
  perturb(b.rate, spread, rng);
  perturb(b.jitter, spread, rng);
  perturb(b.page_bytes, spread, rng);
  perturb(b.mean_on, spread, rng);
  perturb(b.mean_off, spread, rng);
  b.stream = perturb_camera(b.stream, spread, rng);
  return b;
}

MacAddress device_mac(std::size_t k) {
  return {0x02, 0x00, 0x00, 0x00, static_cast<std::uint8_t>((k >> 8) & 0xff), static_cast<std::uint8_t>(k & 0xff)};
}

// ---- config parsing -------------------------------------------------------

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void set_camera_field(CameraModel& m, const std::string& field, const std::string& key, const std::string& v) {
  if (field == "idle_bytes") m.idle_bytes_per_step = to_double(key, v);
  else if (field == "motion_gain") m.motion_gain = to_double(key, v);
  else if (field == "iframe_period") m.iframe_period = to_uint(key, v);
  else if (field == "iframe_bytes") m.iframe_bytes = to_double(key, v);
  else if (field == "noise_std") m.noise_std = to_double(key, v);
  else if (field == "delay") m.delay = to_double(key, v);
  else if (field == "burst_accumulate") m.burst_accumulate = to_bool(key, v);
  else if (field == "release_threshold") m.release_threshold = to_double(key, v);
  else if (field == "observed_fraction") m.observed_fraction = to_double(key, v);
  else throw ConfigError("unknown camera field in '" + key + "'");
}

void camera_lines(const CameraModel& m, const std::string& prefix, std::ostream& out) {
  out << prefix << "idle_bytes = " << fmt(m.idle_bytes_per_step) << "\n"
      << prefix << "motion_gain = " << fmt(m.motion_gain) << "\n"
      << prefix << "iframe_period = " << m.iframe_period << "\n"
      << prefix << "iframe_bytes = " << fmt(m.iframe_bytes) << "\n"
      << prefix << "noise_std = " << fmt(m.noise_std) << "\n"
      << prefix << "delay = " << fmt(m.delay) << "\n"
      << prefix << "burst_accumulate = " << (m.burst_accumulate ? "true" : "false") << "\n"
      << prefix << "release_threshold = " << fmt(m.release_threshold) << "\n"
      << prefix << "observed_fraction = " << fmt(m.observed_fraction) << "\n";
}

BackgroundSpec background_defaults(BackgroundKind kind) {
  BackgroundSpec b;
  b.kind = kind;
  switch (kind) {
    case BackgroundKind::kCbr: b.rate = 20000; b.jitter = 1000; break;
    case BackgroundKind::kDownload: b.rate = 400000; b.jitter = 4000; b.ramp_steps = 5; break;
    case BackgroundKind::kBrowsing: b.rate = 0; b.jitter = 0; break;
    case BackgroundKind::kVbrStream: b.rate = 0; b.jitter = 0; break;
  }
  return b;
}

void set_background_field(BackgroundSpec& b, const std::string& field, const std::string& key,
                          const std::string& v) {
  if (field == "rate") b.rate = to_double(key, v);
  else if (field == "jitter") b.jitter = to_double(key, v);
  else if (field == "ramp_steps") b.ramp_steps = to_uint(key, v);
  else if (field == "mean_on") b.mean_on = to_double(key, v);
  else if (field == "mean_off") b.mean_off = to_double(key, v);
  else if (field == "page_bytes") b.page_bytes = to_double(key, v);
  else if (field == "pareto_alpha") b.pareto_alpha = to_double(key, v);
  else if (field == "profile") b.stream_profile = parse_activity_profile(v);
  else if (field.rfind("stream.", 0) == 0) set_camera_field(b.stream, field.substr(7), key, v);
  else throw ConfigError("unknown background field in '" + key + "'");
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues read_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

// Splits "spy.3.delay" into (3, "delay").
std::pair<std::size_t, std::string> indexed_field(const std::string& key, std::size_t prefix_len) {
  const auto dot = key.find('.', prefix_len);
  if (dot == std::string::npos) throw ConfigError("'" + key + "' needs an index and a field");
  const std::string idx = key.substr(prefix_len, dot - prefix_len);
  const std::uint64_t i = to_uint(key, idx);
  if (i > 4096) throw ConfigError("'" + key + "' index too large");
  return {static_cast<std::size_t>(i), key.substr(dot + 1)};
}

const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> presets = {
      {"easy", R"(
duration = 60
activity = walking
tags = scenario=easy
spies = 1
spy_spread = 0.03
background_spread = 0.3
background.0.kind = cbr
background.0.rate = 30000
background.0.jitter = 3000
background.1.kind = cbr
background.1.rate = 8000
background.1.jitter = 400
background.2.kind = vbr_stream
background.2.profile = mixed
background.3.kind = vbr_stream
background.3.profile = burst
background.4.kind = vbr_stream
background.4.profile = walking
background.4.stream.iframe_period = 4
background.4.stream.iframe_bytes = 30000
background.5.kind = browsing
background.6.kind = browsing
background.6.mean_off = 3
background.7.kind = download
background.8.kind = download
background.8.rate = 150000
background.8.ramp_steps = 12
)"},
      {"indoor", R"(
preset = easy
tags = scenario=indoor,regime=indoors
)"},
      {"outdoor", R"(
preset = easy
tags = scenario=outdoor,regime=outdoors
reference.iframe_period = 5
reference.iframe_bytes = 15000
reference.motion_gain = 90000
reference.noise_std = 6000
spy.0.delay = 0.5
spy.0.observed_fraction = 0.5
spy.0.noise_std = 8000
background.4.stream.iframe_period = 10
background.4.stream.iframe_bytes = 40000
background.4.stream.noise_std = 1500
)"},
      {"crowd", R"(
preset = easy
tags = scenario=crowd
background_tile = 69
)"},
      {"burst", R"(
preset = easy
tags = scenario=burst
activity = mixed
spy.0.burst_accumulate = true
spy.0.release_threshold = 150000
)"},
  };
  return presets;
}

void apply_key_values(const KeyValues& kv, SimScenario& s, std::size_t depth);

void apply_preset(const std::string& name, SimScenario& s, std::size_t depth) {
  const auto& presets = preset_texts();
  const auto it = presets.find(name);
  if (it == presets.end()) throw ConfigError("unknown scenario preset '" + name + "'");
  if (depth > 8) throw ConfigError("preset chain too deep");
  std::istringstream in(it->second);
  apply_key_values(read_key_values(in), s, depth + 1);
}

void apply_key_values(const KeyValues& kv, SimScenario& s, std::size_t depth) {
  for (const auto& [k, v] : kv)
    if (k == "preset") apply_preset(v, s, depth);

  std::size_t spy_count = s.spies.size();
  std::size_t tile = 0;
  std::map<std::size_t, std::vector<std::pair<std::string, std::string>>> spy_fields, bg_fields;
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    if (k == "duration") s.duration = to_uint(k, v);
    else if (k == "step") s.step = to_double(k, v);
    else if (k == "seed") s.seed = to_uint(k, v);
    else if (k == "start_time") s.start_time = to_double(k, v);
    else if (k == "activity") s.activity = parse_activity_profile(v);
    else if (k == "spy_spread") s.spy_spread = to_double(k, v);
    else if (k == "background_spread") s.background_spread = to_double(k, v);
    else if (k == "spies") spy_count = to_uint(k, v);
    else if (k == "background") s.background.resize(to_uint(k, v));
    else if (k == "background_tile") tile = to_uint(k, v);
    else if (k == "tags") {
      s.tags.clear();
      std::stringstream ss(v);
      std::string t;
      while (std::getline(ss, t, ',')) {
        t = trim(t);
        if (!t.empty()) s.tags.push_back(t);
      }
    } else if (k.rfind("reference.", 0) == 0) {
      set_camera_field(s.reference, k.substr(10), k, v);
    } else if (k.rfind("spy.", 0) == 0) {
      const auto [i, field] = indexed_field(k, 4);
      spy_fields[i].emplace_back(field, v);
      spy_count = std::max(spy_count, i + 1);
    } else if (k.rfind("background.", 0) == 0) {
      const auto [i, field] = indexed_field(k, 11);
      bg_fields[i].emplace_back(field, v);
      if (s.background.size() <= i) s.background.resize(i + 1);
    } else {
      throw ConfigError("unknown scenario key '" + k + "'");
    }
  }
  // Spies mirror the (possibly edited) reference unless overridden below.
  const bool reference_edited = std::any_of(kv.begin(), kv.end(), [](const auto& p) {
    return p.first.rfind("reference.", 0) == 0;
  });
  if (reference_edited) s.spies.assign(spy_count, s.reference);
  else s.spies.resize(spy_count, s.reference);
  for (const auto& [i, fields] : spy_fields)
    for (const auto& [field, v] : fields) set_camera_field(s.spies[i], field, "spy." + std::to_string(i) + "." + field, v);

  for (const auto& [i, fields] : bg_fields) {
    const std::string prefix = "background." + std::to_string(i) + ".";
    for (const auto& [field, v] : fields)
      if (field == "kind") s.background[i] = background_defaults(parse_background_kind(v));
    for (const auto& [field, v] : fields)
      if (field != "kind") set_background_field(s.background[i], field, prefix + field, v);
  }
  if (tile > 0) {
    if (s.background.empty()) throw ConfigError("'background_tile' needs at least one background device to repeat");
    if (tile > 4096) throw ConfigError("'background_tile' too large");
    std::vector<BackgroundSpec> tiled;
    for (std::size_t i = 0; i < tile; ++i) tiled.push_back(s.background[i % s.background.size()]);
    s.background = std::move(tiled);
  }
}

// ---- pcap writing ---------------------------------------------------------

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
void put_mac(std::vector<std::uint8_t>& out, const MacAddress& m) { out.insert(out.end(), m.begin(), m.end()); }

constexpr MacAddress kAccessPoint{0x02, 0x00, 0x00, 0x00, 0xff, 0xff};
constexpr MacAddress kGateway{0x02, 0x00, 0x00, 0x00, 0xff, 0xfe};

void put_ipv4(std::vector<std::uint8_t>& out, const MacAddress& src, std::size_t total_len) {
  const std::size_t start = out.size();
  out.insert(out.end(), {0x45, 0x00});
  put_be16(out, static_cast<std::uint16_t>(total_len));
  out.insert(out.end(), {0x00, 0x00, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00});
  out.insert(out.end(), {10, 0, src[4], src[5]});
  out.insert(out.end(), {10, 0, 255, 254});
  std::uint32_t sum = 0;
  for (std::size_t i = start; i < start + 20; i += 2) sum += (out[i] << 8) | out[i + 1];
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  const auto csum = static_cast<std::uint16_t>(~sum);
  out[start + 10] = static_cast<std::uint8_t>(csum >> 8);
  out[start + 11] = static_cast<std::uint8_t>(csum);
}

std::vector<std::uint8_t> build_frame(PcapLink link, const MacAddress& src, std::size_t size, std::uint16_t seq) {
  std::vector<std::uint8_t> f;
  f.reserve(size + 8);
  if (link == PcapLink::kEthernet) {
    put_mac(f, kAccessPoint);
    put_mac(f, src);
    put_be16(f, 0x0800);
    put_ipv4(f, src, size - 14);
    f.resize(size, 0);
    return f;
  }
  // Minimal radiotap header: version 0, length 8, no fields present.
  f.insert(f.end(), {0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00});
  f.insert(f.end(), {0x08, 0x01, 0x00, 0x00});  // data frame, to-DS
  put_mac(f, kAccessPoint);
  put_mac(f, src);
  put_mac(f, kGateway);
  put_le16(f, static_cast<std::uint16_t>((seq & 0x0fff) << 4));
  f.insert(f.end(), {0xaa, 0xaa, 0x03, 0x00, 0x00, 0x00, 0x08, 0x00});
  put_ipv4(f, src, size - 32);
  f.resize(8 + size, 0);
  return f;
}

}  // namespace

// ---- activity -------------------------------------------------------------

const char* to_string(ActivityProfile p) {
  switch (p) {
    case ActivityProfile::kStill: return "still";
    case ActivityProfile::kWalking: return "walking";
    case ActivityProfile::kBurst: return "burst";
    case ActivityProfile::kMixed: return "mixed";
  }
  return "?";
}

ActivityProfile parse_activity_profile(const std::string& name) {
  for (auto p : {ActivityProfile::kStill, ActivityProfile::kWalking, ActivityProfile::kBurst, ActivityProfile::kMixed})
    if (name == to_string(p)) return p;
  throw ConfigError("unknown activity profile '" + name + "' (expected still, walking, burst or mixed)");
}

double ActivitySignal::mean_over(double t0, double width) const {
  if (values.empty()) return 0.0;
  const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(t0 / resolution + 1e-9)));
  const auto hi = std::min(values.size(), static_cast<std::size_t>(std::floor((t0 + width) / resolution + 1e-9)));
  if (lo >= hi) return lo < values.size() ? values[lo] : 0.0;
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += values[i];
  return sum / static_cast<double>(hi - lo);
}

ActivitySignal gen_activity(ActivityProfile profile, std::size_t duration_steps, std::uint64_t seed, double step,
                            double resolution) {
  if (!(resolution > 0.0) || !(step > 0.0)) throw ParameterError("activity resolution and step must be positive");
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(duration_steps) * step / resolution));
  Rng rng(seed);
  switch (profile) {
    case ActivityProfile::kStill: return still_signal(n, rng, resolution);
    case ActivityProfile::kWalking: return walking_signal(n, rng, resolution);
    case ActivityProfile::kBurst: return burst_signal(n, rng, resolution);
    case ActivityProfile::kMixed: break;
  }
  ActivitySignal s{resolution, {}};
  s.values.reserve(n);
  for (std::uint64_t seg = 0; s.values.size() < n; ++seg) {
    const auto len = static_cast<std::size_t>(std::llround(rng.uniform(10.0, 20.0) / resolution));
    const auto pick = static_cast<ActivityProfile>(rng.below(3));
    Rng seg_rng(sub_seed(seed, seg + 1));
    ActivitySignal part = pick == ActivityProfile::kStill     ? still_signal(len, seg_rng, resolution)
                          : pick == ActivityProfile::kWalking ? walking_signal(len, seg_rng, resolution)
                                                              : burst_signal(len, seg_rng, resolution);
    const std::size_t take = std::min(len, n - s.values.size());
    s.values.insert(s.values.end(), part.values.begin(), part.values.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return s;
}

// ---- traffic --------------------------------------------------------------

void CameraModel::validate() const {
  if (idle_bytes_per_step < 0 || motion_gain < 0 || iframe_bytes < 0 || noise_std < 0 || release_threshold < 0)
    throw ParameterError("camera byte quantities must be non-negative");
  if (iframe_period < 1) throw ParameterError("camera iframe_period must be at least 1");
  if (!(observed_fraction >= 0.0 && observed_fraction <= 1.0))
    throw ParameterError("camera observed_fraction must lie in [0, 1]");
  if (!std::isfinite(delay)) throw ParameterError("camera delay must be finite");
}

void packetize(std::uint64_t bytes, double step_start, double step, std::vector<TimedEvent>& out) {
  if (bytes == 0) return;
  const std::uint64_t n = (bytes + kMtuBytes - 1) / kMtuBytes;
  const std::uint64_t base = bytes / n;
  const std::uint64_t extra = bytes % n;
  for (std::uint64_t k = 0; k < n; ++k) {
    const double t = step_start + (static_cast<double>(k) + 0.5) * step / static_cast<double>(n);
    out.push_back({t, base + (k < extra ? 1 : 0)});
  }
}

std::vector<TimedEvent> camera_traffic(const ActivitySignal& activity, const CameraModel& model, double step,
                                       std::uint64_t seed, double start_time) {
  model.validate();
  if (!(step > 0.0)) throw ParameterError("step must be positive");
  Rng rng(seed);
  std::vector<TimedEvent> events;
  const std::size_t n = steps_in(activity, step);
  double buffered = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double motion = activity.mean_over(static_cast<double>(i) * step, step) * model.observed_fraction;
    double bytes = model.idle_bytes_per_step + model.motion_gain * motion;
    if (i % model.iframe_period == 0) bytes += model.iframe_bytes;
    bytes += model.noise_std * rng.normal();
    std::uint64_t emit = clip_bytes(bytes);
    if (model.burst_accumulate) {
      buffered += static_cast<double>(emit);
      emit = 0;
      if (buffered > 0.0 && buffered >= model.release_threshold) {
        emit = clip_bytes(buffered);
        buffered = 0.0;
      }
    }
    emit_step(emit, start_time + static_cast<double>(i) * step + model.delay, step, events);
  }
  return events;
}

const char* to_string(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kCbr: return "cbr";
    case BackgroundKind::kVbrStream: return "vbr_stream";
    case BackgroundKind::kBrowsing: return "browsing";
    case BackgroundKind::kDownload: return "download";
  }
  return "?";
}

BackgroundKind parse_background_kind(const std::string& name) {
  for (auto k : {BackgroundKind::kCbr, BackgroundKind::kVbrStream, BackgroundKind::kBrowsing, BackgroundKind::kDownload})
    if (name == to_string(k)) return k;
  throw ParameterError("unknown background kind '" + name + "' (expected cbr, vbr_stream, browsing or download)");
}

std::vector<TimedEvent> background_traffic(const BackgroundSpec& spec, std::size_t duration_steps,
                                           std::uint64_t seed, double step, double start_time) {
  if (!(step > 0.0)) throw ParameterError("step must be positive");
  Rng rng(seed);
  std::vector<TimedEvent> events;
  const auto step_start = [&](std::size_t i) { return start_time + static_cast<double>(i) * step; };
  switch (spec.kind) {
    case BackgroundKind::kCbr:
      for (std::size_t i = 0; i < duration_steps; ++i)
        emit_step(clip_bytes(spec.rate + spec.jitter * rng.normal()), step_start(i), step, events);
      break;
    case BackgroundKind::kDownload:
      for (std::size_t i = 0; i < duration_steps; ++i) {
        double rate = spec.rate;
        if (i < spec.ramp_steps)
          rate *= static_cast<double>(i + 1) / static_cast<double>(spec.ramp_steps + 1);
        emit_step(clip_bytes(rate + spec.jitter * rng.normal()), step_start(i), step, events);
      }
      break;
    case BackgroundKind::kVbrStream: {
      const ActivitySignal scene = gen_activity(spec.stream_profile, duration_steps, sub_seed(seed, 1), step);
      return camera_traffic(scene, spec.stream, step, sub_seed(seed, 2), start_time);
    }
    case BackgroundKind::kBrowsing: {
      if (!(spec.mean_on > 0.0) || !(spec.mean_off > 0.0) || !(spec.pareto_alpha > 0.0))
        throw ParameterError("browsing needs positive mean_on, mean_off and pareto_alpha");
      std::vector<double> bins(duration_steps, 0.0);
      const double horizon = static_cast<double>(duration_steps) * step;
      double t = rng.exponential(spec.mean_off);
      while (t < horizon) {
        const double on = rng.exponential(spec.mean_on);
        const double page = std::min(rng.pareto(spec.page_bytes, spec.pareto_alpha), 50.0 * spec.page_bytes);
        // Spread the page evenly over its on period.
        const double end = std::min(t + on, horizon);
        for (double u = t; u < end;) {
          const auto i = static_cast<std::size_t>(std::floor(u / step));
          if (i >= duration_steps) break;
          const double edge = std::min(end, static_cast<double>(i + 1) * step);
          bins[i] += page * (edge - u) / std::max(on, 1e-9);
          u = edge;
        }
        t += on + rng.exponential(spec.mean_off);
      }
      for (std::size_t i = 0; i < duration_steps; ++i) emit_step(clip_bytes(bins[i]), step_start(i), step, events);
      break;
    }
  }
  return events;
}

// ---- scenarios ------------------------------------------------------------

void SimScenario::validate() const {
  if (duration < 2) throw ParameterError("scenario duration must be at least 2 steps");
  if (!(step > 0.0)) throw ParameterError("scenario step must be positive");
  if (spies.empty() && background.empty()) throw ParameterError("scenario needs at least one device");
  if (spy_spread < 0 || background_spread < 0 || spy_spread >= 1 || background_spread >= 1)
    throw ParameterError("spreads must lie in [0, 1)");
  reference.validate();
  for (const auto& s : spies) s.validate();
  for (const auto& b : background) b.stream.validate();
}

SimScenario preset_scenario(const std::string& name) {
  SimScenario s;
  apply_preset(name, s, 0);
  return s;
}

SimScenario parse_scenario(std::istream& in) {
  SimScenario s;
  apply_key_values(read_key_values(in), s, 0);
  s.validate();
  return s;
}

std::string scenario_to_config(const SimScenario& s) {
  std::ostringstream out;
  out << "duration = " << s.duration << "\n"
      << "step = " << fmt(s.step) << "\n"
      << "seed = " << s.seed << "\n"
      << "start_time = " << fmt(s.start_time) << "\n"
      << "activity = " << to_string(s.activity) << "\n"
      << "spy_spread = " << fmt(s.spy_spread) << "\n"
      << "background_spread = " << fmt(s.background_spread) << "\n";
  out << "tags = ";
  for (std::size_t i = 0; i < s.tags.size(); ++i) out << (i ? "," : "") << s.tags[i];
  out << "\n";
  camera_lines(s.reference, "reference.", out);
  out << "spies = " << s.spies.size() << "\n";
  for (std::size_t i = 0; i < s.spies.size(); ++i) camera_lines(s.spies[i], "spy." + std::to_string(i) + ".", out);
  out << "background = " << s.background.size() << "\n";
  for (std::size_t i = 0; i < s.background.size(); ++i) {
    const auto& b = s.background[i];
    const std::string p = "background." + std::to_string(i) + ".";
    out << p << "kind = " << to_string(b.kind) << "\n"
        << p << "rate = " << fmt(b.rate) << "\n"
        << p << "jitter = " << fmt(b.jitter) << "\n"
        << p << "ramp_steps = " << b.ramp_steps << "\n"
        << p << "mean_on = " << fmt(b.mean_on) << "\n"
        << p << "mean_off = " << fmt(b.mean_off) << "\n"
        << p << "page_bytes = " << fmt(b.page_bytes) << "\n"
        << p << "pareto_alpha = " << fmt(b.pareto_alpha) << "\n"
        << p << "profile = " << to_string(b.stream_profile) << "\n";
    camera_lines(b.stream, p + "stream.", out);
  }
  return out.str();
}

std::vector<DeviceStream> SimDataset::streams() const {
  std::vector<DeviceStream> out;
  for (const auto& d : devices) out.push_back(d.stream);
  return out;
}

std::vector<bool> SimDataset::labels() const {
  std::vector<bool> out;
  for (const auto& d : devices) out.push_back(d.spy);
  return out;
}

SimDataset render_scenario(const SimScenario& s) {
  s.validate();
  const std::uint64_t seed = s.seed;
  const ActivitySignal scene = gen_activity(s.activity, s.duration, sub_seed(seed, kSceneStream), s.step);

  SimDataset ds;
  ds.scenario = s;
  const auto ref_events = camera_traffic(scene, s.reference, s.step, sub_seed(seed, kReferenceStream), s.start_time);
  ds.reference_series = bin_events(ref_events, s.start_time, s.step, s.duration);

  // Device ids are a seeded shuffle so the label cannot be read off the id.
  const std::size_t total = s.spies.size() + s.background.size();
  std::vector<std::size_t> ids(total);
  for (std::size_t i = 0; i < total; ++i) ids[i] = i + 1;
  Rng id_rng(sub_seed(seed, kIdStream));
  for (std::size_t i = total; i > 1; --i) std::swap(ids[i - 1], ids[id_rng.below(i)]);

  const auto add = [&](std::vector<TimedEvent> events, bool spy, std::string role, std::size_t index,
                       std::size_t slot) {
    std::uint64_t in_window = 0;
    const double end = s.start_time + s.step * static_cast<double>(s.duration);
    for (const auto& e : events) in_window += (e.timestamp >= s.start_time && e.timestamp < end) ? 1 : 0;
    SimDevice d{{DeviceId::mac(device_mac(ids[slot])), bin_events(events, s.start_time, s.step, s.duration), in_window},
                spy, std::move(role), index};
    ds.devices.push_back(std::move(d));
  };

  for (std::size_t k = 0; k < s.spies.size(); ++k) {
    Rng model_rng(sub_seed(seed, kSpyModelStream + k));
    const CameraModel m = perturb_camera(s.spies[k], s.spy_spread, model_rng);
    add(camera_traffic(scene, m, s.step, sub_seed(seed, kSpyTrafficStream + k), s.start_time), true, "spy", k, k);
  }
  for (std::size_t j = 0; j < s.background.size(); ++j) {
    Rng model_rng(sub_seed(seed, kBackgroundModelStream + j));
    const BackgroundSpec b = perturb_background(s.background[j], s.background_spread, model_rng);
    add(background_traffic(b, s.duration, sub_seed(seed, kBackgroundTrafficStream + j), s.step, s.start_time),
        false, std::string("background:") + to_string(b.kind), j, s.spies.size() + j);
  }
  std::sort(ds.devices.begin(), ds.devices.end(),
            [](const SimDevice& a, const SimDevice& b) { return a.stream.device_id < b.stream.device_id; });
  return ds;
}

std::vector<LabeledSample> dataset_samples(const SimDataset& ds) {
  std::vector<LabeledSample> out;
  for (const auto& d : ds.devices) {
    LabeledSample smp;
    smp.device_id = d.stream.device_id.to_string();
    smp.features = similarity_vector(ds.reference_series, d.stream.series);
    smp.label = d.spy;
    smp.tags = ds.scenario.tags;
    smp.tags.push_back("role=" + d.role);
    out.push_back(std::move(smp));
  }
  return out;
}

std::vector<LabeledSample> simulate_corpus(const SimScenario& scenario, std::size_t renders, std::uint64_t seed) {
  std::vector<LabeledSample> out;
  for (std::size_t r = 0; r < renders; ++r) {
    SimScenario s = scenario;
    s.seed = sub_seed(seed, r);
    for (auto& smp : dataset_samples(render_scenario(s))) {
      smp.device_id = "r" + std::to_string(r) + "/" + smp.device_id;
      out.push_back(std::move(smp));
    }
  }
  return out;
}

std::vector<std::uint8_t> write_pcap(const SimDataset& dataset, PcapLink link) {
  struct Frame {
    double rel;  // seconds after the scenario start
    std::uint64_t size;
    std::size_t device;
  };
  std::vector<Frame> frames;
  const double step = dataset.scenario.step;
  for (std::size_t d = 0; d < dataset.devices.size(); ++d) {
    const auto& series = dataset.devices[d].stream.series;
    std::vector<TimedEvent> ev;
    for (std::size_t i = 0; i < series.size(); ++i) {
      ev.clear();
      packetize(series[i], static_cast<double>(i) * step + (series.start_time() - dataset.scenario.start_time), step, ev);
      for (const auto& e : ev) frames.push_back({e.timestamp, e.byte_count, d});
    }
  }
  std::stable_sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) { return a.rel < b.rel; });

  std::vector<std::uint8_t> out;
  put_le32(out, 0xa1b2c3d4);
  put_le16(out, 2);
  put_le16(out, 4);
  put_le32(out, 0);
  put_le32(out, 0);
  put_le32(out, 65535);
  put_le32(out, link == PcapLink::kEthernet ? 1 : 127);

  // Whole and fractional start seconds kept apart to preserve microseconds.
  const double start = dataset.scenario.start_time;
  const double start_sec = std::floor(start);
  std::uint16_t seq = 0;
  for (const auto& f : frames) {
    const double frac_total = (start - start_sec) + f.rel;
    const double whole = std::floor(frac_total);
    auto sec = static_cast<std::uint64_t>(start_sec + whole);
    auto usec = static_cast<std::uint64_t>(std::llround((frac_total - whole) * 1e6));
    if (usec >= 1000000) {
      sec += 1;
      usec -= 1000000;
    }
    const auto& dev = dataset.devices[f.device].stream.device_id;
    const MacAddress mac = std::get<MacAddress>(dev.address);
    const auto frame = build_frame(link, mac, static_cast<std::size_t>(f.size), seq++);
    put_le32(out, static_cast<std::uint32_t>(sec));
    put_le32(out, static_cast<std::uint32_t>(usec));
    put_le32(out, static_cast<std::uint32_t>(frame.size()));
    put_le32(out, static_cast<std::uint32_t>(frame.size()));
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

std::string manifest_json(const SimDataset& ds) {
  nlohmann::ordered_json j;
  j["format"] = "simobs-manifest";
  j["version"] = 1;
  nlohmann::ordered_json scenario;
  std::istringstream cfg(scenario_to_config(ds.scenario));
  for (const auto& [k, v] : read_key_values(cfg)) scenario[k] = v;
  j["scenario"] = scenario;
  j["start_time"] = ds.reference_series.start_time();
  j["step"] = ds.reference_series.step();
  j["steps"] = ds.reference_series.size();
  j["reference_total_bytes"] = ds.reference_series.total();
  auto& devices = j["devices"] = nlohmann::ordered_json::array();
  for (const auto& d : ds.devices) {
    devices.push_back({{"id", d.stream.device_id.to_string()},
                       {"spy", d.spy},
                       {"role", d.role},
                       {"index", d.index},
                       {"frame_count", d.stream.frame_count},
                       {"total_bytes", d.stream.series.total()}});
  }
  return j.dump(2) + "\n";
}

}  // namespace simobs
