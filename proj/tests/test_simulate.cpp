#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "simobs/classify.hpp"
#include "simobs/error.hpp"
#include "simobs/pcap.hpp"
#include "simobs/random.hpp"
#include "simobs/similarity.hpp"
#include "simobs/simulate.hpp"

using namespace simobs;

namespace {

ByteSeries bins(const std::vector<TimedEvent>& ev, std::size_t n, double start = 0) {
  return bin_events(ev, start, 1, n);
}

std::vector<double> to_double(const ByteSeries& s) { return {s.values().begin(), s.values().end()}; }

CameraModel quiet_camera() {
  CameraModel m;
  m.idle_bytes_per_step = 0;
  m.motion_gain = 0;
  m.iframe_bytes = 0;
  m.noise_std = 0;
  return m;
}

SimScenario parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in);
}

}  // namespace

TEST_CASE("gen_activity profiles") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto still = gen_activity(ActivityProfile::kStill, 60, seed);
    CHECK(*std::max_element(still.values.begin(), still.values.end()) <= 0.05);
  }
  const auto a = gen_activity(ActivityProfile::kMixed, 60, 3);
  const auto b = gen_activity(ActivityProfile::kMixed, 60, 3);
  CHECK(a.values == b.values);
  CHECK(a.duration() == doctest::Approx(60.0));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = gen_activity(ActivityProfile::kWalking, 60, seed);  // 600 sub-steps
    REQUIRE(w.values.size() == 600);
    double mean = 0;
    for (double v : w.values) {
      CHECK(v >= 0.2);
      CHECK(v <= 0.8);
      mean += v;
    }
    mean /= 600;
    CHECK(mean >= 0.2);
    CHECK(mean <= 0.8);
  }

  const auto burst = gen_activity(ActivityProfile::kBurst, 120, 4);
  CHECK(std::count(burst.values.begin(), burst.values.end(), 0.0) > 0);
  CHECK(*std::max_element(burst.values.begin(), burst.values.end()) > 0.3);
}

TEST_CASE("camera_traffic closed forms") {
  const ActivitySignal zero{0.1, std::vector<double>(600, 0.0)};
  CHECK(camera_traffic(zero, quiet_camera(), 1, 1).empty());

  CameraModel m = quiet_camera();
  m.idle_bytes_per_step = 300;
  m.motion_gain = 5000;
  const ActivitySignal one{0.1, std::vector<double>(600, 1.0)};
  const auto s = bins(camera_traffic(one, m, 1, 1), 60);
  for (auto v : s.values()) CHECK(v == 5300);

  m.iframe_bytes = 1000;
  m.iframe_period = 10;
  const auto s2 = bins(camera_traffic(one, m, 1, 1), 60);
  for (std::size_t i = 0; i < 60; ++i) CHECK(s2[i] == (i % 10 == 0 ? 6300u : 5300u));

  m.idle_bytes_per_step = -1;
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m = quiet_camera();
  m.observed_fraction = 1.5;
  CHECK_THROWS_AS(m.validate(), ParameterError);
  m.observed_fraction = 1;
  m.iframe_period = 0;
  CHECK_THROWS_AS(m.validate(), ParameterError);
}

TEST_CASE("camera_traffic packets respect the MTU and the delay") {
  CameraModel m = quiet_camera();
  m.idle_bytes_per_step = 4000;
  m.delay = 2.0;
  const ActivitySignal a{0.1, std::vector<double>(100, 0.0)};
  const auto ev = camera_traffic(a, m, 1, 1, 100.0);
  for (const auto& e : ev) CHECK(e.byte_count <= kMtuBytes);
  const auto s = bins(ev, 12, 100.0);
  CHECK(s[0] == 0);
  CHECK(s[1] == 0);
  CHECK(s[2] == 4000);
  CHECK(s[11] == 4000);

  std::vector<TimedEvent> out;
  packetize(3001, 5.0, 1.0, out);
  REQUIRE(out.size() == 3);
  std::uint64_t sum = 0;
  for (const auto& e : out) {
    sum += e.byte_count;
    CHECK(e.timestamp >= 5.0);
    CHECK(e.timestamp < 6.0);
  }
  CHECK(sum == 3001);
}

TEST_CASE("burst accumulation flushes in one step") {
  CameraModel m = quiet_camera();
  m.idle_bytes_per_step = 1000;
  m.burst_accumulate = true;
  m.release_threshold = 4500;
  const ActivitySignal a{0.1, std::vector<double>(200, 0.0)};
  const auto s = bins(camera_traffic(a, m, 1, 1), 20);
  std::uint64_t total = 0;
  std::size_t nonzero = 0;
  for (auto v : s.values()) {
    total += v;
    nonzero += v != 0;
    if (v != 0) CHECK(v >= 4500);
  }
  CHECK(nonzero >= 3);
  CHECK(nonzero <= 4);
  CHECK(total <= 20000);
}

TEST_CASE("observed fraction drives divergence from the reference") {
  std::size_t ok = 0;
  const CameraModel ref;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto scene = gen_activity(ActivityProfile::kWalking, 60, sub_seed(100, t));
    CameraModel full, none;
    none.observed_fraction = 0.0;
    const auto r = to_double(bins(camera_traffic(scene, ref, 1, sub_seed(1, t)), 60));
    const auto f1 = to_double(bins(camera_traffic(scene, full, 1, sub_seed(2, t)), 60));
    const auto f0 = to_double(bins(camera_traffic(scene, none, 1, sub_seed(2, t)), 60));
    const auto nr = min_max_normalize(r), n1 = min_max_normalize(f1), n0 = min_max_normalize(f0);
    ok += gaussian_kld(nr.values, n0.values).value > gaussian_kld(nr.values, n1.values).value;
  }
  CHECK(ok >= 90);
}

TEST_CASE("background_traffic kinds") {
  BackgroundSpec cbr;
  cbr.kind = BackgroundKind::kCbr;
  cbr.rate = 1000;
  cbr.jitter = 0;
  const auto flat = bins(background_traffic(cbr, 60, 9), 60);
  for (auto v : flat.values()) CHECK(v == 1000);

  BackgroundSpec browsing;
  browsing.kind = BackgroundKind::kBrowsing;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = bins(background_traffic(browsing, 60, seed), 60);
    CHECK(std::count(s.values().begin(), s.values().end(), 0u) > 0);
    CHECK(s.total() > 0);
  }

  BackgroundSpec dl;
  dl.kind = BackgroundKind::kDownload;
  dl.rate = 100000;
  dl.ramp_steps = 5;
  const auto d = bins(background_traffic(dl, 30, 1), 30);
  CHECK(d[0] < d[10]);
  CHECK(d[20] == 100000);

  CHECK_THROWS_AS(parse_background_kind("torrent"), ParameterError);
}

TEST_CASE("vbr streams are independent of the scene") {
  std::size_t ok = 0;
  BackgroundSpec vbr;
  vbr.kind = BackgroundKind::kVbrStream;
  vbr.stream_profile = ActivityProfile::kWalking;
  const CameraModel ref;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto scene = gen_activity(ActivityProfile::kWalking, 60, sub_seed(7, t));
    const auto r = to_double(bins(camera_traffic(scene, ref, 1, sub_seed(8, t)), 60));
    const auto b = to_double(bins(background_traffic(vbr, 60, sub_seed(9, t)), 60));
    ok += std::fabs(pearson_cc(min_max_normalize(r).values, min_max_normalize(b).values)) < 0.5;
  }
  CHECK(ok >= 90);
}

TEST_CASE("render_scenario structure and determinism") {
  SimScenario s = preset_scenario("easy");
  const SimDataset ds = render_scenario(s);
  CHECK(ds.devices.size() == 10);
  const auto labels = ds.labels();
  CHECK(std::count(labels.begin(), labels.end(), true) == 1);
  CHECK(ds.reference_series.size() == 60);
  CHECK(std::is_sorted(ds.devices.begin(), ds.devices.end(),
                       [](const SimDevice& a, const SimDevice& b) { return a.stream.device_id < b.stream.device_id; }));
  for (const auto& d : ds.devices) CHECK(d.stream.series.size() == 60);

  const SimDataset again = render_scenario(s);
  CHECK(write_pcap(ds, PcapLink::kEthernet) == write_pcap(again, PcapLink::kEthernet));
  CHECK(manifest_json(ds) == manifest_json(again));

  SimScenario lone = s;
  lone.background.clear();
  const auto one = render_scenario(lone);
  REQUIRE(one.devices.size() == 1);
  CHECK(one.devices[0].spy);

  s.seed = 99;
  CHECK(manifest_json(render_scenario(s)) != manifest_json(ds));
}

TEST_CASE("adding a device leaves other traces untouched") {
  SimScenario s = preset_scenario("easy");
  const auto base = render_scenario(s);
  s.background.push_back(s.background.front());
  const auto more = render_scenario(s);
  REQUIRE(more.devices.size() == base.devices.size() + 1);
  CHECK(more.reference_series == base.reference_series);
  for (const auto& d : base.devices) {
    const auto it = std::find_if(more.devices.begin(), more.devices.end(), [&](const SimDevice& x) {
      return x.role == d.role && x.index == d.index && x.spy == d.spy;
    });
    REQUIRE(it != more.devices.end());
    CHECK(it->stream.series == d.stream.series);
  }
}

TEST_CASE("KLD threshold separates the easy spy in most renders") {
  const SimScenario s = preset_scenario("easy");
  const auto cfg = default_threshold(Measure::kKld);
  std::size_t separated = 0;
  for (std::uint64_t r = 0; r < 200; ++r) {
    SimScenario x = s;
    x.seed = sub_seed(2024, r);
    bool ok = true;
    for (const auto& smp : dataset_samples(render_scenario(x))) ok &= threshold_classify(smp.features, cfg).spy == smp.label;
    separated += ok;
  }
  CHECK(separated >= 160);
}

TEST_CASE("write_pcap round trips through pcap ingest") {
  SimScenario s = preset_scenario("easy");
  s.seed = 5;
  s.duration = 20;
  const auto ds = render_scenario(s);
  for (PcapLink link : {PcapLink::kEthernet, PcapLink::kRadiotap}) {
    const auto bytes = write_pcap(ds, link);
    const auto recs = read_pcap(std::span(bytes));
    for (const auto& r : recs) CHECK(r.on_wire_len - radiotap_length(r) <= kMtuBytes + 64);
    const auto got = extract_device_series(recs, s.start_time, s.step, s.duration);
    std::size_t active = 0;
    for (const auto& d : ds.devices) {
      if (d.stream.series.total() == 0) continue;
      ++active;
      const auto it = std::find_if(got.begin(), got.end(), [&](const DeviceStream& g) { return g.device_id == d.stream.device_id; });
      REQUIRE(it != got.end());
      CHECK(it->series == d.stream.series);
    }
    CHECK(got.size() == active);
  }

  SimDataset empty = ds;
  empty.devices.clear();
  const auto header = write_pcap(empty, PcapLink::kEthernet);
  CHECK(header.size() == 24);
  CHECK(read_pcap(std::span(header)).empty());
}

TEST_CASE("scenario config parsing") {
  const auto s = parse("# test\npreset = easy\nduration = 30\nseed = 4\nspy.0.delay = 0.5\ntags = a=1, b=2\n");
  CHECK(s.duration == 30);
  CHECK(s.seed == 4);
  CHECK(s.spies.size() == 1);
  CHECK(s.spies[0].delay == 0.5);
  CHECK(s.background.size() == 9);
  CHECK(s.tags == std::vector<std::string>{"a=1", "b=2"});

  const auto tiled = parse("preset = easy\nbackground_tile = 25\n");
  REQUIRE(tiled.background.size() == 25);
  CHECK(tiled.background[9] == tiled.background[0]);
  CHECK(tiled.background[24] == tiled.background[6]);
  CHECK(preset_scenario("crowd").background.size() == 69);

  const auto restamp = parse("preset = easy\nreference.noise_std = 42\n");
  CHECK(restamp.spies[0].noise_std == 42);

  const auto round = parse(scenario_to_config(preset_scenario("outdoor")));
  CHECK(round.reference == preset_scenario("outdoor").reference);
  CHECK(round.spies == preset_scenario("outdoor").spies);
  CHECK(round.background == preset_scenario("outdoor").background);
  CHECK(round.tags == preset_scenario("outdoor").tags);

  CHECK_THROWS_AS(parse("colour = blue\n"), ConfigError);
  CHECK_THROWS_AS(parse("duration = many\n"), ConfigError);
  CHECK_THROWS_AS(parse("spy.0.wings = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("just a line\n"), ConfigError);
  CHECK_THROWS_AS(parse("background = 0\nbackground_tile = 3\n"), ConfigError);
  CHECK_THROWS_AS(preset_scenario("stadium"), ConfigError);
}
