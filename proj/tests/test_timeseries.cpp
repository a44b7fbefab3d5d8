#include <doctest.h>

#include <cmath>
#include <sstream>
#include <optional>

#include "simobs/error.hpp"
#include "simobs/io.hpp"
#include "simobs/random.hpp"
#include "simobs/timeseries.hpp"

using namespace simobs;

namespace {

std::vector<double> as_doubles(const std::vector<std::uint64_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("bin_events sums events per half-open step") {
  const std::vector<TimedEvent> ev{{0.1, 100}, {0.9, 50}, {1.5, 200}};
  CHECK(bin_events(ev, 0, 1, 2).values() == std::vector<std::uint64_t>{150, 200});
  CHECK(bin_events({}, 0, 1, 3).values() == std::vector<std::uint64_t>{0, 0, 0});
}

TEST_CASE("bin_events puts right-edge events in the next bin and drops out-of-window events") {
  const std::vector<TimedEvent> ev{{1.0, 7}, {2.0, 11}, {-0.5, 3}, {3.0, 5}, {2.999, 1}};
  const auto s = bin_events(ev, 0, 1, 3);
  CHECK(s.values() == std::vector<std::uint64_t>{0, 7, 12});
}

TEST_CASE("bin_events rejects bad parameters") {
  CHECK_THROWS_AS(bin_events({}, 0, 0, 3), ParameterError);
  CHECK_THROWS_AS(bin_events({}, 0, -1, 3), ParameterError);
  CHECK_THROWS_AS(bin_events({}, 0, 1, 0), ParameterError);
}

TEST_CASE("bin_events conserves bytes of in-window events") {
  Rng rng(11);
  std::vector<TimedEvent> ev;
  for (int i = 0; i < 1000; ++i) ev.push_back({rng.uniform(0, 60), 1});
  CHECK(bin_events(ev, 0, 1, 60).total() == 1000);

  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TimedEvent> e;
    std::uint64_t inside = 0;
    const double start = rng.uniform(-5, 5);
    const double step = rng.uniform(0.25, 2.0);
    const std::size_t n = 1 + rng.below(30);
    for (int i = 0; i < 100; ++i) {
      const double t = rng.uniform(-20, 80);
      const std::uint64_t b = rng.below(2000);
      e.push_back({t, b});
      const double pos = std::floor((t - start) / step);
      if (pos >= 0 && pos < static_cast<double>(n)) inside += b;
    }
    const auto s = bin_events(e, start, step, n);
    CHECK(s.total() == inside);
    CHECK(s.size() == n);
  }
}

TEST_CASE("min_max_normalize examples") {
  auto n = min_max_normalize(ByteSeries(0, 1, {0, 5, 10}));
  CHECK(n.values == std::vector<double>{0.0, 0.5, 1.0});
  CHECK_FALSE(n.degenerate);

  n = min_max_normalize(ByteSeries(0, 1, {7, 7, 7}));
  CHECK(n.values == std::vector<double>{0, 0, 0});
  CHECK(n.degenerate);

  n = min_max_normalize(ByteSeries(0, 1, {3, 1, 2}));
  CHECK(n.values == std::vector<double>{1.0, 0.0, 0.5});
}

TEST_CASE("min_max_normalize properties") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(2 + rng.below(80));
    for (auto& x : v) x = std::floor(rng.uniform(0, 1e6));
    const auto n = min_max_normalize(std::span<const double>(v));
    if (n.degenerate) continue;
    double lo = 1, hi = 0;
    for (double x : n.values) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);

    // Idempotent.
    const auto again = min_max_normalize(std::span<const double>(n.values));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(again.values[i] - n.values[i]) <= 1e-12);

    // Positive affine invariance.
    const double alpha = rng.uniform(0.01, 100), beta = rng.uniform(-1e5, 1e5);
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = alpha * v[i] + beta;
    const auto nw = min_max_normalize(std::span<const double>(w));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(nw.values[i] - n.values[i]) <= 1e-9);
  }
}

TEST_CASE("align examples") {
  const ByteSeries a(0, 1, std::vector<std::uint64_t>(60, 1));
  const ByteSeries b(0, 1, std::vector<std::uint64_t>(60, 2));
  auto [x, y] = align(a, b);
  CHECK(x == a);
  CHECK(y == b);

  std::vector<std::uint64_t> ramp(60);
  for (std::size_t i = 0; i < 60; ++i) ramp[i] = i;
  const ByteSeries c(10, 1, ramp);
  auto [p, q] = align(ByteSeries(0, 1, ramp), c);
  CHECK(p.size() == 50);
  CHECK(q.size() == 50);
  CHECK(p.start_time() == 10);
  CHECK(q.start_time() == 10);
  CHECK(p.end_time() == 60);
  CHECK(p[0] == 10);
  CHECK(q[0] == 0);

  CHECK_THROWS_AS(align(ByteSeries(0, 1, std::vector<std::uint64_t>(30, 1)),
                        ByteSeries(40, 1, std::vector<std::uint64_t>(30, 1))),
                  AlignmentError);
  CHECK_THROWS_AS(align(ByteSeries(0, 1, {1, 2}), ByteSeries(0, 2, {1, 2})), ParameterError);
}

TEST_CASE("align snaps sub-step skew onto the later series' grid") {
  const ByteSeries a(0, 1, {1, 2, 3, 4, 5});
  const ByteSeries b(2.4, 1, {10, 20, 30, 40});
  auto [x, y] = align(a, b);
  CHECK(x.values() == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(y.values() == std::vector<std::uint64_t>{10, 20, 30});
  CHECK(x.start_time() == 2.0);
  CHECK(y.start_time() == 2.4);
}

TEST_CASE("align yields the same overlap either way round") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const ByteSeries a(static_cast<double>(rng.below(50)), 1, std::vector<std::uint64_t>(1 + rng.below(60), 1));
    const ByteSeries b(static_cast<double>(rng.below(50)), 1, std::vector<std::uint64_t>(1 + rng.below(60), 2));
    bool ab_ok = true, ba_ok = true;
    std::optional<std::pair<ByteSeries, ByteSeries>> ab, ba;
    try {
      ab = align(a, b);
    } catch (const AlignmentError&) {
      ab_ok = false;
    }
    try {
      ba = align(b, a);
    } catch (const AlignmentError&) {
      ba_ok = false;
    }
    REQUIRE(ab_ok == ba_ok);
    if (!ab_ok) continue;
    CHECK(ab->first == ba->second);
    CHECK(ab->second == ba->first);
    CHECK(ab->first.size() == ab->second.size());
    CHECK(ab->first.start_time() == ab->second.start_time());
  }
}

TEST_CASE("ByteSeries validates and slices") {
  CHECK_THROWS_AS(ByteSeries(0, 0, {1}), ParameterError);
  CHECK_THROWS_AS(ByteSeries(0, 1, {}), ParameterError);
  const ByteSeries s(100, 0.5, {1, 2, 3, 4});
  CHECK(s.end_time() == 102);
  CHECK(s.prefix(2).values() == std::vector<std::uint64_t>{1, 2});
  CHECK(s.prefix(10) == s);
  CHECK(s.slice(1, 2).start_time() == 100.5);
  CHECK(s.total() == 10);
  CHECK(as_doubles(s.values()).size() == 4);
}

TEST_CASE("series CSV round trip keeps exact bytes") {
  const ByteSeries s(1700000000.25, 1, {0, 18446744073709551615ull, 42});
  std::stringstream ss;
  write_series_csv(ss, s);
  CHECK(ss.str() == "start_time,step\n1700000000.25,1\nindex,bytes\n0,0\n1,18446744073709551615\n2,42\n");
  CHECK(read_series_csv(ss) == s);
}
