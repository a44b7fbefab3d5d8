#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "simobs/error.hpp"
#include "simobs/io.hpp"

using namespace simobs;

namespace {

DeviceStream dev(std::uint8_t last, std::vector<std::uint64_t> v) {
  return {DeviceId::mac({0xaa, 0, 0, 0, 0, last}), ByteSeries(10, 0.5, std::move(v)), 3};
}

}  // namespace

TEST_CASE("format_double round trips") {
  for (double v : {0.0, 0.1, 1.0 / 3.0, 1700000000.25, -2.5e-300, 12.51}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.26) == "0.26");
}

TEST_CASE("series JSON round trip") {
  const ByteSeries s(3.5, 0.25, {1, 2, 18446744073709551615ull});
  std::stringstream ss;
  write_series_json(ss, s);
  CHECK(read_series_json(ss) == s);
  std::istringstream bad(R"({"format":"other","values":[1]})");
  CHECK_THROWS_AS(read_series_json(bad), FormatError);
}

TEST_CASE("device tables round trip in CSV and JSON") {
  const std::vector<DeviceStream> d{dev(1, {1, 2, 3}), dev(2, {0, 0, 9})};
  std::stringstream csv, json;
  write_devices_csv(csv, d);
  write_devices_json(json, d);
  for (auto* in : {static_cast<std::istream*>(&csv), static_cast<std::istream*>(&json)}) {
    const auto back = in == &csv ? read_devices_csv(*in) : read_devices_json(*in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].device_id == d[0].device_id);
    CHECK(back[1].series == d[1].series);
  }
  const std::vector<DeviceStream> ragged{dev(1, {1, 2, 3}), dev(2, {1})};
  std::stringstream out;
  CHECK_THROWS(write_devices_csv(out, ragged));
}

TEST_CASE("device id parsing") {
  CHECK(parse_device_id("AA:bb:cc:00:11:22").to_string() == "aa:bb:cc:00:11:22");
  CHECK(parse_device_id("10.0.0.7").to_string() == "10.0.0.7");
  CHECK_FALSE(parse_device_id("10.0.0.7").is_mac());
  CHECK_THROWS_AS(parse_device_id("camera"), FormatError);
  CHECK_THROWS_AS(parse_device_id("300.0.0.1"), FormatError);
}

TEST_CASE("similarity rows keep error rows") {
  std::vector<SimilarityRow> rows(2);
  rows[0] = {"aa:00:00:00:00:01", {0.5, 1.25, 0.01, 0.002, kRefDegenerate | kJsdUndefined}, ""};
  rows[1] = {"aa:00:00:00:00:02", {}, "no overlap"};
  std::stringstream ss;
  write_similarity_csv(ss, rows);
  CHECK(ss.str().rfind("device_id,cc,dtw,kld,jsd,flags,error\n", 0) == 0);
  const auto back = read_similarity_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sv.dtw == 1.25);
  CHECK(back[0].sv.flags == (kRefDegenerate | kJsdUndefined));
  CHECK(back[1].error == "no overlap");
}

TEST_CASE("samples CSV round trip") {
  std::vector<LabeledSample> s(2);
  s[0].device_id = "r0/aa:00:00:00:00:01";
  s[0].features = {0.9, 2.0, 0.001, 0.0001, 0};
  s[0].label = true;
  s[0].tags = {"regime=indoors", "role=spy"};
  s[1].device_id = "r0/aa:00:00:00:00:02";
  s[1].features = {0.0, 20.0, 10.0, std::log(2.0), kCcUndefined};
  std::stringstream ss;
  write_samples_csv(ss, s);
  const auto back = read_samples_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].label);
  CHECK_FALSE(back[1].label);
  CHECK(back[0].tags == s[0].tags);
  CHECK(back[1].features.jsd == s[1].features.jsd);
  CHECK(back[1].features.flags == kCcUndefined);
}

TEST_CASE("thresholds JSON keeps infinities and f1") {
  std::vector<ThresholdEntry> e(2);
  e[0].config = default_threshold(Measure::kCc);
  e[0].f1 = 0.75;
  e[1].config = ThresholdConfig::for_measure(Measure::kKld, -std::numeric_limits<double>::infinity());
  std::stringstream ss;
  write_thresholds_json(ss, e);
  const auto back = read_thresholds_json(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].config.threshold == 0.21);
  CHECK(back[0].config.direction == Direction::kSpyIfAtLeast);
  CHECK(back[0].f1 == 0.75);
  CHECK(std::isinf(back[1].config.threshold));
  CHECK(back[1].config.threshold < 0);
  CHECK(back[1].f1 < 0);

  std::istringstream plain(R"({"format":"simobs-thresholds","thresholds":[{"measure":"dtw","threshold":3}]})");
  const auto p = read_thresholds_json(plain);
  REQUIRE(p.size() == 1);
  CHECK(p[0].config.direction == Direction::kSpyIfAtMost);
  std::istringstream empty(R"({"format":"simobs-thresholds","thresholds":[]})");
  CHECK_THROWS_AS(read_thresholds_json(empty), FormatError);
}

TEST_CASE("manifest labels") {
  std::istringstream in(
      R"({"format":"simobs-manifest","devices":[{"id":"aa:00:00:00:00:01","spy":true},{"id":"aa:00:00:00:00:02","spy":false}]})");
  const auto m = read_manifest_labels(in);
  CHECK(m.size() == 2);
  CHECK(m.at("aa:00:00:00:00:01"));
  CHECK_FALSE(m.at("aa:00:00:00:00:02"));
}
