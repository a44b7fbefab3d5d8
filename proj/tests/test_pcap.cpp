#include <doctest.h>

#include <sstream>

#include "pcap_fixture.hpp"
#include "simobs/error.hpp"
#include "simobs/io.hpp"
#include "simobs/pcap.hpp"

using namespace simobs;
using fixture::Bytes;
using fixture::Mac;

namespace {

const Mac kA{0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff};
const Mac kB{0x11, 0x22, 0x33, 0x44, 0x55, 0x66};

std::vector<PacketRecord> parse(const fixture::PcapWriter& w) { return read_pcap(std::span(w.bytes)); }

std::string mac_of(const std::optional<DeviceId>& id) { return id ? id->to_string() : "none"; }

}  // namespace

TEST_CASE("read_pcap returns records verbatim") {
  fixture::PcapWriter w;
  w.record_us(500000, fixture::ethernet(kA, 100));
  w.record_us(1500000, fixture::ethernet(kA, 200));
  w.record_us(1500000, fixture::ethernet(kB, 300));
  const auto recs = parse(w);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].timestamp == 0.5);
  CHECK(recs[1].timestamp == 1.5);
  CHECK(recs[2].timestamp == 1.5);
  CHECK(recs[0].on_wire_len == 100);
  CHECK(recs[1].on_wire_len == 200);
  CHECK(recs[2].on_wire_len == 300);
  for (const auto& r : recs) {
    CHECK(r.captured_len == r.on_wire_len);
    CHECK(r.payload.size() == r.captured_len);
    CHECK(r.link_type == LinkType::kEthernet);
  }
  CHECK(recs[2].payload == fixture::ethernet(kB, 300));
}

TEST_CASE("read_pcap handles both magics and byte orders") {
  for (bool big : {false, true})
    for (bool ns : {false, true}) {
      fixture::PcapWriter w(1, big, ns);
      w.record(1, ns ? 500000000 : 500000, fixture::ethernet(kA, 60), 1514);
      const auto recs = parse(w);
      REQUIRE(recs.size() == 1);
      CHECK(recs[0].timestamp == 1.5);
      CHECK(recs[0].on_wire_len == 1514);
      CHECK(recs[0].captured_len == 60);
    }
}

TEST_CASE("read_pcap header-only file is empty") {
  fixture::PcapWriter w;
  CHECK(parse(w).empty());
  std::istringstream in(std::string(w.bytes.begin(), w.bytes.end()));
  CHECK(read_pcap(in).empty());
}

TEST_CASE("read_pcap errors") {
  Bytes junk{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24};
  CHECK_THROWS_AS(read_pcap(std::span(junk)), FormatError);

  Bytes ng{0x0a, 0x0d, 0x0d, 0x0a, 0, 0, 0, 0};
  try {
    read_pcap(std::span(ng));
    FAIL("pcapng accepted");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("pcapng") != std::string::npos);
  }

  fixture::PcapWriter w(105);
  try {
    parse(w);
    FAIL("link type accepted");
  } catch (const UnsupportedLinkTypeError& e) {
    CHECK(std::string(e.what()).find("105") != std::string::npos);
  }

  fixture::PcapWriter t;
  t.record_us(0, fixture::ethernet(kA, 100));
  t.bytes.resize(t.bytes.size() - 10);
  try {
    parse(t);
    FAIL("truncated record accepted");
  } catch (const TruncationError& e) {
    CHECK(e.offset() == 24 + 16);
  }

  fixture::PcapWriter h;
  h.record_us(0, fixture::ethernet(kA, 100));
  h.bytes.resize(24 + 7);
  try {
    parse(h);
    FAIL("truncated record header accepted");
  } catch (const TruncationError& e) {
    CHECK(e.offset() == 24);
  }
}

TEST_CASE("transmitter_of Ethernet and 802.11") {
  PacketRecord eth{0, 64, 64, LinkType::kEthernet, fixture::ethernet(kA, 64)};
  CHECK(mac_of(transmitter_of(eth)) == "aa:bb:cc:dd:ee:ff");

  const Bytes data = fixture::concat({fixture::radiotap(24), fixture::dot11_data(kB, 40)});
  PacketRecord rt{0, static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(data.size()),
                  LinkType::kIeee80211Radiotap, data};
  CHECK(radiotap_length(rt) == 24);
  CHECK(mac_of(transmitter_of(rt)) == "11:22:33:44:55:66");

  const Bytes ack = fixture::concat({fixture::radiotap(8), fixture::dot11_ack(kA)});
  PacketRecord ack_rec{0, static_cast<std::uint32_t>(ack.size()), static_cast<std::uint32_t>(ack.size()),
                       LinkType::kIeee80211Radiotap, ack};
  CHECK_FALSE(transmitter_of(ack_rec).has_value());
  AttributionOptions all;
  all.all_frames = true;
  CHECK_FALSE(transmitter_of(ack_rec, all).has_value());

  const Bytes beacon = fixture::concat({fixture::radiotap(8), fixture::dot11_beacon(kA)});
  PacketRecord b{0, static_cast<std::uint32_t>(beacon.size()), static_cast<std::uint32_t>(beacon.size()),
                 LinkType::kIeee80211Radiotap, beacon};
  CHECK_FALSE(transmitter_of(b).has_value());
  CHECK(mac_of(transmitter_of(b, all)) == "aa:bb:cc:dd:ee:ff");
}

TEST_CASE("transmitter_of rejects short frames") {
  PacketRecord eth{0, 10, 10, LinkType::kEthernet, Bytes(10, 0)};
  CHECK_THROWS_AS(transmitter_of(eth), MalformedFrameError);
  PacketRecord rt{0, 4, 4, LinkType::kIeee80211Radiotap, Bytes{0, 0, 8, 0}};
  CHECK_THROWS_AS(transmitter_of(rt), MalformedFrameError);
  Bytes cut = fixture::concat({fixture::radiotap(8), fixture::dot11_data(kA, 0)});
  cut.resize(8 + 12);
  PacketRecord short_data{0, 20, 20, LinkType::kIeee80211Radiotap, cut};
  CHECK_THROWS_AS(transmitter_of(short_data), MalformedFrameError);
}

TEST_CASE("IP grouping reads IPv4 and IPv6 sources") {
  AttributionOptions ip;
  ip.group_by = GroupBy::kIp;
  PacketRecord v4{0, 80, 80, LinkType::kEthernet, fixture::ethernet_ipv4(kA, {192, 168, 1, 7}, 80)};
  CHECK(mac_of(transmitter_of(v4, ip)) == "192.168.1.7");
  std::array<std::uint8_t, 16> addr{0x20, 0x01, 0x0d, 0xb8};
  addr[15] = 1;
  PacketRecord v6{0, 80, 80, LinkType::kEthernet, fixture::ethernet_ipv6(kA, addr, 80)};
  CHECK(mac_of(transmitter_of(v6, ip)) == "2001:db8:0:0:0:0:0:1");
  PacketRecord arp{0, 60, 60, LinkType::kEthernet, fixture::ethernet(kA, 60, 0x0806)};
  CHECK_FALSE(transmitter_of(arp, ip).has_value());
}

TEST_CASE("extract_device_series bins interleaved devices") {
  fixture::PcapWriter w;
  // kA: 100 @0.2, 300 @1.1, 50 @2.9; kB: 200 @0.7, 400 @0.8, 70 @2.0
  w.record_us(200000, fixture::ethernet(kA, 100));
  w.record_us(700000, fixture::ethernet(kB, 200));
  w.record_us(800000, fixture::ethernet(kB, 400));
  w.record_us(1100000, fixture::ethernet(kA, 300));
  w.record_us(2000000, fixture::ethernet(kB, 70));
  w.record_us(2900000, fixture::ethernet(kA, 50));
  const auto recs = parse(w);
  const auto devs = extract_device_series(recs, 0, 1, 3);
  REQUIRE(devs.size() == 2);
  // Ascending device id: 11:22:.. before aa:bb:..
  CHECK(devs[0].device_id.to_string() == "11:22:33:44:55:66");
  CHECK(devs[0].series.values() == std::vector<std::uint64_t>{600, 0, 70});
  CHECK(devs[0].frame_count == 3);
  CHECK(devs[1].series.values() == std::vector<std::uint64_t>{100, 300, 50});
  CHECK(devs[1].frame_count == 3);
}

TEST_CASE("extract_device_series on the three-packet fixture") {
  fixture::PcapWriter w;
  w.record_us(500000, fixture::ethernet(kA, 100));
  w.record_us(1500000, fixture::ethernet(kA, 200));
  w.record_us(1500000, fixture::ethernet(kA, 300));
  const auto devs = extract_device_series(parse(w), 0, 1, 2);
  REQUIRE(devs.size() == 1);
  CHECK(devs[0].series.values() == std::vector<std::uint64_t>{100, 500});
  CHECK(devs[0].frame_count == 3);
}

TEST_CASE("extract_device_series subtracts radiotap bytes by default") {
  fixture::PcapWriter w(127);
  const Bytes f1 = fixture::concat({fixture::radiotap(24), fixture::dot11_data(kB, 100)});  // 24 + 124
  const Bytes f2 = fixture::concat({fixture::radiotap(12), fixture::dot11_data(kB, 10)});   // 12 + 34
  const Bytes ack = fixture::concat({fixture::radiotap(8), fixture::dot11_ack(kB)});
  w.record_us(100000, f1);
  w.record_us(400000, ack);
  w.record_us(1200000, f2);
  const auto recs = parse(w);
  ExtractionStats st;
  auto devs = extract_device_series(recs, 0, 1, 2, ByteBasis::kExcludeRadiotap, {}, &st);
  REQUIRE(devs.size() == 1);
  CHECK(devs[0].series.values() == std::vector<std::uint64_t>{124, 34});
  CHECK(st.attributed_frames == 2);
  CHECK(st.unattributed_frames == 1);
  CHECK(st.total_basis_bytes == 124 + 34 + 10);

  devs = extract_device_series(recs, 0, 1, 2, ByteBasis::kOnWire);
  CHECK(devs[0].series.values() == std::vector<std::uint64_t>{148, 46});
}

TEST_CASE("extract_device_series uses on-wire length, not captured length") {
  fixture::PcapWriter w;
  w.record_us(0, fixture::ethernet(kA, 64), 1514);
  const auto devs = extract_device_series(parse(w), 0, 1, 1);
  CHECK(devs[0].series[0] == 1514);
}

TEST_CASE("extract_device_series drops unattributable frames") {
  fixture::PcapWriter w(127);
  for (int i = 0; i < 5; ++i) w.record_us(i * 100000, fixture::concat({fixture::radiotap(8), fixture::dot11_ack(kA)}));
  CHECK(extract_device_series(parse(w), 0, 1, 2).empty());
  CHECK_THROWS_AS(extract_device_series({}, 0, 0, 2), ParameterError);
}

TEST_CASE("extract_device_series conserves basis bytes") {
  fixture::PcapWriter w(127);
  std::uint64_t t = 0;
  for (int i = 0; i < 200; ++i) {
    t += 37000 + (i * 7919) % 50000;
    const Mac m{2, 0, 0, 0, 0, static_cast<std::uint8_t>(i % 4)};
    Bytes f;
    if (i % 11 == 0) f = fixture::concat({fixture::radiotap(8), fixture::dot11_ack(m)});
    else if (i % 17 == 0) f = Bytes{0, 0, 40, 0};  // radiotap length beyond the frame
    else f = fixture::concat({fixture::radiotap(static_cast<std::uint16_t>(8 + (i % 3) * 8)), fixture::dot11_data(m, i % 300)});
    w.record_us(t, f);
  }
  const auto recs = parse(w);
  ExtractionStats st;
  const auto devs = extract_device_series(recs, 1, 1, 5, ByteBasis::kExcludeRadiotap, {}, &st);
  std::uint64_t kept = 0;
  for (const auto& d : devs) kept += d.series.total();
  CHECK(kept + st.dropped_basis_bytes == st.total_basis_bytes);
  CHECK(st.malformed_frames > 0);
  CHECK(st.out_of_window_frames > 0);
  CHECK(st.attributed_frames + st.unattributed_frames + st.malformed_frames + st.out_of_window_frames == recs.size());
}

TEST_CASE("device table CSV and JSON round trip") {
  std::vector<DeviceStream> devs{{DeviceId::mac(kB), ByteSeries(5, 1, {1, 2, 3}), 3},
                                 {DeviceId::ip({10, 0, 0, 1}), ByteSeries(5, 1, {4, 5, 6}), 2}};
  std::stringstream csv;
  write_devices_csv(csv, devs);
  CHECK(csv.str() == "start_time,step\n5,1\nindex,11:22:33:44:55:66,10.0.0.1\n0,1,4\n1,2,5\n2,3,6\n");
  const auto back = read_devices_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].device_id == devs[0].device_id);
  CHECK(back[1].series == devs[1].series);

  std::stringstream js;
  write_devices_json(js, devs);
  const auto jb = read_devices_json(js);
  REQUIRE(jb.size() == 2);
  CHECK(jb[1].device_id == devs[1].device_id);
  CHECK(jb[0].frame_count == 3);
  CHECK(jb[0].series == devs[0].series);
}
