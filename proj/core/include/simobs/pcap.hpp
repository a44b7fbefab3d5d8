#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "simobs/timeseries.hpp"

namespace simobs {

enum class LinkType : std::uint32_t {
  kEthernet = 1,
  kIeee80211Radiotap = 127,
};

struct PacketRecord {
  double timestamp = 0.0;
  std::uint32_t on_wire_len = 0;
  std::uint32_t captured_len = 0;
  LinkType link_type = LinkType::kEthernet;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

using MacAddress = std::array<std::uint8_t, 6>;

// IPv4 is stored as 4 bytes, IPv6 as 16.
struct IpAddress {
  std::vector<std::uint8_t> bytes;
  auto operator<=>(const IpAddress&) const = default;
};

// Transmitting device: MAC in monitor mode or IP in promiscuous mode. Orders
// MACs before IPs, then bytewise.
struct DeviceId {
  std::variant<MacAddress, IpAddress> address;

  static DeviceId mac(const MacAddress& m) { return DeviceId{m}; }
  static DeviceId ip(std::vector<std::uint8_t> bytes) { return DeviceId{IpAddress{std::move(bytes)}}; }
  bool is_mac() const noexcept { return address.index() == 0; }
  // "aa:bb:cc:dd:ee:ff", dotted IPv4, or full-form IPv6.
  std::string to_string() const;

  auto operator<=>(const DeviceId&) const = default;
};

// Parses "aa:bb:cc:dd:ee:ff"; nullopt on malformed input.
std::optional<MacAddress> parse_mac(const std::string& text);

struct DeviceStream {
  DeviceId device_id;
  ByteSeries series;
  std::uint64_t frame_count = 0;
};

// Reads a classic pcap file (microsecond or nanosecond magic, either byte
// order). Throws FormatError, TruncationError or UnsupportedLinkTypeError.
std::vector<PacketRecord> read_pcap(std::span<const std::uint8_t> data);
std::vector<PacketRecord> read_pcap(std::istream& in);

enum class GroupBy { kMac, kIp };

struct AttributionOptions {
  GroupBy group_by = GroupBy::kMac;
  // Count management/control 802.11 frames that carry a transmitter address.
  bool all_frames = false;
};

// Length of the radiotap pseudo-header, 0 for Ethernet records.
// Throws MalformedFrameError when the header is cut short.
std::size_t radiotap_length(const PacketRecord& record);

// Transmitter of a frame, or nullopt when the frame is not attributable (ACK,
// CTS, non-data 802.11 unless all_frames, non-IP ethertype under IP grouping).
// Throws MalformedFrameError when the frame is shorter than its headers.
std::optional<DeviceId> transmitter_of(const PacketRecord& record,
                                       const AttributionOptions& options = {});

enum class ByteBasis {
  kExcludeRadiotap,  // on-wire length minus radiotap header (default)
  kOnWire,
};

struct ExtractionStats {
  std::uint64_t attributed_frames = 0;
  std::uint64_t unattributed_frames = 0;
  std::uint64_t malformed_frames = 0;
  std::uint64_t out_of_window_frames = 0;
  std::uint64_t total_basis_bytes = 0;
  std::uint64_t dropped_basis_bytes = 0;
};

// Groups records by transmitter and bins each group. Devices come back in
// ascending DeviceId order; frames outside the window do not count toward
// frame_count, and devices with no in-window frame are omitted.
std::vector<DeviceStream> extract_device_series(std::span<const PacketRecord> records,
                                                double start_time, double step,
                                                std::size_t n_steps,
                                                ByteBasis basis = ByteBasis::kExcludeRadiotap,
                                                const AttributionOptions& options = {},
                                                ExtractionStats* stats = nullptr);

}  // namespace simobs
