#include "simobs/pcap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <map>

#include "simobs/error.hpp"

namespace simobs {
namespace {

constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
constexpr std::uint32_t kMagicPcapng = 0x0a0d0d0a;
constexpr std::size_t kGlobalHeaderLen = 24;
constexpr std::size_t kRecordHeaderLen = 16;
constexpr std::size_t kEthernetHeaderLen = 14;
constexpr std::size_t kRadiotapMinLen = 8;

constexpr std::uint16_t kEthertypeIpv4 = 0x0800;
constexpr std::uint16_t kEthertypeIpv6 = 0x86dd;
constexpr std::uint16_t kEthertypeVlan = 0x8100;

// 802.11 frame-control type field values.
constexpr unsigned kTypeManagement = 0;
constexpr unsigned kTypeControl = 1;
constexpr unsigned kTypeData = 2;

std::uint32_t load_u32(const std::uint8_t* p, bool swap) {
  const std::uint32_t le = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                           (static_cast<std::uint32_t>(p[2]) << 16) |
                           (static_cast<std::uint32_t>(p[3]) << 24);
  if (!swap) return le;
  return ((le & 0xffu) << 24) | ((le & 0xff00u) << 8) | ((le >> 8) & 0xff00u) | (le >> 24);
}

std::uint16_t load_be16(std::span<const std::uint8_t> d, std::size_t off) {
  return static_cast<std::uint16_t>((d[off] << 8) | d[off + 1]);
}

MacAddress mac_at(std::span<const std::uint8_t> d, std::size_t off) {
  MacAddress m{};
  std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(off), 6, m.begin());
  return m;
}

void require(std::span<const std::uint8_t> frame, std::size_t need, const char* what) {
  if (frame.size() < need)
    throw MalformedFrameError(std::string(what) + ": need " + std::to_string(need) +
                              " bytes, frame has " + std::to_string(frame.size()));
}

std::optional<DeviceId> ip_source(std::span<const std::uint8_t> d, std::size_t l3, std::uint16_t ethertype) {
  if (ethertype == kEthertypeIpv4) {
    require(d, l3 + 20, "IPv4 header");
    if ((d[l3] >> 4) != 4) return std::nullopt;
    return DeviceId::ip({d.begin() + static_cast<std::ptrdiff_t>(l3 + 12),
                         d.begin() + static_cast<std::ptrdiff_t>(l3 + 16)});
  }
  if (ethertype == kEthertypeIpv6) {
    require(d, l3 + 40, "IPv6 header");
    if ((d[l3] >> 4) != 6) return std::nullopt;
    return DeviceId::ip({d.begin() + static_cast<std::ptrdiff_t>(l3 + 8),
                         d.begin() + static_cast<std::ptrdiff_t>(l3 + 24)});
  }
  return std::nullopt;
}

std::optional<DeviceId> ethernet_transmitter(std::span<const std::uint8_t> d, const AttributionOptions& opt) {
  require(d, kEthernetHeaderLen, "Ethernet header");
  if (opt.group_by == GroupBy::kMac) return DeviceId::mac(mac_at(d, 6));
  std::size_t l3 = kEthernetHeaderLen;
  std::uint16_t ethertype = load_be16(d, 12);
  if (ethertype == kEthertypeVlan) {
    require(d, kEthernetHeaderLen + 4, "VLAN tag");
    ethertype = load_be16(d, 16);
    l3 += 4;
  }
  return ip_source(d, l3, ethertype);
}

std::optional<DeviceId> dot11_transmitter(std::span<const std::uint8_t> d, const AttributionOptions& opt) {
  require(d, 2, "802.11 frame control");
  const unsigned fc0 = d[0];
  const unsigned fc1 = d[1];
  const unsigned type = (fc0 >> 2) & 0x3u;
  const unsigned subtype = (fc0 >> 4) & 0xfu;

  if (type == kTypeControl) {
    if (!opt.all_frames) return std::nullopt;
    // ACK, CTS and the control wrapper carry only a receiver address.
    if (subtype == 13 || subtype == 12 || subtype == 7 || subtype < 7) return std::nullopt;
    require(d, 16, "802.11 control frame");
    if (opt.group_by == GroupBy::kIp) return std::nullopt;
    return DeviceId::mac(mac_at(d, 10));
  }
  if (type == kTypeManagement) {
    if (!opt.all_frames) return std::nullopt;
    require(d, 24, "802.11 management header");
    if (opt.group_by == GroupBy::kIp) return std::nullopt;
    return DeviceId::mac(mac_at(d, 10));
  }
  if (type != kTypeData) return std::nullopt;

  require(d, 24, "802.11 data header");
  if (opt.group_by == GroupBy::kMac) return DeviceId::mac(mac_at(d, 10));

  // IP grouping needs the LLC/SNAP payload of an unprotected data frame.
  if (fc1 & 0x40u) return std::nullopt;
  std::size_t hdr = 24;
  if ((fc1 & 0x3u) == 0x3u) hdr += 6;   // four-address frame
  if (subtype & 0x8u) hdr += 2;          // QoS control
  if (subtype & 0x4u) return std::nullopt;  // null-data subtypes carry no payload
  require(d, hdr + 8, "LLC/SNAP header");
  if (d[hdr] != 0xaa || d[hdr + 1] != 0xaa || d[hdr + 2] != 0x03) return std::nullopt;
  return ip_source(d, hdr + 8, load_be16(d, hdr + 6));
}

template <typename Mac>
std::string hex_join(const Mac& bytes, char sep) {
  std::string out;
  char buf[4];
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i) out.push_back(sep);
    std::snprintf(buf, sizeof buf, "%02x", bytes[i]);
    out += buf;
  }
  return out;
}

}  // namespace

std::string DeviceId::to_string() const {
  if (const auto* m = std::get_if<MacAddress>(&address)) return hex_join(*m, ':');
  const auto& ip = std::get<IpAddress>(address).bytes;
  if (ip.size() == 4) {
    return std::to_string(ip[0]) + "." + std::to_string(ip[1]) + "." + std::to_string(ip[2]) + "." +
           std::to_string(ip[3]);
  }
  std::string out;
  char buf[8];
  for (std::size_t i = 0; i + 1 < ip.size(); i += 2) {
    if (i) out.push_back(':');
    std::snprintf(buf, sizeof buf, "%x", (ip[i] << 8) | ip[i + 1]);
    out += buf;
  }
  return out;
}

std::optional<MacAddress> parse_mac(const std::string& text) {
  MacAddress m{};
  if (text.size() != 17) return std::nullopt;
  for (std::size_t i = 0; i < 6; ++i) {
    if (i && text[i * 3 - 1] != ':') return std::nullopt;
    unsigned v = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const char c = text[i * 3 + k];
      v <<= 4;
      if (c >= '0' && c <= '9') v |= static_cast<unsigned>(c - '0');
      else if (c >= 'a' && c <= 'f') v |= static_cast<unsigned>(c - 'a' + 10);
      else if (c >= 'A' && c <= 'F') v |= static_cast<unsigned>(c - 'A' + 10);
      else return std::nullopt;
    }
    m[i] = static_cast<std::uint8_t>(v);
  }
  return m;
}

std::vector<PacketRecord> read_pcap(std::span<const std::uint8_t> data) {
  if (data.size() < 4) throw TruncationError("pcap global header truncated", 0);
  const std::uint32_t magic_le = load_u32(data.data(), false);
  bool swap = false;
  bool nanos = false;
  if (magic_le == kMagicMicros || magic_le == kMagicNanos) {
    nanos = magic_le == kMagicNanos;
  } else if (load_u32(data.data(), true) == kMagicMicros || load_u32(data.data(), true) == kMagicNanos) {
    swap = true;
    nanos = load_u32(data.data(), true) == kMagicNanos;
  } else if (magic_le == kMagicPcapng) {
    throw FormatError("pcapng files are not supported; convert to classic pcap (e.g. editcap -F pcap)");
  } else {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic_le);
    throw FormatError(std::string("unknown pcap magic ") + buf);
  }
  if (data.size() < kGlobalHeaderLen) throw TruncationError("pcap global header truncated", data.size());

  const std::uint32_t network = load_u32(data.data() + 20, swap);
  LinkType link;
  if (network == static_cast<std::uint32_t>(LinkType::kEthernet))
    link = LinkType::kEthernet;
  else if (network == static_cast<std::uint32_t>(LinkType::kIeee80211Radiotap))
    link = LinkType::kIeee80211Radiotap;
  else
    throw UnsupportedLinkTypeError("unsupported pcap link type " + std::to_string(network));

  const double frac_scale = nanos ? 1e-9 : 1e-6;
  std::vector<PacketRecord> records;
  std::size_t off = kGlobalHeaderLen;
  while (off < data.size()) {
    if (data.size() - off < kRecordHeaderLen) throw TruncationError("pcap record header truncated", off);
    const std::uint8_t* h = data.data() + off;
    const std::uint32_t ts_sec = load_u32(h, swap);
    const std::uint32_t ts_frac = load_u32(h + 4, swap);
    const std::uint32_t incl = load_u32(h + 8, swap);
    const std::uint32_t orig = load_u32(h + 12, swap);
    if (incl > orig)
      throw FormatError("pcap record at byte offset " + std::to_string(off) +
                        " has captured length above on-wire length");
    const std::size_t body = off + kRecordHeaderLen;
    if (data.size() - body < incl) throw TruncationError("pcap record body truncated", body);

    PacketRecord rec;
    rec.timestamp = static_cast<double>(ts_sec) + static_cast<double>(ts_frac) * frac_scale;
    rec.on_wire_len = orig;
    rec.captured_len = incl;
    rec.link_type = link;
    rec.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(body),
                       data.begin() + static_cast<std::ptrdiff_t>(body + incl));
    records.push_back(std::move(rec));
    off = body + incl;
  }
  return records;
}

std::vector<PacketRecord> read_pcap(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_pcap(std::span<const std::uint8_t>(bytes));
}

std::size_t radiotap_length(const PacketRecord& record) {
  if (record.link_type != LinkType::kIeee80211Radiotap) return 0;
  const std::span<const std::uint8_t> d(record.payload);
  require(d, kRadiotapMinLen, "radiotap header");
  const std::size_t len = static_cast<std::size_t>(d[2]) | (static_cast<std::size_t>(d[3]) << 8);
  if (len < kRadiotapMinLen) throw MalformedFrameError("radiotap length field below 8");
  require(d, len, "radiotap header");
  return len;
}

std::optional<DeviceId> transmitter_of(const PacketRecord& record, const AttributionOptions& options) {
  const std::span<const std::uint8_t> d(record.payload);
  if (record.link_type == LinkType::kEthernet) return ethernet_transmitter(d, options);
  const std::size_t rt = radiotap_length(record);
  return dot11_transmitter(d.subspan(rt), options);
}

std::vector<DeviceStream> extract_device_series(std::span<const PacketRecord> records, double start_time,
                                                double step, std::size_t n_steps, ByteBasis basis,
                                                const AttributionOptions& options, ExtractionStats* stats) {
  // Validates step/n_steps up front so empty inputs still report parameter errors.
  (void)bin_events({}, start_time, step, n_steps);

  ExtractionStats local;
  std::map<DeviceId, std::vector<TimedEvent>> groups;
  const double window_end = start_time + step * static_cast<double>(n_steps);
  for (const auto& rec : records) {
    std::uint64_t bytes = rec.on_wire_len;
    std::optional<DeviceId> id;
    try {
      const std::size_t rt = radiotap_length(rec);
      if (basis == ByteBasis::kExcludeRadiotap) bytes = rec.on_wire_len >= rt ? rec.on_wire_len - rt : 0;
      id = transmitter_of(rec, options);
    } catch (const MalformedFrameError&) {
      ++local.malformed_frames;
      local.total_basis_bytes += bytes;
      local.dropped_basis_bytes += bytes;
      continue;
    }
    local.total_basis_bytes += bytes;
    if (!id) {
      ++local.unattributed_frames;
      local.dropped_basis_bytes += bytes;
      continue;
    }
    const double pos = std::floor((rec.timestamp - start_time) / step);
    if (!(rec.timestamp >= start_time) || rec.timestamp >= window_end || pos >= static_cast<double>(n_steps)) {
      ++local.out_of_window_frames;
      local.dropped_basis_bytes += bytes;
      continue;
    }
    ++local.attributed_frames;
    groups[*id].push_back({rec.timestamp, bytes});
  }

  std::vector<DeviceStream> out;
  out.reserve(groups.size());
  for (auto& [id, events] : groups) {
    out.push_back({id, bin_events(events, start_time, step, n_steps), events.size()});
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace simobs
