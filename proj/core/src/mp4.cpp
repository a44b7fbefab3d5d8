#include "simobs/mp4.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <optional>

#include "simobs/error.hpp"

namespace simobs {
namespace {

// Sample tables larger than this are rejected instead of allocated.
constexpr std::uint64_t kMaxSamples = 1u << 22;
// Longest media timeline we bin, in steps.
constexpr double kMaxBins = 1u << 24;

struct Box {
  std::string type;
  std::size_t begin = 0;  // offset of the box header
  std::size_t body = 0;   // offset of the payload
  std::size_t end = 0;    // one past the last payload byte
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8(std::size_t off, std::size_t limit) const {
    need(off, 1, limit);
    return data_[off];
  }
  std::uint32_t u32(std::size_t off, std::size_t limit) const {
    need(off, 4, limit);
    return (static_cast<std::uint32_t>(data_[off]) << 24) | (static_cast<std::uint32_t>(data_[off + 1]) << 16) |
           (static_cast<std::uint32_t>(data_[off + 2]) << 8) | data_[off + 3];
  }
  std::uint64_t u64(std::size_t off, std::size_t limit) const {
    return (static_cast<std::uint64_t>(u32(off, limit)) << 32) | u32(off + 4, limit);
  }
  std::string fourcc(std::size_t off, std::size_t limit) const {
    need(off, 4, limit);
    return std::string(reinterpret_cast<const char*>(data_.data() + off), 4);
  }

  // Children of [begin, end).
  std::vector<Box> boxes(std::size_t begin, std::size_t end) const {
    std::vector<Box> out;
    std::size_t off = begin;
    while (off < end) {
      if (end - off < 8) throw TruncationError("box header truncated", off);
      std::uint64_t size = u32(off, end);
      Box box;
      box.type = fourcc(off + 4, end);
      box.begin = off;
      box.body = off + 8;
      if (size == 1) {
        size = u64(off + 8, end);
        box.body = off + 16;
      } else if (size == 0) {
        size = end - off;  // extends to the end of its container
      }
      if (size < box.body - off) throw TruncationError("box '" + box.type + "' size below header", off);
      if (size > end - off) throw TruncationError("box '" + box.type + "' overruns its container", off);
      box.end = off + static_cast<std::size_t>(size);
      out.push_back(box);
      off = box.end;
    }
    return out;
  }

 private:
  void need(std::size_t off, std::size_t n, std::size_t limit) const {
    if (off > limit || limit - off < n || limit > data_.size()) throw TruncationError("box payload truncated", off);
  }
  std::span<const std::uint8_t> data_;
};

std::optional<Box> find(const std::vector<Box>& boxes, const char* type) {
  for (const auto& b : boxes)
    if (b.type == type) return b;
  return std::nullopt;
}

Box expect(const Reader& r, const Box& parent, const char* type) {
  auto child = find(r.boxes(parent.body, parent.end), type);
  if (!child) throw StructureError("missing '" + std::string(type) + "' box inside '" + parent.type + "'");
  return *child;
}

std::uint32_t parse_mdhd(const Reader& r, const Box& mdhd) {
  const std::uint8_t version = r.u8(mdhd.body, mdhd.end);
  // version 1 widens creation/modification times to 64 bits.
  const std::size_t ts_off = mdhd.body + (version == 1 ? 4 + 16 : 4 + 8);
  const std::uint32_t timescale = r.u32(ts_off, mdhd.end);
  if (timescale == 0) throw StructureError("'mdhd' timescale is zero");
  return timescale;
}

std::vector<SttsEntry> parse_stts(const Reader& r, const Box& stts) {
  const std::uint32_t n = r.u32(stts.body + 4, stts.end);
  if (static_cast<std::uint64_t>(n) * 8 > stts.end - std::min(stts.end, stts.body + 8))
    throw TruncationError("'stts' entry table truncated", stts.begin);
  std::vector<SttsEntry> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    out[i].count = r.u32(stts.body + 8 + 8 * std::size_t{i}, stts.end);
    out[i].delta = r.u32(stts.body + 12 + 8 * std::size_t{i}, stts.end);
  }
  return out;
}

std::vector<std::uint32_t> parse_stsz(const Reader& r, const Box& stsz) {
  const std::uint32_t uniform = r.u32(stsz.body + 4, stsz.end);
  const std::uint32_t n = r.u32(stsz.body + 8, stsz.end);
  if (n > kMaxSamples) throw StructureError("'stsz' sample count " + std::to_string(n) + " exceeds limit");
  if (uniform != 0) return std::vector<std::uint32_t>(n, uniform);
  if (static_cast<std::uint64_t>(n) * 4 > stsz.end - std::min(stsz.end, stsz.body + 12))
    throw TruncationError("'stsz' size table truncated", stsz.begin);
  std::vector<std::uint32_t> out(n);
  for (std::uint32_t i = 0; i < n; ++i) out[i] = r.u32(stsz.body + 12 + 4 * std::size_t{i}, stsz.end);
  return out;
}

TrackSampleTable parse_trak(const Reader& r, const Box& trak) {
  const Box mdia = expect(r, trak, "mdia");
  const auto mdia_children = r.boxes(mdia.body, mdia.end);
  const auto mdhd = find(mdia_children, "mdhd");
  if (!mdhd) throw StructureError("missing 'mdhd' box inside 'mdia'");
  const auto hdlr = find(mdia_children, "hdlr");
  if (!hdlr) throw StructureError("missing 'hdlr' box inside 'mdia'");
  const auto minf = find(mdia_children, "minf");
  if (!minf) throw StructureError("missing 'minf' box inside 'mdia'");
  const Box stbl = expect(r, *minf, "stbl");
  const auto stbl_children = r.boxes(stbl.body, stbl.end);
  const auto stts = find(stbl_children, "stts");
  if (!stts) throw StructureError("missing 'stts' box inside 'stbl'");
  const auto stsz = find(stbl_children, "stsz");
  if (!stsz) throw StructureError("missing 'stsz' box inside 'stbl'");

  TrackSampleTable t;
  t.timescale = parse_mdhd(r, *mdhd);
  // hdlr: version/flags, pre_defined, handler_type.
  t.handler = r.fourcc(hdlr->body + 8, hdlr->end);
  t.sample_deltas = parse_stts(r, *stts);
  t.sample_sizes = parse_stsz(r, *stsz);

  std::uint64_t expanded = 0;
  for (const auto& e : t.sample_deltas) expanded += e.count;
  if (expanded != t.sample_sizes.size())
    throw StructureError("'stts' covers " + std::to_string(expanded) + " samples but 'stsz' lists " +
                         std::to_string(t.sample_sizes.size()));
  return t;
}

void bin_track(const TrackSampleTable& t, double step, std::vector<std::uint64_t>& bins) {
  std::uint64_t ticks = 0;
  std::size_t k = 0;
  for (const auto& run : t.sample_deltas) {
    for (std::uint32_t i = 0; i < run.count; ++i, ++k) {
      const double when = static_cast<double>(ticks) / static_cast<double>(t.timescale);
      const double pos = std::floor(when / step);
      if (pos >= kMaxBins) throw StructureError("track '" + t.handler + "' timeline exceeds bin limit");
      const auto idx = static_cast<std::size_t>(pos);
      if (idx >= bins.size()) bins.resize(idx + 1, 0);
      bins[idx] += t.sample_sizes[k];
      ticks += run.delta;
    }
  }
}

}  // namespace

std::vector<TrackSampleTable> parse_mp4(std::span<const std::uint8_t> data) {
  const Reader r(data);
  const auto top = r.boxes(0, data.size());
  const auto moov = find(top, "moov");
  if (!moov) {
    if (find(top, "moof")) throw StructureError("missing 'moov' box (fragmented MP4 with 'moof' is not supported)");
    throw StructureError("missing 'moov' box");
  }
  std::vector<TrackSampleTable> tracks;
  for (const auto& child : r.boxes(moov->body, moov->end))
    if (child.type == "trak") tracks.push_back(parse_trak(r, child));
  if (tracks.empty()) throw StructureError("missing 'trak' box inside 'moov'");
  if (find(top, "moof")) throw StructureError("fragmented MP4 ('moof' boxes) is not supported");
  return tracks;
}

std::vector<TrackSampleTable> parse_mp4(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_mp4(std::span<const std::uint8_t>(bytes));
}

ByteSeries video_byte_series(std::span<const TrackSampleTable> tables, double step,
                             const VideoSeriesOptions& options) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError("step must be positive");
  const auto video = std::find_if(tables.begin(), tables.end(), [](const auto& t) { return t.is_video(); });
  if (video == tables.end()) throw NoVideoTrackError("no track with handler 'vide'");

  std::vector<std::uint64_t> bins;
  if (options.all_tracks) {
    for (const auto& t : tables) bin_track(t, step, bins);
  } else {
    bin_track(*video, step, bins);
  }
  if (bins.empty()) bins.push_back(0);
  return ByteSeries(0.0, step, std::move(bins));
}

}  // namespace simobs
