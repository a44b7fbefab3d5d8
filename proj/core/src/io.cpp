#include "simobs/io.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "simobs/error.hpp"

namespace simobs {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const char* what) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

struct Table {
  double start = 0.0;
  double step = 1.0;
  std::vector<std::string> columns;
  std::vector<std::vector<std::uint64_t>> values;  // per column
};

Table read_table(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line != "start_time,step") throw FormatError("expected 'start_time,step' header");
  if (!next_line(in, line)) throw FormatError("missing start_time,step values");
  const auto meta = split(line, ',');
  if (meta.size() != 2) throw FormatError("expected '<start_time>,<step>'");
  Table t;
  t.start = parse_double(meta[0], "start_time");
  t.step = parse_double(meta[1], "step");
  if (!next_line(in, line)) throw FormatError("missing column header");
  auto cols = split(line, ',');
  if (cols.size() < 2 || cols[0] != "index") throw FormatError("expected 'index,<column>...' header");
  t.columns.assign(cols.begin() + 1, cols.end());
  t.values.assign(t.columns.size(), {});
  std::uint64_t expect = 0;
  while (next_line(in, line)) {
    const auto cells = split(line, ',');
    if (cells.size() != cols.size())
      throw FormatError("row " + std::to_string(expect) + " has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(cols.size()));
    if (parse_u64(cells[0], "index") != expect) throw FormatError("row indices must run 0,1,2,...");
    for (std::size_t c = 1; c < cells.size(); ++c) t.values[c - 1].push_back(parse_u64(cells[c], "byte count"));
    ++expect;
  }
  if (expect == 0) throw FormatError("table has no rows");
  return t;
}

ByteSeries make_series(double start, double step, std::vector<std::uint64_t> values) {
  try {
    return ByteSeries(start, step, std::move(values));
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
}

void write_preamble(std::ostream& out, double start, double step) {
  out << "start_time,step\n" << format_double(start) << "," << format_double(step) << "\n";
}

// Cells are never quoted; separators inside free text become spaces.
std::string escape_field(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return s;
}

// Double for a report cell; undefined measures still print their stored value.
std::string cell(double v) { return format_double(v); }

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_series_csv(std::ostream& out, const ByteSeries& series) {
  write_preamble(out, series.start_time(), series.step());
  out << "index,bytes\n";
  for (std::size_t i = 0; i < series.size(); ++i) out << i << "," << series[i] << "\n";
}

ByteSeries read_series_csv(std::istream& in) {
  Table t = read_table(in);
  if (t.columns.size() != 1) throw FormatError("series CSV must have exactly one value column");
  return make_series(t.start, t.step, std::move(t.values[0]));
}

void write_series_json(std::ostream& out, const ByteSeries& series) {
  nlohmann::ordered_json j;
  j["format"] = "simobs-series";
  j["version"] = 1;
  j["start_time"] = series.start_time();
  j["step"] = series.step();
  j["values"] = series.values();
  out << j.dump(2) << "\n";
}

ByteSeries read_series_json(std::istream& in) {
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "simobs-series") throw FormatError("not a simobs-series document");
    return make_series(j.at("start_time").get<double>(), j.at("step").get<double>(),
                       j.at("values").get<std::vector<std::uint64_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed series JSON: ") + e.what());
  }
}

void write_devices_csv(std::ostream& out, std::span<const DeviceStream> devices) {
  if (devices.empty()) throw ParameterError("device table needs at least one device");
  const auto& first = devices.front().series;
  for (const auto& d : devices)
    if (d.series.start_time() != first.start_time() || d.series.step() != first.step() || d.series.size() != first.size())
      throw ParameterError("devices in one table must share start, step and length");
  write_preamble(out, first.start_time(), first.step());
  out << "index";
  for (const auto& d : devices) out << "," << d.device_id.to_string();
  out << "\n";
  for (std::size_t i = 0; i < first.size(); ++i) {
    out << i;
    for (const auto& d : devices) out << "," << d.series[i];
    out << "\n";
  }
}

std::vector<DeviceStream> read_devices_csv(std::istream& in) {
  Table t = read_table(in);
  std::vector<DeviceStream> out;
  for (std::size_t c = 0; c < t.columns.size(); ++c)
    out.push_back({parse_device_id(t.columns[c]), make_series(t.start, t.step, std::move(t.values[c])), 0});
  return out;
}

void write_devices_json(std::ostream& out, std::span<const DeviceStream> devices) {
  nlohmann::ordered_json j;
  j["format"] = "simobs-devices";
  j["version"] = 1;
  auto& arr = j["devices"] = nlohmann::ordered_json::array();
  for (const auto& d : devices) {
    arr.push_back({{"id", d.device_id.to_string()},
                   {"kind", d.device_id.is_mac() ? "mac" : "ip"},
                   {"frame_count", d.frame_count},
                   {"start_time", d.series.start_time()},
                   {"step", d.series.step()},
                   {"values", d.series.values()}});
  }
  out << j.dump(2) << "\n";
}

std::vector<DeviceStream> read_devices_json(std::istream& in) {
  std::vector<DeviceStream> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& d : j.at("devices")) {
      out.push_back({parse_device_id(d.at("id").get<std::string>()),
                     make_series(d.at("start_time").get<double>(), d.at("step").get<double>(),
                                 d.at("values").get<std::vector<std::uint64_t>>()),
                     d.value("frame_count", std::uint64_t{0})});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed device JSON: ") + e.what());
  }
  return out;
}

DeviceId parse_device_id(const std::string& text) {
  if (const auto mac = parse_mac(text)) return DeviceId::mac(*mac);
  std::uint8_t buf[16];
  if (inet_pton(AF_INET, text.c_str(), buf) == 1) return DeviceId::ip({buf, buf + 4});
  if (inet_pton(AF_INET6, text.c_str(), buf) == 1) return DeviceId::ip({buf, buf + 16});
  throw FormatError("'" + text + "' is not a MAC or IP address");
}

void write_similarity_csv(std::ostream& out, std::span<const SimilarityRow> rows) {
  out << "device_id,cc,dtw,kld,jsd,flags,error\n";
  for (const auto& r : rows) {
    out << escape_field(r.device_id) << ",";
    if (r.error.empty()) {
      out << cell(r.sv.cc) << "," << cell(r.sv.dtw) << "," << cell(r.sv.kld) << "," << cell(r.sv.jsd) << ","
          << flags_to_string(r.sv.flags) << ",";
    } else {
      out << ",,,,," << escape_field(r.error);
    }
    out << "\n";
  }
}

void write_similarity_json(std::ostream& out, std::span<const SimilarityRow> rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["device_id"] = r.device_id;
    if (r.error.empty()) {
      row["cc"] = r.sv.cc;
      row["dtw"] = r.sv.dtw;
      row["kld"] = r.sv.kld;
      row["jsd"] = r.sv.jsd;
      row["flags"] = flags_to_string(r.sv.flags);
    } else {
      row["error"] = r.error;
    }
    arr.push_back(row);
  }
  out << arr.dump(2) << "\n";
}

std::vector<SimilarityRow> read_similarity_csv(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line.rfind("device_id,cc,dtw,kld,jsd,flags", 0) != 0)
    throw FormatError("expected similarity CSV header");
  std::vector<SimilarityRow> out;
  while (next_line(in, line)) {
    const auto c = split(line, ',');
    if (c.size() < 6) throw FormatError("similarity row needs 6 fields");
    SimilarityRow r;
    r.device_id = c[0];
    if (c.size() >= 7 && !c[6].empty()) {
      r.error = c[6];
    } else {
      r.sv.cc = parse_double(c[1], "cc");
      r.sv.dtw = parse_double(c[2], "dtw");
      r.sv.kld = parse_double(c[3], "kld");
      r.sv.jsd = parse_double(c[4], "jsd");
      try {
        r.sv.flags = parse_flags(c[5]);
      } catch (const ParameterError& e) {
        throw FormatError(e.what());
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_samples_csv(std::ostream& out, std::span<const LabeledSample> samples) {
  out << "device_id,cc,dtw,kld,jsd,flags,label,tags\n";
  for (const auto& s : samples) {
    out << escape_field(s.device_id) << "," << cell(s.features.cc) << "," << cell(s.features.dtw) << ","
        << cell(s.features.kld) << "," << cell(s.features.jsd) << "," << flags_to_string(s.features.flags) << ","
        << (s.label ? 1 : 0) << ",";
    for (std::size_t i = 0; i < s.tags.size(); ++i) out << (i ? ";" : "") << s.tags[i];
    out << "\n";
  }
}

std::vector<LabeledSample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!next_line(in, line) || line != "device_id,cc,dtw,kld,jsd,flags,label,tags")
    throw FormatError("expected samples CSV header 'device_id,cc,dtw,kld,jsd,flags,label,tags'");
  std::vector<LabeledSample> out;
  while (next_line(in, line)) {
    const auto c = split(line, ',');
    if (c.size() != 8) throw FormatError("samples row needs 8 fields: '" + line + "'");
    LabeledSample s;
    s.device_id = c[0];
    s.features.cc = parse_double(c[1], "cc");
    s.features.dtw = parse_double(c[2], "dtw");
    s.features.kld = parse_double(c[3], "kld");
    s.features.jsd = parse_double(c[4], "jsd");
    try {
      s.features.flags = parse_flags(c[5]);
    } catch (const ParameterError& e) {
      throw FormatError(e.what());
    }
    if (c[6] != "0" && c[6] != "1") throw FormatError("label must be 0 or 1");
    s.label = c[6] == "1";
    for (auto& t : split(c[7], ';'))
      if (!t.empty()) s.tags.push_back(t);
    out.push_back(std::move(s));
  }
  return out;
}

void write_thresholds_json(std::ostream& out, std::span<const ThresholdEntry> entries) {
  nlohmann::ordered_json j;
  j["format"] = "simobs-thresholds";
  j["version"] = 1;
  auto& arr = j["thresholds"] = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json t;
    t["measure"] = to_string(e.config.measure);
    t["threshold"] = format_double(e.config.threshold);
    t["direction"] = e.config.direction == Direction::kSpyIfAtLeast ? "spy_if_at_least" : "spy_if_at_most";
    if (e.f1 >= 0.0) t["f1"] = e.f1;
    arr.push_back(t);
  }
  out << j.dump(2) << "\n";
}

std::vector<ThresholdEntry> read_thresholds_json(std::istream& in) {
  std::vector<ThresholdEntry> out;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "simobs-thresholds") throw FormatError("not a simobs-thresholds document");
    for (const auto& t : j.at("thresholds")) {
      ThresholdEntry e;
      Measure m;
      try {
        m = parse_measure(t.at("measure").get<std::string>());
      } catch (const ParameterError& err) {
        throw FormatError(err.what());
      }
      // Thresholds are strings so that +/-inf survive.
      const auto& th = t.at("threshold");
      const double value = th.is_string() ? parse_double(th.get<std::string>(), "threshold") : th.get<double>();
      e.config = ThresholdConfig::for_measure(m, value);
      if (t.contains("direction")) {
        const auto d = t.at("direction").get<std::string>();
        if (d == "spy_if_at_least") e.config.direction = Direction::kSpyIfAtLeast;
        else if (d == "spy_if_at_most") e.config.direction = Direction::kSpyIfAtMost;
        else throw FormatError("unknown direction '" + d + "'");
      }
      e.f1 = t.value("f1", -1.0);
      out.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed thresholds JSON: ") + e.what());
  }
  if (out.empty()) throw FormatError("thresholds document lists no thresholds");
  return out;
}

std::map<std::string, bool> read_manifest_labels(std::istream& in) {
  std::map<std::string, bool> out;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "simobs-manifest") throw FormatError("not a simobs-manifest document");
    for (const auto& d : j.at("devices")) out[d.at("id").get<std::string>()] = d.at("spy").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return out;
}

}  // namespace simobs
