#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "simobs/classify.hpp"
#include "simobs/error.hpp"
#include "simobs/evaluation.hpp"
#include "simobs/io.hpp"
#include "simobs/mlp.hpp"
#include "simobs/mp4.hpp"
#include "simobs/pcap.hpp"
#include "simobs/random.hpp"
#include "simobs/similarity.hpp"
#include "simobs/simulate.hpp"
#include "simobs/timeseries.hpp"

namespace simobs::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  double step = kDefaultStep;
  std::size_t window = kDefaultWindow;
  std::optional<std::uint64_t> seed;
  std::string format = "csv";
  std::string output;
  CLI::Option* step_opt = nullptr;
  CLI::Option* window_opt = nullptr;

  bool step_set() const { return step_opt->count() > 0; }
  bool window_set() const { return window_opt->count() > 0; }
  bool json() const { return format == "json"; }
  std::uint64_t require_seed(const std::string& what) const {
    if (!seed) throw UsageError(what + " is stochastic; pass --seed");
    return *seed;
  }
};

// Everything a command produces, committed only after it succeeded.
class Outputs {
 public:
  void add(fs::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }
  void add_stdout(std::string text) { stdout_ += text; }

  void commit(std::ostream& out) {
    std::vector<fs::path> staged;
    try {
      for (const auto& [path, content] : files_) {
        fs::path tmp = path;
        tmp += ".partial";
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        staged.push_back(tmp);
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        f.close();
        if (!f) throw IoError("cannot write '" + path.string() + "'");
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : staged) fs::remove(p, ec);
      throw;
    }
    for (std::size_t i = 0; i < files_.size(); ++i) fs::rename(staged[i], files_[i].first);
    out << stdout_;
  }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
  std::string stdout_;
};

std::string read_file(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError("cannot read '" + path + "': no such file");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool has_json_ext(const std::string& path) { return fs::path(path).extension() == ".json"; }

ByteSeries load_series(const std::string& path) {
  std::istringstream in(read_file(path));
  return has_json_ext(path) ? read_series_json(in) : read_series_csv(in);
}

std::vector<DeviceStream> load_devices(const std::string& path) {
  std::istringstream in(read_file(path));
  auto devices = has_json_ext(path) ? read_devices_json(in) : read_devices_csv(in);
  if (devices.empty()) throw FormatError("'" + path + "' lists no devices");
  return devices;
}

std::vector<LabeledSample> load_samples(const std::string& path) {
  std::istringstream in(read_file(path));
  auto samples = read_samples_csv(in);
  if (samples.empty()) throw FormatError("'" + path + "' holds no samples");
  return samples;
}

std::map<std::string, bool> load_labels(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_manifest_labels(in);
}

// Space-aligned rendering of a CSV document.
std::string tabulate(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string text;
    for (std::size_t i = 0; i < r.size(); ++i) {
      text += r[i];
      if (i + 1 < r.size()) text += std::string(width[i] - r[i].size() + 2, ' ');
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    out << text << "\n";
  }
  return out.str();
}

// Routes a report to --output or stdout in the requested format.
void emit(const Globals& g, Outputs& outs, const std::string& csv, const json& doc) {
  std::string text;
  if (g.format == "json") text = doc.dump(2) + "\n";
  else if (g.format == "table") text = tabulate(csv);
  else text = csv;
  if (g.output.empty()) outs.add_stdout(std::move(text));
  else outs.add(g.output, std::move(text));
}

std::string num(double v) { return format_double(v); }

json metrics_json(const Metrics& m) {
  return json{{"tp", m.tp},         {"fp", m.fp},     {"tn", m.tn}, {"fn", m.fn},
              {"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

// ---- similarity rows ------------------------------------------------------

struct AnalyzedDevice {
  SimilarityRow row;
  std::size_t steps = 0;  // aligned steps actually compared
};

std::vector<AnalyzedDevice> analyze_devices(const ByteSeries& reference, std::span<const DeviceStream> devices,
                                            std::size_t window) {
  std::vector<AnalyzedDevice> out;
  for (const auto& d : devices) {
    AnalyzedDevice a;
    a.row.device_id = d.device_id.to_string();
    try {
      const auto [r, c] = align(reference, d.series);
      const ByteSeries rp = r.prefix(window), cp = c.prefix(window);
      a.steps = rp.size();
      a.row.sv = similarity_vector(rp, cp);
    } catch (const AlignmentError& e) {
      a.row.error = e.what();
    } catch (const ParameterError& e) {
      a.row.error = e.what();
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<SimilarityRow> rows_of(const std::vector<AnalyzedDevice>& analyzed) {
  std::vector<SimilarityRow> rows;
  for (const auto& a : analyzed) rows.push_back(a.row);
  return rows;
}

// ---- classifier selection -------------------------------------------------

struct ClassifierArgs {
  std::string thresholds = "default";
  std::string model;
  std::string measure;

  void add_to(CLI::App* cmd) {
    auto* t = cmd->add_option("--thresholds", thresholds, "'default' or a thresholds JSON from `train`");
    auto* m = cmd->add_option("--model", model, "MLP model JSON from `train --method mlp`");
    t->excludes(m);
    cmd->add_option("--measure", measure, "measure whose threshold decides the verdict (cc, dtw, kld, jsd)");
  }
};

struct LoadedClassifier {
  std::vector<ThresholdEntry> thresholds;
  std::optional<MlpModel> model;
  ThresholdConfig decision;

  Classifier classifier() const { return model ? Classifier{*model} : Classifier{decision}; }
  json describe() const {
    if (model) return json{{"kind", "mlp"}, {"layers", model->layer_sizes}, {"activation", to_string(model->activation)}};
    return json{{"kind", "threshold"},
                {"measure", to_string(decision.measure)},
                {"threshold", decision.threshold},
                {"direction", decision.direction == Direction::kSpyIfAtLeast ? "spy_if_at_least" : "spy_if_at_most"}};
  }
};

LoadedClassifier load_classifier(const ClassifierArgs& args) {
  LoadedClassifier lc;
  if (!args.model.empty()) {
    if (!args.measure.empty()) throw UsageError("--measure applies to threshold classifiers only");
    lc.model = model_from_json(read_file(args.model));
    return lc;
  }
  if (args.thresholds == "default") {
    for (const auto& c : default_thresholds()) lc.thresholds.push_back({c, -1.0});
  } else {
    std::istringstream in(read_file(args.thresholds));
    lc.thresholds = read_thresholds_json(in);
  }
  std::optional<Measure> pick;
  if (!args.measure.empty()) {
    try {
      pick = parse_measure(args.measure);
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
  } else if (lc.thresholds.size() == 1) {
    pick = lc.thresholds.front().config.measure;
  } else {
    pick = Measure::kKld;
  }
  const auto it = std::find_if(lc.thresholds.begin(), lc.thresholds.end(),
                               [&](const ThresholdEntry& e) { return e.config.measure == *pick; });
  if (it == lc.thresholds.end())
    throw UsageError(std::string("no threshold for measure '") + to_string(*pick) + "' in --thresholds");
  lc.decision = it->config;
  return lc;
}

// ---- MLP options ----------------------------------------------------------

struct MlpArgs {
  std::vector<std::size_t> layers{13, 13, 13};
  std::string activation = "logistic";
  double alpha = 1e-4;
  std::size_t max_iter = 200;
  std::string mode = "camera_ref";
  std::vector<std::string> features;

  void add_to(CLI::App* cmd, bool with_shape = true) {
    if (with_shape) {
      cmd->add_option("--layers", layers, "hidden layer widths, e.g. 13,13,13")->delimiter(',');
      cmd->add_option("--activation", activation, "logistic, tanh or relu");
      cmd->add_option("--alpha", alpha, "L2 penalty")->check(CLI::NonNegativeNumber);
    }
    cmd->add_option("--max-iter", max_iter, "L-BFGS iteration cap")->check(CLI::PositiveNumber);
    cmd->add_option("--mode", mode, "camera_ref or phone_ref; picks the default features");
    cmd->add_option("--features", features, "override the feature measures, e.g. cc,kld,jsd")->delimiter(',');
  }

  MlpOptions options(std::uint64_t seed) const {
    MlpOptions o;
    try {
      o.hidden_layers = layers;
      o.activation = parse_activation(activation);
      o.alpha = alpha;
      o.max_iter = max_iter;
      o.seed = seed;
      if (features.empty()) {
        o.feature_subset = default_feature_subset(parse_detector_mode(mode));
      } else {
        o.feature_subset.clear();
        for (const auto& f : features) o.feature_subset.push_back(parse_measure(f));
      }
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    for (std::size_t w : o.hidden_layers)
      if (w == 0) throw UsageError("--layers widths must be positive");
    return o;
  }
};

std::vector<GridPoint> named_grid(const std::string& name) {
  if (name == "default") return default_grid();
  if (name == "compact") return compact_grid();
  throw UsageError("unknown --grid '" + name + "' (expected default or compact)");
}

SimScenario load_scenario(const std::string& scenario, const std::string& preset) {
  if (!preset.empty()) return preset_scenario(preset);
  std::error_code ec;
  if (!fs::exists(scenario, ec) && fs::path(scenario).extension().empty()) {
    try {
      return preset_scenario(scenario);
    } catch (const ConfigError&) {
      throw IoError("cannot read '" + scenario + "': not a file or known preset");
    }
  }
  std::istringstream in(read_file(scenario));
  return parse_scenario(in);
}

// ---- commands -------------------------------------------------------------

struct ExtractArgs {
  std::string pcap, video;
  std::string group = "mac";
  std::string basis = "no-radiotap";
  bool all_frames = false;
  bool all_tracks = false;
  bool stats = false;
  std::optional<double> start;
};

void cmd_extract(const ExtractArgs& a, const Globals& g, Outputs& outs, std::ostream& err) {
  std::ostringstream csv, js;
  if (!a.video.empty()) {
    const std::string data = read_file(a.video);
    const auto tables = parse_mp4(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
    VideoSeriesOptions vo;
    vo.all_tracks = a.all_tracks;
    ByteSeries s = video_byte_series(tables, g.step, vo);
    std::vector<std::uint64_t> values = s.values();
    if (g.window_set()) values.resize(g.window, 0);
    s = ByteSeries(a.start.value_or(0.0), g.step, std::move(values));
    write_series_csv(csv, s);
    write_series_json(js, s);
  } else {
    const std::string data = read_file(a.pcap);
    const auto records = read_pcap(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
    if (records.empty()) throw FormatError("'" + a.pcap + "' holds no packets");
    double lo = records.front().timestamp, hi = lo;
    for (const auto& r : records) {
      lo = std::min(lo, r.timestamp);
      hi = std::max(hi, r.timestamp);
    }
    const double start = a.start.value_or(std::floor(lo / g.step) * g.step);
    std::size_t n = g.window;
    if (!g.window_set()) n = hi < start ? 1 : static_cast<std::size_t>(std::floor((hi - start) / g.step)) + 1;
    AttributionOptions ao;
    if (a.group == "mac") ao.group_by = GroupBy::kMac;
    else if (a.group == "ip") ao.group_by = GroupBy::kIp;
    else throw UsageError("--group must be mac or ip");
    ao.all_frames = a.all_frames;
    ByteBasis basis;
    if (a.basis == "no-radiotap") basis = ByteBasis::kExcludeRadiotap;
    else if (a.basis == "on-wire") basis = ByteBasis::kOnWire;
    else throw UsageError("--byte-basis must be no-radiotap or on-wire");
    ExtractionStats st;
    const auto devices = extract_device_series(records, start, g.step, n, basis, ao, &st);
    if (devices.empty()) throw FormatError("no attributable frames in the capture window");
    if (a.stats)
      err << "frames: " << st.attributed_frames << " attributed, " << st.unattributed_frames << " unattributed, "
          << st.malformed_frames << " malformed, " << st.out_of_window_frames << " outside window\n";
    write_devices_csv(csv, devices);
    write_devices_json(js, devices);
  }
  const std::string text = g.json() ? js.str() : g.format == "table" ? tabulate(csv.str()) : csv.str();
  if (g.output.empty()) outs.add_stdout(text);
  else outs.add(g.output, text);
}

struct AnalyzeArgs {
  std::string reference, devices;
};

int cmd_analyze(const AnalyzeArgs& a, const Globals& g, Outputs& outs, std::ostream& err) {
  const ByteSeries ref = load_series(a.reference);
  const auto devices = load_devices(a.devices);
  const auto rows = rows_of(analyze_devices(ref, devices, g.window));
  std::ostringstream csv, js;
  write_similarity_csv(csv, rows);
  write_similarity_json(js, rows);
  const std::string text = g.json() ? js.str() : g.format == "table" ? tabulate(csv.str()) : csv.str();
  if (g.output.empty()) outs.add_stdout(text);
  else outs.add(g.output, text);
  std::size_t failed = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) {
      ++failed;
      err << "warning: " << r.device_id << ": " << r.error << "\n";
    }
  return failed == rows.size() ? kExitAnalysis : kExitOk;
}

struct ClassifyArgs {
  std::string similarity, reference, devices, manifest, metrics_out;
  ClassifierArgs classifier;
};

std::string metrics_header() { return "steps,trials,tp,fp,tn,fn,accuracy,precision,recall,f1\n"; }

std::string metrics_line(std::size_t steps, std::size_t trials, const Metrics& m) {
  return std::to_string(steps) + "," + std::to_string(trials) + "," + std::to_string(m.tp) + "," +
         std::to_string(m.fp) + "," + std::to_string(m.tn) + "," + std::to_string(m.fn) + "," + num(m.accuracy) +
         "," + num(m.precision) + "," + num(m.recall) + "," + num(m.f1) + "\n";
}

json metrics_row_json(std::size_t steps, std::size_t trials, const Metrics& m) {
  json j{{"steps", steps}, {"trials", trials}};
  j.update(metrics_json(m));
  return j;
}

void cmd_classify(const ClassifyArgs& a, const Globals& g, Outputs& outs) {
  std::vector<AnalyzedDevice> analyzed;
  if (!a.similarity.empty()) {
    if (!a.reference.empty() || !a.devices.empty())
      throw UsageError("use either --similarity or --reference with --devices");
    std::istringstream in(read_file(a.similarity));
    for (auto& r : read_similarity_csv(in)) analyzed.push_back({std::move(r), 0});
  } else {
    if (a.reference.empty() || a.devices.empty())
      throw UsageError("classify needs --similarity, or --reference and --devices");
    analyzed = analyze_devices(load_series(a.reference), load_devices(a.devices), g.window);
  }
  if (!a.metrics_out.empty() && a.manifest.empty()) throw UsageError("--metrics-out needs --manifest");
  const LoadedClassifier lc = load_classifier(a.classifier);
  const Classifier decide = lc.classifier();
  std::optional<std::map<std::string, bool>> labels;
  if (!a.manifest.empty()) labels = load_labels(a.manifest);

  std::ostringstream csv;
  csv << "device_id";
  if (lc.model) csv << ",probability";
  else
    for (const auto& t : lc.thresholds) csv << "," << to_string(t.config.measure) << "_spy";
  csv << ",spy";
  if (labels) csv << ",label";
  csv << ",error\n";

  json doc;
  doc["classifier"] = lc.describe();
  auto& arr = doc["devices"] = json::array();
  std::vector<bool> pred, truth;
  std::size_t steps = 0;
  for (const auto& a_dev : analyzed) {
    const auto& r = a_dev.row;
    steps = std::max(steps, a_dev.steps);
    json row{{"device_id", r.device_id}};
    csv << r.device_id;
    const bool ok = r.error.empty();
    if (lc.model) {
      const double p = ok ? mlp_predict(*lc.model, r.sv) : 0.0;
      csv << "," << (ok ? num(p) : "");
      if (ok) row["probability"] = p;
    } else {
      for (const auto& t : lc.thresholds) {
        const bool v = ok && threshold_classify(r.sv, t.config).spy;
        csv << "," << (ok ? (v ? "1" : "0") : "");
        if (ok) row[std::string(to_string(t.config.measure)) + "_spy"] = v;
      }
    }
    const bool spy = ok && classify(decide, r.sv);
    csv << "," << (spy ? 1 : 0);
    row["spy"] = spy;
    if (labels) {
      const auto it = labels->find(r.device_id);
      if (it == labels->end()) throw FormatError("device " + r.device_id + " is missing from the manifest");
      csv << "," << (it->second ? 1 : 0);
      row["label"] = it->second;
      pred.push_back(spy);
      truth.push_back(it->second);
    }
    csv << "," << r.error << "\n";
    if (!ok) row["error"] = r.error;
    arr.push_back(row);
  }
  if (labels) {
    const Metrics m = evaluate(pred, truth);
    doc["metrics"] = metrics_row_json(steps, 1, m);
    if (!a.metrics_out.empty()) {
      const std::string text = g.json() ? metrics_row_json(steps, 1, m).dump(2) + "\n"
                                        : metrics_header() + metrics_line(steps, 1, m);
      outs.add(a.metrics_out, text);
    }
  }
  emit(g, outs, csv.str(), doc);
}

struct TrainArgs {
  std::string samples;
  std::string method = "threshold";
  std::vector<std::string> measures;
  MlpArgs mlp;
};

void cmd_train(const TrainArgs& a, const Globals& g, Outputs& outs) {
  const auto samples = load_samples(a.samples);
  std::string text;
  if (a.method == "threshold") {
    std::vector<Measure> ms(std::begin(kAllMeasures), std::end(kAllMeasures));
    if (!a.measures.empty()) {
      ms.clear();
      try {
        for (const auto& m : a.measures) ms.push_back(parse_measure(m));
      } catch (const ParameterError& e) {
        throw UsageError(e.what());
      }
    }
    std::vector<ThresholdEntry> entries;
    for (Measure m : ms) {
      const SweepResult r = sweep_threshold(samples, m);
      entries.push_back({r.config, r.f1});
    }
    std::ostringstream js;
    write_thresholds_json(js, entries);
    text = js.str();
  } else if (a.method == "mlp") {
    const MlpModel model = mlp_train(samples, a.mlp.options(g.require_seed("train --method mlp")));
    text = model_to_json(model);
  } else {
    throw UsageError("--method must be threshold or mlp");
  }
  if (g.output.empty()) outs.add_stdout(text);
  else outs.add(g.output, text);
}

struct GridArgs {
  std::string samples;
  std::string grid = "default";
  std::size_t folds = 10;
  std::size_t threads = 0;
  std::string model_out;
  MlpArgs mlp;
};

void cmd_grid_search(const GridArgs& a, const Globals& g, Outputs& outs) {
  const std::uint64_t seed = g.require_seed("grid-search");
  const auto samples = load_samples(a.samples);
  const auto grid = named_grid(a.grid);
  const MlpOptions base = a.mlp.options(seed);
  const GridSearchResult r = grid_search(samples, grid, base, a.folds, seed, a.threads);
  const std::size_t inputs = 2 * base.feature_subset.size();

  std::ostringstream csv;
  csv << "point,hidden_layers,activation,alpha,weights,cv_f1,best\n";
  json doc;
  doc["best"] = {{"point", r.best.label()},
                 {"hidden_layers", r.best.hidden_layers},
                 {"activation", to_string(r.best.activation)},
                 {"alpha", r.best.alpha},
                 {"cv_f1", r.cv_f1}};
  doc["folds"] = a.folds;
  auto& arr = doc["results"] = json::array();
  for (const auto& c : r.results) {
    std::string hidden;
    for (std::size_t i = 0; i < c.point.hidden_layers.size(); ++i)
      hidden += (i ? "x" : "") + std::to_string(c.point.hidden_layers[i]);
    const bool best = c.point == r.best;
    csv << c.point.label() << "," << hidden << "," << to_string(c.point.activation) << "," << num(c.point.alpha) << ","
        << c.point.total_weights(inputs) << "," << num(c.mean_f1) << "," << (best ? 1 : 0) << "\n";
    arr.push_back({{"point", c.point.label()},
                   {"hidden_layers", c.point.hidden_layers},
                   {"activation", to_string(c.point.activation)},
                   {"alpha", c.point.alpha},
                   {"weights", c.point.total_weights(inputs)},
                   {"cv_f1", c.mean_f1}});
  }
  if (!a.model_out.empty()) outs.add(a.model_out, model_to_json(mlp_train(samples, with_point(base, r.best))));
  emit(g, outs, csv.str(), doc);
}

struct SimulateArgs {
  std::string scenario, preset, out_dir, pcap;
  std::size_t renders = 0;
};

void cmd_simulate(const SimulateArgs& a, const Globals& g, Outputs& outs) {
  if (a.scenario.empty() == a.preset.empty()) throw UsageError("simulate needs exactly one of --scenario or --preset");
  const std::uint64_t seed = g.require_seed("simulate");
  SimScenario s = load_scenario(a.scenario, a.preset);
  s.seed = seed;
  if (g.window_set()) s.duration = g.window;
  if (g.step_set()) s.step = g.step;
  s.validate();

  if (a.renders > 0) {
    if (!a.out_dir.empty() || !a.pcap.empty()) throw UsageError("--renders writes a samples CSV; drop --out-dir/--pcap");
    std::ostringstream csv;
    write_samples_csv(csv, simulate_corpus(s, a.renders, seed));
    if (g.output.empty()) outs.add_stdout(csv.str());
    else outs.add(g.output, csv.str());
    return;
  }
  if (a.out_dir.empty()) throw UsageError("simulate needs --out-dir (or --renders for a samples corpus)");
  std::optional<PcapLink> link;
  if (a.pcap == "ethernet") link = PcapLink::kEthernet;
  else if (a.pcap == "radiotap") link = PcapLink::kRadiotap;
  else if (!a.pcap.empty()) throw UsageError("--pcap must be ethernet or radiotap");

  const SimDataset ds = render_scenario(s);
  const std::vector<DeviceStream> streams = ds.streams();
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + a.out_dir + "': " + ec.message());
  std::ostringstream ref, dev;
  if (g.json()) {
    write_series_json(ref, ds.reference_series);
    write_devices_json(dev, streams);
    outs.add(dir / "reference.json", ref.str());
    outs.add(dir / "devices.json", dev.str());
  } else {
    write_series_csv(ref, ds.reference_series);
    write_devices_csv(dev, streams);
    outs.add(dir / "reference.csv", ref.str());
    outs.add(dir / "devices.csv", dev.str());
  }
  outs.add(dir / "manifest.json", manifest_json(ds));
  outs.add(dir / "scenario.cfg", scenario_to_config(s));
  if (link) {
    const auto bytes = write_pcap(ds, *link);
    outs.add(dir / "capture.pcap", std::string(bytes.begin(), bytes.end()));
  }
}

struct ConvergeArgs {
  std::string reference, devices, manifest, scenario, preset;
  std::size_t trials = 0;
  ClassifierArgs classifier;
};

void cmd_converge(const ConvergeArgs& a, const Globals& g, Outputs& outs) {
  const Classifier classifier = load_classifier(a.classifier).classifier();
  struct Row {
    Metrics sum;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  };
  std::vector<Row> table;
  std::size_t trials = 0;
  auto accumulate = [&](const std::vector<PrefixMetrics>& prefix) {
    std::size_t rows = 0;
    for (const auto& p : prefix)
      if (p.steps <= g.window) ++rows;
    if (trials == 0) table.resize(rows);
    else table.resize(std::min(table.size(), rows));
    for (std::size_t i = 0; i < table.size(); ++i) {
      const Metrics& m = prefix[i].metrics;
      table[i].sum.tp += m.tp;
      table[i].sum.fp += m.fp;
      table[i].sum.tn += m.tn;
      table[i].sum.fn += m.fn;
      table[i].accuracy += m.accuracy;
      table[i].precision += m.precision;
      table[i].recall += m.recall;
      table[i].f1 += m.f1;
    }
    ++trials;
  };

  const bool files = !a.reference.empty() || !a.devices.empty() || !a.manifest.empty();
  const bool sim = !a.scenario.empty() || !a.preset.empty();
  if (files == sim) throw UsageError("converge needs --reference/--devices/--manifest or --scenario/--preset");
  if (files) {
    if (a.reference.empty() || a.devices.empty() || a.manifest.empty())
      throw UsageError("converge on files needs --reference, --devices and --manifest");
    const ByteSeries ref = load_series(a.reference);
    const auto devices = load_devices(a.devices);
    const auto labels = load_labels(a.manifest);
    std::vector<bool> truth;
    for (const auto& d : devices) {
      const auto it = labels.find(d.device_id.to_string());
      if (it == labels.end()) throw FormatError("device " + d.device_id.to_string() + " is missing from the manifest");
      truth.push_back(it->second);
    }
    accumulate(convergence_analysis(ref, devices, truth, classifier));
  } else {
    if (!a.scenario.empty() && !a.preset.empty()) throw UsageError("use one of --scenario or --preset");
    if (a.trials == 0) throw UsageError("converge on a scenario needs --trials N");
    const std::uint64_t seed = g.require_seed("converge --trials");
    SimScenario s = load_scenario(a.scenario, a.preset);
    if (g.step_set()) s.step = g.step;
    for (std::size_t t = 0; t < a.trials; ++t) {
      s.seed = sub_seed(seed, t);
      const SimDataset ds = render_scenario(s);
      accumulate(convergence_analysis(ds.reference_series, ds.streams(), ds.labels(), classifier));
    }
  }

  std::ostringstream csv;
  csv << metrics_header();
  json doc;
  doc["trials"] = trials;
  auto& arr = doc["rows"] = json::array();
  const double n = static_cast<double>(trials);
  for (std::size_t i = 0; i < table.size(); ++i) {
    Metrics m = table[i].sum;
    m.accuracy = table[i].accuracy / n;
    m.precision = table[i].precision / n;
    m.recall = table[i].recall / n;
    m.f1 = table[i].f1 / n;
    csv << metrics_line(i + 2, trials, m);
    arr.push_back(metrics_row_json(i + 2, trials, m));
  }
  emit(g, outs, csv.str(), doc);
}

struct PortabilityArgs {
  std::string samples;
  std::string tag = "regime";
  std::string method = "mlp";
  std::string measure = "kld";
  std::string grid = "compact";
  std::size_t folds = 10;
  MlpArgs mlp;
};

void cmd_portability(const PortabilityArgs& a, const Globals& g, Outputs& outs, std::ostream& err) {
  const std::uint64_t seed = g.require_seed("portability");
  const auto samples = load_samples(a.samples);
  Trainer trainer;
  if (a.method == "threshold") {
    try {
      trainer = SweepTrainer{parse_measure(a.measure)};
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
  } else if (a.method == "mlp") {
    trainer = MlpTrainer{a.mlp.options(seed)};
  } else if (a.method == "grid") {
    trainer = GridTrainer{named_grid(a.grid), a.mlp.options(seed), a.folds};
  } else {
    throw UsageError("--method must be threshold, mlp or grid");
  }
  const PortabilityMatrix pm = portability_matrix(samples, a.tag, trainer, seed);
  std::ostringstream csv;
  csv << "train";
  for (const auto& n : pm.names) csv << "," << n;
  csv << "\n";
  json doc;
  doc["partition_tag"] = a.tag;
  doc["names"] = pm.names;
  auto& f1 = doc["f1"] = json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    csv << pm.names[i];
    json row = json::array();
    for (std::size_t j = 0; j < 3; ++j) {
      csv << "," << num(pm.f1[i][j]);
      row.push_back(pm.f1[i][j]);
    }
    csv << "\n";
    f1.push_back(row);
  }
  doc["mean_diagonal"] = pm.mean_diagonal();
  doc["mean_off_diagonal"] = pm.mean_off_diagonal();
  if (!g.json())
    err << "mean diagonal F1 " << num(pm.mean_diagonal()) << ", mean off-diagonal F1 " << num(pm.mean_off_diagonal())
        << "\n";
  emit(g, outs, csv.str(), doc);
}

struct AgreementArgs {
  std::string samples;
  std::string thresholds = "default";
};

void cmd_agreement(const AgreementArgs& a, const Globals& g, Outputs& outs) {
  const auto samples = load_samples(a.samples);
  ClassifierArgs ca;
  ca.thresholds = a.thresholds;
  const LoadedClassifier lc = load_classifier(ca);
  std::vector<ThresholdConfig> configs;
  for (const auto& t : lc.thresholds) configs.push_back(t.config);
  const AgreementReport r = measure_agreement(samples, configs);
  std::ostringstream csv;
  csv << "measures_fooled,samples,fraction\n";
  json doc{{"measures", r.measures},
           {"negatives", r.negatives},
           {"false_positive_samples", r.false_positive_samples},
           {"fraction_all_wrong", r.fraction_all_wrong()}};
  auto& dist = doc["distribution"] = json::array();
  for (std::size_t k = 1; k <= r.measures; ++k) {
    const auto it = r.distribution.find(k);
    const std::size_t count = it == r.distribution.end() ? 0 : it->second;
    csv << k << "," << count << "," << num(r.fraction(k)) << "\n";
    dist.push_back({{"measures_fooled", k}, {"samples", count}, {"fraction", r.fraction(k)}});
  }
  emit(g, outs, csv.str(), doc);
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kIo:
    case ErrorKind::kConfig:
      return kExitUsage;
    default:
      return kExitAnalysis;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"simobs: spot cameras that film you from their encrypted bitrate"};
  app.name("simobs");
  app.set_version_flag("--version", "simobs 0.1.0");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  g.step_opt = app.add_option("--step", g.step, "bin width in seconds")->check(CLI::PositiveNumber);
  g.window_opt = app.add_option("--window", g.window, "analysis window in steps")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 24));
  app.add_option("--seed", g.seed, "seed for every stochastic step");
  app.add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json", "table"}));
  app.add_option("-o,--output", g.output, "write the report to this file instead of stdout");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "per-step byte series from a pcap or an MP4");
  auto* pcap_opt = extract->add_option("--pcap", ex.pcap, "classic pcap capture");
  auto* video_opt = extract->add_option("--video", ex.video, "MP4/MOV recording");
  pcap_opt->excludes(video_opt);
  extract->add_option("--group", ex.group, "mac (monitor mode) or ip (promiscuous mode)");
  extract->add_option("--byte-basis", ex.basis, "no-radiotap or on-wire");
  extract->add_flag("--all-frames", ex.all_frames, "count management/control frames too");
  extract->add_flag("--all-tracks", ex.all_tracks, "bin every track of the MP4");
  extract->add_option("--start", ex.start, "window start (epoch seconds)");
  extract->add_flag("--stats", ex.stats, "report frame attribution counts on stderr");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "similarity of every device to the reference");
  analyze->add_option("--reference", an.reference, "reference series (CSV or JSON)")->required();
  analyze->add_option("--devices", an.devices, "device table (CSV or JSON)")->required();

  ClassifyArgs cl;
  auto* classify_cmd = app.add_subcommand("classify", "spy verdict per device");
  classify_cmd->add_option("--similarity", cl.similarity, "similarity report from `analyze`");
  classify_cmd->add_option("--reference", cl.reference, "reference series");
  classify_cmd->add_option("--devices", cl.devices, "device table");
  classify_cmd->add_option("--manifest", cl.manifest, "ground-truth manifest; adds labels and metrics");
  classify_cmd->add_option("--metrics-out", cl.metrics_out, "write the metrics row to this file");
  cl.classifier.add_to(classify_cmd);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "fit thresholds or an MLP on a samples CSV");
  train->add_option("--samples", tr.samples, "samples CSV")->required();
  train->add_option("--method", tr.method, "threshold or mlp");
  train->add_option("--measures", tr.measures, "measures to sweep (threshold method)")->delimiter(',');
  tr.mlp.add_to(train);

  GridArgs gr;
  auto* grid = app.add_subcommand("grid-search", "cross-validated MLP hyper-parameter search");
  grid->add_option("--samples", gr.samples, "samples CSV")->required();
  grid->add_option("--grid", gr.grid, "default (768 points) or compact (48 points)");
  grid->add_option("--folds", gr.folds, "cross-validation folds")->check(CLI::Range(2, 1000));
  grid->add_option("--threads", gr.threads, "worker threads, 0 = all cores");
  grid->add_option("--model-out", gr.model_out, "train the best point on all samples and save it");
  gr.mlp.add_to(grid, false);

  SimulateArgs si;
  auto* simulate = app.add_subcommand("simulate", "render a synthetic scenario");
  simulate->add_option("--scenario", si.scenario, "scenario config file or preset name");
  simulate->add_option("--preset", si.preset, "easy, indoor, outdoor, crowd or burst");
  simulate->add_option("--out-dir", si.out_dir, "directory for reference, devices, manifest and pcap");
  simulate->add_option("--pcap", si.pcap, "also write capture.pcap: ethernet or radiotap");
  simulate->add_option("--renders", si.renders, "render N seeds and write their samples CSV");

  ConvergeArgs co;
  auto* converge = app.add_subcommand("converge", "metrics as a function of observed steps");
  converge->add_option("--reference", co.reference, "reference series");
  converge->add_option("--devices", co.devices, "device table");
  converge->add_option("--manifest", co.manifest, "ground-truth manifest");
  converge->add_option("--scenario", co.scenario, "simulate trials of this scenario instead");
  converge->add_option("--preset", co.preset, "simulate trials of this preset instead");
  converge->add_option("--trials", co.trials, "number of simulated trials");
  co.classifier.add_to(converge);

  PortabilityArgs po;
  auto* portability = app.add_subcommand("portability", "train/test F1 across two tagged regimes");
  portability->add_option("--samples", po.samples, "samples CSV with tags")->required();
  portability->add_option("--partition-tag", po.tag, "tag whose two values form the partitions");
  portability->add_option("--method", po.method, "threshold, mlp or grid");
  portability->add_option("--measure", po.measure, "measure for the threshold method");
  portability->add_option("--grid", po.grid, "grid for the grid method");
  portability->add_option("--folds", po.folds, "folds for the grid method")->check(CLI::Range(2, 1000));
  po.mlp.add_to(portability);

  AgreementArgs ag;
  auto* agreement = app.add_subcommand("agreement", "how many measures each false positive fools");
  agreement->add_option("--samples", ag.samples, "samples CSV")->required();
  agreement->add_option("--thresholds", ag.thresholds, "'default' or a thresholds JSON");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const char* name = "simobs";
  for (auto* sub : app.get_subcommands()) name = sub->get_name().c_str();
  try {
    Outputs outs;
    int code = kExitOk;
    if (extract->parsed()) {
      if (ex.pcap.empty() == ex.video.empty()) throw UsageError("extract needs --pcap or --video");
      cmd_extract(ex, g, outs, err);
    } else if (analyze->parsed()) {
      code = cmd_analyze(an, g, outs, err);
    } else if (classify_cmd->parsed()) {
      cmd_classify(cl, g, outs);
    } else if (train->parsed()) {
      cmd_train(tr, g, outs);
    } else if (grid->parsed()) {
      cmd_grid_search(gr, g, outs);
    } else if (simulate->parsed()) {
      cmd_simulate(si, g, outs);
    } else if (converge->parsed()) {
      cmd_converge(co, g, outs);
    } else if (portability->parsed()) {
      cmd_portability(po, g, outs, err);
    } else if (agreement->parsed()) {
      cmd_agreement(ag, g, outs);
    }
    outs.commit(out);
    return code;
  } catch (const UsageError& e) {
    err << "simobs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "simobs " << name << ": " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "simobs " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "simobs " << name << ": " << e.what() << "\n";
    return kExitAnalysis;
  }
}

}  // namespace simobs::cli
