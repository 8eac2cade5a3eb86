#include "cdet/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "cdet/backbone/registry.hpp"
#include "cdet/backbone/weights.hpp"
#include "cdet/bench/benchmark.hpp"
#include "cdet/config.hpp"
#include "cdet/data/ingest.hpp"
#include "cdet/device.hpp"
#include "cdet/error.hpp"
#include "cdet/eval/overlay.hpp"
#include "cdet/eval/tables.hpp"
#include "cdet/io/image_io.hpp"
#include "cdet/trainer.hpp"

namespace cdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? v : fallback;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::not_found, "cannot read " + path.string());
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    fail(Errc::invalid_config, path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

// Options shared by every command that takes an experiment config.
struct ConfigArgs {
  std::string config_path;
  std::string preset_name;
  std::string dataset;
  std::string data_root;
  std::vector<uint64_t> seeds;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file (JSON)");
    cmd->add_option("--preset", preset_name, "named preset (see `cdet presets`)");
    cmd->add_option("--dataset", dataset, "dataset name override (SYSU, LEVIR, EGYBCD, GVLM, CLCD, OSCD, SYNTHETIC)");
    cmd->add_option("--data-root", data_root, "canonical dataset root override");
    cmd->add_option("--seeds", seeds, "seed list override");
    cmd->add_option("--set", overrides, "field override, e.g. --set scheduler.kind=cosine");
  }

  ExperimentConfig resolve() const {
    if (!config_path.empty() && !preset_name.empty()) fail(Errc::invalid_config, "give either --config or --preset");
    ExperimentConfig c = !config_path.empty() ? load_config_file(config_path) : preset(preset_name.empty() ? "baseline" : preset_name);
    std::vector<std::string> all;
    if (!dataset.empty()) {
      std::string upper = dataset;
      for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      all.push_back("dataset.name=\"" + upper + "\"");
    }
    if (!data_root.empty()) all.push_back("dataset.root=" + json(data_root).dump());
    if (!seeds.empty()) all.push_back("seeds=" + json(seeds).dump());
    all.insert(all.end(), overrides.begin(), overrides.end());
    c = with_overrides(c, all);
    c.validate();
    return c;
  }
};

TrainOptions train_options(const std::string& out) {
  TrainOptions t;
  t.out_root = out.empty() ? env_or("CDET_OUT", "runs") : out;
  t.log = [](const std::string& line) { std::cerr << line << "\n"; };
  return t;
}

int cmd_ingest(const std::string& source, const std::string& dataset, const std::string& out, const IngestOptions& opt) {
  const auto name = parse_dataset_name(dataset);
  const auto report = ingest_dataset(source, name, out, opt);
  for (const auto& [split, n] : report.counts) std::cout << split << ": " << n << "\n";
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_backbones_list(bool as_json) {
  json rows = json::array();
  for (const auto& e : Registry::builtin().entries()) {
    json row{{"key", e.spec.key()}, {"feature_level_ids", e.spec.feature_level_ids}, {"desk_only", e.desk_only}};
    if (e.weights) {
      row["identifier"] = e.weights->identifier;
      row["uri"] = e.weights->uri;
      row["sha256"] = e.weights->sha256 ? json(*e.weights->sha256) : json(nullptr);
      row["license_note"] = e.weights->license_note;
    }
    rows.push_back(row);
    if (!as_json)
      std::cout << e.spec.key() << (e.weights ? "  " + e.weights->identifier : "  (random init)")
                << (e.desk_only ? "  [desk-scale tests]" : "") << "\n";
  }
  if (as_json) std::cout << rows.dump(2) << "\n";
  return 0;
}

BackboneSpec parse_spec_key(const std::string& key) {
  const auto a = key.find('/');
  const auto b = key.find('/', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos)
    fail(Errc::invalid_spec, "backbone spec must look like family/size/pretrain, got '" + key + "'");
  return {parse_family(key.substr(0, a)), key.substr(a + 1, b - a - 1), parse_pretrain(key.substr(b + 1)), {}};
}

int cmd_backbones_fetch(const std::vector<std::string>& keys, const std::string& from, const std::string& cache) {
  const fs::path root = cache.empty() ? weights::default_cache_root() : fs::path(cache);
  std::vector<const RegistryEntry*> entries;
  for (const auto& k : keys) {
    if (k == "all") {
      for (const auto& e : Registry::builtin().entries())
        if (e.weights) entries.push_back(&e);
    } else {
      entries.push_back(&Registry::builtin().find(parse_spec_key(k)));
    }
  }
  if (!from.empty() && entries.size() != 1) fail(Errc::invalid_argument, "--from imports exactly one backbone");
  for (const auto* e : entries) {
    if (!e->weights) {
      std::cout << e->spec.key() << ": random init, nothing to fetch\n";
      continue;
    }
    const auto path = from.empty() ? weights::fetch(*e->weights, root) : weights::import_file(*e->weights, from, root);
    // Verify the file actually loads into the encoder before reporting success.
    auto encoder = build_architecture(*e);
    const auto rep = weights::load_encoder(*encoder, path, e->weights->key_prefix);
    std::cout << e->spec.key() << ": " << path.string() << " (" << rep.loaded << " tensors loaded)\n";
  }
  return 0;
}

int cmd_train(const ConfigArgs& args, const std::string& out, bool print_only) {
  const auto config = args.resolve();
  if (print_only) {
    std::cout << to_json(config).dump(2) << "\n";
    return 0;
  }
  const auto result = run_experiment(config, train_options(out));
  for (const auto& s : result.statuses) {
    std::cout << "seed " << s.seed << ": ";
    if (!s.ok) {
      std::cout << "failed (" << s.error << ")\n";
      continue;
    }
    for (const auto& r : result.runs)
      if (r.seed == s.seed) std::cout << "f1 " << r.test_metrics.f1 << "\n";
  }
  if (!result.runs.empty())
    std::cout << "mean f1 " << result.report.f1 << " std " << *result.report.std
              << (result.report.single_sample_flag ? " (single seed)" : "") << "\n";
  std::cout << "run directory " << result.dir.string() << "\n";
  require_complete(result);
  return 0;
}

// Matrix file: {"base": {...config or {"preset": name}...}, "axis": "loss.kind",
// "values": [...], "datasets": ["LEVIR", ...], "data_roots": {"LEVIR": path},
// "with_std": true}
int cmd_ablate(const std::string& matrix_path, const std::string& out, const std::string& table_path) {
  const auto m = read_json(matrix_path);
  static const std::set<std::string> known{"base", "axis", "values", "datasets", "data_roots", "with_std"};
  for (const auto& item : m.items())
    if (!known.count(item.key())) fail(Errc::invalid_matrix, "unknown matrix key '" + item.key() + "'");
  if (!m.contains("axis") || !m["axis"].is_string() || m["axis"].get<std::string>().empty())
    fail(Errc::invalid_matrix, "matrix needs a non-empty 'axis'");
  if (!m.contains("values") || !m["values"].is_array() || m["values"].empty())
    fail(Errc::invalid_matrix, "matrix axis '" + m["axis"].get<std::string>() + "' has no values");

  ExperimentConfig base = preset("baseline");
  if (m.contains("base")) {
    auto b = m["base"];
    if (b.is_string()) {
      base = preset(b.get<std::string>());
    } else {
      ExperimentConfig p = preset("baseline");
      if (b.contains("preset")) {
        p = preset(b["preset"].get<std::string>());
        b.erase("preset");
      }
      base = from_json(b, p);
    }
  }
  std::vector<std::string> datasets;
  if (m.contains("datasets")) datasets = m["datasets"].get<std::vector<std::string>>();
  if (datasets.empty()) datasets.push_back(std::string(to_string(base.dataset.name)));

  const auto axis = m["axis"].get<std::string>();
  ResultTable table;
  table.columns = datasets;
  const auto options = train_options(out);
  for (const auto& value : m["values"]) {
    const auto label = value.is_string() ? value.get<std::string>() : value.dump();
    auto& row = table.add_row(label);
    for (const auto& ds : datasets) {
      try {
        std::vector<std::string> sets{axis + "=" + value.dump(), "dataset.name=" + json(ds).dump()};
        if (m.contains("data_roots") && m["data_roots"].contains(ds))
          sets.push_back("dataset.root=" + m["data_roots"][ds].dump());
        auto cfg = with_overrides(base, sets);
        cfg.name = base.name + "[" + axis + "=" + label + "]";
        cfg.validate();
        const auto result = run_experiment(cfg, options);
        if (result.partial || result.runs.empty()) {
          row.cells[ds] = std::nullopt;
          std::cerr << "variant " << label << " on " << ds << ": partial result\n";
        } else {
          row.cells[ds] = TableCell{result.report.f1, *result.report.std};
        }
      } catch (const Error& e) {
        std::cerr << "variant " << label << " on " << ds << " failed: " << e.what() << "\n";
        row.cells[ds] = std::nullopt;
      }
    }
  }
  const auto csv = to_csv(table, m.value("with_std", false));
  std::cout << csv;
  if (!table_path.empty()) write_file(table_path, csv);
  return 0;
}

fs::path checkpoint_in(const fs::path& run) {
  const auto p = fs::is_directory(run) ? run / "checkpoint.safetensors" : run;
  if (!fs::exists(p)) fail(Errc::not_found, "no checkpoint at " + p.string());
  return p;
}

DatasetSpec dataset_for(const ExperimentConfig& config, const std::string& data_root) {
  auto spec = config.dataset;
  if (!data_root.empty()) spec.root = data_root;
  return spec;
}

int cmd_evaluate(const std::string& run, const std::string& split, const std::string& data_root, const std::string& out) {
  auto loaded = load_run(checkpoint_in(run));
  const auto device = select_device();
  loaded.model->to(device);
  const auto data = open_dataset(dataset_for(loaded.config, data_root), parse_split(split));
  const auto report = evaluate(*loaded.model, data, loaded.config.batch_size, device);
  const auto text = to_json(report).dump(2);
  std::cout << text << "\n";
  if (!out.empty()) write_file(out, text + "\n");
  return 0;
}

int cmd_visualize(const std::string& run, const std::vector<std::string>& ids, const std::string& split,
                  const std::string& data_root, const std::string& out) {
  auto loaded = load_run(checkpoint_in(run));
  const auto spec = dataset_for(loaded.config, data_root);
  const auto data = open_dataset(spec, parse_split(split));
  for (const auto& id : ids) {
    const auto index = data.find(id);
    if (!index) {
      std::string avail;
      const size_t shown = std::min<size_t>(data.size(), 20);
      for (size_t i = 0; i < shown; ++i) avail += (i ? ", " : "") + data.ids()[i];
      if (data.size() > shown) avail += ", ... (" + std::to_string(data.size()) + " total)";
      fail(Errc::not_found, "unknown sample_id '" + id + "'; available: " + avail);
    }
  }
  for (const auto& id : ids) {
    const auto sample = preprocess(data.get(*data.find(id)), spec);
    const auto pred = loaded.model->predict(sample.pair);
    const auto panel = render_panel(sample.pair, ChangeMask::from_tensor(pred.mask), sample.gt);
    const auto path = fs::path(out) / (id + ".png");
    io::write_rgb_float(path, panel);
    std::cout << path.string() << "\n";
  }
  return 0;
}

int cmd_benchmark(const ConfigArgs& args, const LatencyProtocol& protocol, const std::string& precision,
                  bool skip_latency, const std::string& out, const std::string& csv) {
  const auto config = args.resolve();
  EfficiencyOptions opt;
  opt.protocol = protocol;
  opt.precision = precision;
  opt.measure = !skip_latency;
  const auto report = report_efficiency(config, opt);
  const auto text = to_json(report).dump(2);
  std::cout << text << "\n";
  if (!out.empty()) write_file(out, text + "\n");
  if (!csv.empty()) write_file(csv, bench_csv({report}));
  return 0;
}

// Collects experiment directories (<out>/<hash>) into one table.
int cmd_report(const std::vector<std::string>& dirs, bool with_std, const std::string& out) {
  ResultTable table;
  std::map<std::string, size_t> row_index;
  for (const auto& d : dirs) {
    const auto exp = read_json(fs::path(d) / "experiment.json");
    ExperimentConfig cfg;
    bool have_cfg = false;
    for (const auto& s : exp.at("seeds")) {
      const auto p = fs::path(d) / std::to_string(s.at("seed").get<uint64_t>()) / "config.json";
      if (fs::exists(p)) {
        cfg = from_json(read_json(p));
        have_cfg = true;
        break;
      }
    }
    if (!have_cfg) fail(Errc::not_found, d + " holds no config.json");
    const std::string col(to_string(cfg.dataset.name));
    if (std::find(table.columns.begin(), table.columns.end(), col) == table.columns.end()) table.columns.push_back(col);
    if (!row_index.count(cfg.name)) {
      row_index[cfg.name] = table.rows.size();
      table.add_row(cfg.name);
    }
    auto& row = table.rows[row_index[cfg.name]];
    if (exp.at("partial").get<bool>() || !exp.contains("aggregate"))
      row.cells[col] = std::nullopt;
    else
      row.cells[col] = TableCell{exp["aggregate"]["mean"].get<double>(), exp["aggregate"]["std"].get<double>()};
  }
  const auto csv = to_csv(table, with_std);
  std::cout << csv;
  if (!out.empty()) write_file(out, csv);
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Bi-temporal change detection: training, ablation, evaluation and benchmarking"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "convert a dataset distribution into the canonical layout");
  std::string ingest_source, ingest_dataset_name, ingest_out;
  IngestOptions ingest_opt;
  ingest->add_option("--source", ingest_source, "source directory (ignored for SYNTHETIC)");
  ingest->add_option("--dataset", ingest_dataset_name, "dataset name")->required();
  ingest->add_option("--out", ingest_out, "output root")->required();
  ingest->add_option("--n-train", ingest_opt.synthetic.n_train, "SYNTHETIC train samples");
  ingest->add_option("--n-val", ingest_opt.synthetic.n_val, "SYNTHETIC val samples");
  ingest->add_option("--n-test", ingest_opt.synthetic.n_test, "SYNTHETIC test samples");
  ingest->add_option("--ratio", ingest_opt.synthetic.change_ratio, "SYNTHETIC change ratio");
  ingest->add_option("--seed", ingest_opt.synthetic.seed, "SYNTHETIC seed");
  ingest->add_option("--size", ingest_opt.synthetic_size, "SYNTHETIC patch size");

  auto* backbones = app.add_subcommand("backbones", "list registry entries or fetch pretrained weights");
  backbones->require_subcommand(1);
  auto* bb_list = backbones->add_subcommand("list", "print the registry manifest");
  bool list_json = false;
  bb_list->add_flag("--json", list_json, "machine-readable output");
  auto* bb_fetch = backbones->add_subcommand("fetch", "download (or import) and pin weights");
  std::vector<std::string> fetch_keys;
  std::string fetch_from, fetch_cache;
  bb_fetch->add_option("spec", fetch_keys, "family/size/pretrain keys, or 'all'")->required();
  bb_fetch->add_option("--from", fetch_from, "import a local safetensors file instead of downloading");
  bb_fetch->add_option("--cache", fetch_cache, "cache root (default $CDET_CACHE)");

  auto* train = app.add_subcommand("train", "run every seed of an experiment");
  ConfigArgs train_args;
  train_args.attach(train);
  std::string train_out;
  bool print_config = false;
  train->add_option("--out", train_out, "output root (default $CDET_OUT or ./runs)");
  train->add_flag("--print-config", print_config, "print the effective config and exit");

  auto* ablate = app.add_subcommand("ablate", "run a one-axis ablation matrix");
  std::string matrix_path, ablate_out, ablate_table;
  ablate->add_option("matrix", matrix_path, "matrix file (JSON)")->required();
  ablate->add_option("--out", ablate_out, "output root");
  ablate->add_option("--table", ablate_table, "write the CSV table here");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a trained run on a split");
  std::string eval_run, eval_split = "test", eval_root, eval_out;
  evaluate_cmd->add_option("--run", eval_run, "seed run directory or checkpoint file")->required();
  evaluate_cmd->add_option("--split", eval_split, "train, val or test");
  evaluate_cmd->add_option("--data-root", eval_root, "dataset root override");
  evaluate_cmd->add_option("--out", eval_out, "write metrics JSON here");

  auto* bench = app.add_subcommand("benchmark", "latency, FLOPs and parameter counts");
  ConfigArgs bench_args;
  bench_args.attach(bench);
  LatencyProtocol protocol;
  std::string precision = "fp16", bench_out, bench_csv_path;
  bool no_latency = false;
  bench->add_option("--repeats", protocol.repeats, "timed repetitions");
  bench->add_option("--warmup", protocol.warmup, "warm-up passes per repetition");
  bench->add_option("--timed", protocol.timed, "timed passes per repetition");
  bench->add_option("--input-size", protocol.input_size, "input side length");
  bench->add_option("--precision", precision, "fp16 or fp32");
  bench->add_flag("--no-latency", no_latency, "report parameters and FLOPs only");
  bench->add_option("--out", bench_out, "write the JSON report here");
  bench->add_option("--csv", bench_csv_path, "write a table row here");

  auto* viz = app.add_subcommand("visualize", "write pre/post/gt/overlay panels");
  std::string viz_run, viz_split = "test", viz_root, viz_out;
  std::vector<std::string> viz_ids;
  viz->add_option("--run", viz_run, "seed run directory or checkpoint file")->required();
  viz->add_option("--samples", viz_ids, "sample ids")->required();
  viz->add_option("--split", viz_split, "split holding the samples");
  viz->add_option("--data-root", viz_root, "dataset root override");
  viz->add_option("--out", viz_out, "output directory")->required();

  auto* report = app.add_subcommand("report", "tabulate finished experiments");
  std::vector<std::string> report_dirs;
  bool report_std = false;
  std::string report_out;
  report->add_option("experiments", report_dirs, "experiment directories (<out>/<hash>)")->required();
  report->add_flag("--std", report_std, "include standard deviations");
  report->add_option("--out", report_out, "write the CSV here");

  app.add_subcommand("presets", "list shipped presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(FailureClass::validation);
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_source, ingest_dataset_name, ingest_out, ingest_opt);
    if (bb_list->parsed()) return cmd_backbones_list(list_json);
    if (bb_fetch->parsed()) return cmd_backbones_fetch(fetch_keys, fetch_from, fetch_cache);
    if (train->parsed()) return cmd_train(train_args, train_out, print_config);
    if (ablate->parsed()) return cmd_ablate(matrix_path, ablate_out, ablate_table);
    if (evaluate_cmd->parsed()) return cmd_evaluate(eval_run, eval_split, eval_root, eval_out);
    if (bench->parsed())
      return cmd_benchmark(bench_args, protocol, precision, no_latency, bench_out, bench_csv_path);
    if (viz->parsed()) return cmd_visualize(viz_run, viz_ids, viz_split, viz_root, viz_out);
    if (report->parsed()) return cmd_report(report_dirs, report_std, report_out);
    for (const auto& name : preset_names()) std::cout << name << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(failure_class(e.code()));
  } catch (const c10::Error& e) {
    std::cerr << "error: runtime: " << e.what_without_backtrace() << "\n";
    return exit_code(FailureClass::runtime);
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return exit_code(FailureClass::runtime);
  }
}

}  // namespace cdet
