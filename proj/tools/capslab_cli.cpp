// Command-line front end for the training and analysis library.
//
//   capslab train        run one multi-seed experiment from a config file
//   capslab sweep        run the regularization ablation grid from one config
//   capslab spectrum     score an action log and export its spectrum
//   capslab report       rebuild a report from persisted per-seed results
//   capslab tune-filters grid-search action filters on the reference P loop
//
// Output directories default to $CAPSLAB_OUT_ROOT (or ./results) with a
// UTC-stamped name; every artifact inside a run directory is
// timestamp-free, so identical configs reproduce identical bytes.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capslab/experiment.hpp"

namespace fs = std::filesystem;
using namespace capslab;

namespace {

std::string default_run_dir(const std::string& name) {
  return default_out_root() + "/" + name + "-" + run_stamp();
}

/// seedNNNN directories in ascending seed order.
std::vector<fs::path> seed_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string n = entry.path().filename().string();
    if (n.size() == 8 && n.rfind("seed", 0) == 0 &&
        n.find_first_not_of("0123456789", 4) == std::string::npos)
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RunResult> load_results(const fs::path& dir) {
  std::vector<RunResult> results;
  for (const fs::path& sd : seed_dirs(dir)) {
    std::ifstream in(sd / "result.json");
    if (!in) throw ConfigError("missing result file: " + (sd / "result.json").string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError((sd / "result.json").string() + ": " + e.what(), 0);
    }
    results.push_back(run_result_from_json(j));
  }
  if (results.empty()) throw ConfigError("no seed results under " + dir.string());
  return results;
}

int cmd_train(const std::string& config_path, std::string out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  if (out_dir.empty()) out_dir = default_run_dir(cfg.name);
  std::cout << "running " << cfg.seeds.size() << " seed(s) of '" << cfg.name << "' into "
            << out_dir << "\n";
  const std::vector<RunResult> results = run_experiment(cfg, out_dir);
  const ComparisonReport rep = build_report(cfg, {aggregate_row(cfg.name, results)});
  write_report(rep, out_dir);
  std::cout << render_report_text(rep);
  std::cout << "artifacts written to " << out_dir << "\n";
  return rep.rows.front().failures == 0 ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& mode_names,
              std::string out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  std::vector<AblationMode> modes;
  for (const std::string& m : mode_names) modes.push_back(ablation_from_name(m));
  if (out_dir.empty()) out_dir = default_run_dir(cfg.name + "-sweep");
  std::cout << "sweeping " << modes.size() << " configuration(s) of '" << cfg.name << "' into "
            << out_dir << "\n";
  const ComparisonReport rep = ablation_sweep(cfg, modes, out_dir);
  std::cout << render_report_text(rep);
  std::cout << "artifacts written to " << out_dir << "\n";
  std::size_t failures = 0;
  for (const ComparisonRow& row : rep.rows) failures += row.failures;
  return failures == 0 ? 0 : 1;
}

int cmd_spectrum(const std::string& log_path, double rate, std::string out_csv,
                 std::string out_json) {
  if (rate <= 0.0) throw UsageError("spectrum: --rate must be positive");
  const fs::path log(log_path);
  const fs::path stem = log.parent_path() / log.stem();
  if (out_csv.empty()) out_csv = stem.string() + "_spectrum.csv";
  if (out_json.empty()) out_json = stem.string() + "_sm.json";
  const SmoothnessReport rep = spectrum_export(log_path, rate, out_csv, out_json);
  for (std::size_t c = 0; c < rep.channel_sm.size(); ++c)
    std::printf("ch%zu: sm = %.6g\n", c, rep.channel_sm[c]);
  std::printf("mean: sm = %.6g over %zu bins at f_s = %g Hz\n", rep.sm, rep.n, rep.f_s);
  std::cout << "spectrum written to " << out_csv << ", summary to " << out_json << "\n";
  return 0;
}

int cmd_report(const std::string& dir_str) {
  const fs::path dir(dir_str);
  if (!fs::exists(dir / "config.json"))
    throw ConfigError("no config.json under " + dir.string());
  const ExperimentConfig cfg = load_experiment_config((dir / "config.json").string());

  // A sweep directory holds one subdirectory per configuration; a plain
  // experiment directory holds the seed directories at its root.
  std::vector<ComparisonRow> rows;
  for (const AblationMode m : kAllAblationModes) {
    const std::string mode = ablation_name(m);
    if (fs::exists(dir / mode / "config.json"))
      rows.push_back(aggregate_row(mode, load_results(dir / mode)));
  }
  if (rows.empty()) rows.push_back(aggregate_row(cfg.name, load_results(dir)));

  const ComparisonReport rep = build_report(cfg, std::move(rows));
  write_report(rep, dir);
  std::cout << render_report_text(rep);
  std::cout << "report rewritten under " << dir.string() << "\n";
  return 0;
}

int cmd_tune_filters(const std::string& out_path, double gain, std::size_t horizon, double band,
                     double bound) {
  const FilterTuning tuning = tune_filters_on_p_controller(gain, horizon, band, bound);
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw ConfigError("cannot write " + out_path);
  f << tuning_to_json(tuning).dump(2) << "\n";

  auto show = [](const char* family, const TunedFilter& t) {
    std::printf("%-6s %-40s overshoot %.6g settling %zu%s\n", family,
                filter_to_json(t.filter).dump().c_str(), t.response.overshoot,
                t.response.settling_steps,
                t.critically_damped ? "" : "  [best effort, overshoot bound not met]");
  };
  show("ema", tuning.ema);
  show("median", tuning.median);
  show("fir", tuning.fir);
  std::cout << "tuning written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training, smoothness analysis, and reporting for regularized control policies"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* train = app.add_subcommand("train", "Run one multi-seed experiment from a config file");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", out_dir, "output directory (default: run-stamped under out root)");

  std::vector<std::string> mode_names = {"vanilla", "temporal", "spatial", "caps"};
  auto* sweep = app.add_subcommand("sweep", "Run the regularization ablation grid");
  sweep->add_option("--config", config_path, "experiment config JSON")->required();
  sweep->add_option("--modes", mode_names,
                    "subset of: vanilla temporal spatial caps (default: all)");
  sweep->add_option("--out", out_dir, "output directory (default: run-stamped under out root)");

  std::string log_path, out_csv, out_json;
  double rate = 0.0;
  auto* spectrum = app.add_subcommand("spectrum", "Score an action log and export its spectrum");
  spectrum->add_option("--log", log_path, "action log CSV (step,s*,a*,reward)")->required();
  spectrum->add_option("--rate", rate, "control rate f_s in Hz")->required();
  spectrum->add_option("--out-csv", out_csv, "spectrum CSV path (default: <log>_spectrum.csv)");
  spectrum->add_option("--out-json", out_json, "summary JSON path (default: <log>_sm.json)");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Rebuild a report from persisted seed results");
  report->add_option("--dir", report_dir, "experiment or sweep directory")->required();

  std::string tune_out = "configs/tuned_filters.json";
  double gain = 1.0, band = 0.02, bound = kOvershootTolerance;
  std::size_t horizon = 100;
  auto* tune = app.add_subcommand("tune-filters",
                                  "Grid-search action filters on the reference P controller");
  tune->add_option("--out", tune_out, "output JSON path");
  tune->add_option("--gain", gain, "proportional gain of the reference loop");
  tune->add_option("--horizon", horizon, "step-response horizon");
  tune->add_option("--band", band, "settling band around the setpoint");
  tune->add_option("--bound", bound, "overshoot bound for critical damping");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*sweep) return cmd_sweep(config_path, mode_names, out_dir);
    if (*spectrum) return cmd_spectrum(log_path, rate, out_csv, out_json);
    if (*report) return cmd_report(report_dir);
    if (*tune) return cmd_tune_filters(tune_out, gain, horizon, band, bound);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
