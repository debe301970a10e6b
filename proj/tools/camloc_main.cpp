// camloc: seeded synthetic data, ensemble training, per-timestamp
// localization, and evaluation, as reproducible commands.
//
// Every command writes a manifest.json capturing the fully resolved
// configuration, the effective seed, and the input/output paths;
// passing a manifest back via --config reruns the command bit-exactly.
//
// Path precedence: flag > config file > environment (CAMLOC_DATA_DIR,
// CAMLOC_MODEL_DIR, CAMLOC_OUT_DIR) > built-in default. Other settings:
// flag > config file > default.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "camloc/camloc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kManifestVersion = 1;

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

std::string resolve_path(const std::string& flag_value,
                         const std::string& config_value, const char* env_name,
                         const std::string& fallback, const char* what,
                         bool required) {
    if (!flag_value.empty()) return flag_value;
    if (!config_value.empty()) return config_value;
    const std::string env_value = env_or_empty(env_name);
    if (!env_value.empty()) return env_value;
    if (!fallback.empty()) return fallback;
    if (required) {
        throw camloc::ConfigError(std::string("missing ") + what + " (flag, config, or " +
                                  env_name + ")");
    }
    return {};
}

// A config file may be a plain config object or a manifest written by a
// previous run; a manifest wraps the config and remembers input paths.
struct LoadedConfig {
    json config = json::object();
    json inputs = json::object();
};

LoadedConfig load_config(const std::string& path, const std::string& expect_command) {
    LoadedConfig out;
    if (path.empty()) return out;
    const json j = camloc::read_json_file(path);
    if (j.is_object() && j.contains("command")) {
        const auto cmd = j.at("command").get<std::string>();
        if (cmd != expect_command) {
            throw camloc::ConfigError(path + ": manifest is for '" + cmd +
                                      "', not '" + expect_command + "'");
        }
        out.config = j.at("config");
        if (j.contains("inputs")) out.inputs = j.at("inputs");
        return out;
    }
    out.config = j;
    return out;
}

std::string input_path_from(const LoadedConfig& cfg, const char* key) {
    if (cfg.inputs.contains(key)) return cfg.inputs.at(key).get<std::string>();
    return {};
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    std::uint64_t seed, const ordered_json& config,
                    const ordered_json& inputs, const std::vector<std::string>& outputs) {
    ordered_json m;
    m["command"] = command;
    m["manifest_version"] = kManifestVersion;
    m["seed"] = seed;
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    camloc::write_json_file(out_dir / "manifest.json", m);
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path,
                    "JSON config file, or a manifest.json from a previous run");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--seed", args.seed, "Master seed (overrides config)");
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args) {
    const LoadedConfig loaded = load_config(args.config_path, "synth");
    camloc::SyntheticConfig cfg = loaded.config.empty()
                                      ? camloc::easy_dishwasher_scenario()
                                      : camloc::scenario_from_json(loaded.config);
    if (args.seed) cfg.seed = *args.seed;
    cfg.validate();

    const fs::path out_dir = resolve_path(args.out_dir, "", "CAMLOC_OUT_DIR",
                                          "", "output directory", true);
    fs::create_directories(out_dir);

    const auto houses = camloc::generate(cfg);
    std::vector<std::string> outputs;
    for (const auto& h : houses) {
        const std::string base = h.aggregate.house_id;
        camloc::write_house_csv(out_dir / (base + ".csv"), h.aggregate,
                                h.has_appliance ? &h.appliance : nullptr);
        outputs.push_back(base + ".csv");
        camloc::write_status_csv(out_dir / (base + "_status.csv"),
                                 h.aggregate.timestamps, h.status);
        outputs.push_back(base + "_status.csv");
    }
    const ordered_json scenario = camloc::scenario_to_json(cfg);
    camloc::write_json_file(out_dir / "scenario.json", scenario);
    outputs.push_back("scenario.json");
    write_manifest(out_dir, "synth", cfg.seed, scenario, ordered_json::object(),
                   outputs);
    std::cout << "wrote " << houses.size() << " houses ("
              << (houses.empty() ? 0 : houses.front().aggregate.size())
              << " samples each) to " << out_dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonArgs& args, const std::string& data_flag,
              const std::string& cache_dir) {
    const LoadedConfig loaded = load_config(args.config_path, "train");
    camloc::ExperimentConfig cfg = loaded.config.empty()
                                       ? camloc::ExperimentConfig{}
                                       : camloc::experiment_from_json(loaded.config);
    if (args.seed) cfg.train.seed = *args.seed;

    const fs::path data_dir =
        resolve_path(data_flag,
                     !cfg.data_dir.empty() ? cfg.data_dir
                                           : input_path_from(loaded, "data_dir"),
                     "CAMLOC_DATA_DIR", "", "data directory", true);
    const fs::path out_dir = resolve_path(args.out_dir, cfg.out_dir,
                                          "CAMLOC_OUT_DIR", "", "output directory",
                                          true);
    if (!fs::is_directory(data_dir)) {
        throw camloc::ConfigError("data directory not found: " + data_dir.string());
    }
    fs::create_directories(out_dir);

    // Profile: explicit config wins, else the data directory's scenario.
    camloc::ApplianceProfile profile;
    if (cfg.profile) {
        profile = *cfg.profile;
    } else if (fs::exists(data_dir / "scenario.json")) {
        const auto scenario =
            camloc::scenario_from_json(camloc::read_json_file(data_dir / "scenario.json"));
        profile = scenario.profile;
    } else {
        throw camloc::ConfigError(
            "no appliance profile: provide one in the config or a scenario.json "
            "in the data directory");
    }

    std::vector<camloc::HouseWindows> houses;
    for (const auto& path : camloc::find_house_csvs(data_dir)) {
        houses.push_back(camloc::process_house(camloc::read_house_csv(path), profile,
                                               cfg.window_length, cfg.resample_dt_s));
    }
    std::vector<std::string> skipped;
    auto splits = camloc::assemble_splits(houses, cfg.split_ratios, cfg.train.seed,
                                          &skipped);
    for (const auto& id : skipped) {
        std::cerr << "warning: house " << id << " has no usable windows, skipped\n";
    }
    const camloc::WindowDataset train_ds =
        cfg.balance_train
            ? camloc::balance_undersample(splits.train, cfg.train.seed)
            : splits.train;

    camloc::TrainReport report;
    camloc::Ensemble ens =
        camloc::train_ensemble(train_ds, splits.validation, cfg.train, profile,
                               &report, cfg.resample_dt_s);

    std::vector<std::string> outputs;
    ens.save(out_dir / "ensemble");
    outputs.push_back("ensemble/ensemble.json");
    for (std::size_t m = 0; m < ens.size(); ++m) {
        char name[40];
        std::snprintf(name, sizeof(name), "ensemble/model_%02zu.bin", m);
        outputs.push_back(name);
    }

    if (!cache_dir.empty()) {
        fs::create_directories(cache_dir);
        camloc::save_dataset(train_ds, fs::path(cache_dir) / "train.bin");
        camloc::save_dataset(splits.validation, fs::path(cache_dir) / "validation.bin");
        camloc::save_dataset(splits.test, fs::path(cache_dir) / "test.bin");
    }

    ordered_json jreport = camloc::train_report_to_json(report);
    jreport["houses"] = {{"train", splits.houses.train},
                         {"validation", splits.houses.validation},
                         {"test", splits.houses.test},
                         {"skipped", skipped}};
    jreport["windows"] = {{"train", train_ds.num_windows()},
                          {"validation", splits.validation.num_windows()},
                          {"test", splits.test.num_windows()}};
    {
        const auto counts = ens.detection_counts(splits.validation,
                                                 cfg.train.batch_size);
        const auto scores = camloc::scores_from_counts(counts);
        jreport["detection_validation"] = {
            {"balanced_accuracy", camloc::balanced_accuracy(counts)},
            {"f1", scores.f1},
            {"precision", scores.precision},
            {"recall", scores.recall},
            {"counts", camloc::counts_to_json(counts)}};
    }
    if (cfg.evaluate_test && splits.test.num_windows() > 0 &&
        splits.test.has_strong()) {
        const auto ev = camloc::evaluate_localization(ens, splits.test);
        jreport["test"] = camloc::localization_eval_to_json(ev);
    }
    camloc::write_json_file(out_dir / "report.json", jreport);
    outputs.push_back("report.json");

    camloc::ExperimentConfig resolved = cfg;
    resolved.data_dir.clear(); // recorded under inputs instead
    resolved.out_dir.clear();
    ordered_json inputs;
    inputs["data_dir"] = data_dir.string();
    write_manifest(out_dir, "train", cfg.train.seed,
                   camloc::experiment_to_json(resolved), inputs, outputs);

    std::cout << "trained " << report.candidates.size() << " candidates, kept "
              << ens.size() << "; validation balanced accuracy "
              << jreport["detection_validation"]["balanced_accuracy"].dump()
              << "; archive at " << (out_dir / "ensemble").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_localize(const CommonArgs& args, const std::string& ensemble_flag,
                 const std::string& input_flag, bool literal_rounding, bool plot) {
    const LoadedConfig loaded = load_config(args.config_path, "localize");
    const fs::path ensemble_dir =
        resolve_path(ensemble_flag, input_path_from(loaded, "ensemble_dir"),
                     "CAMLOC_MODEL_DIR", "", "ensemble directory", true);
    const fs::path input_csv =
        resolve_path(input_flag, input_path_from(loaded, "input_csv"),
                     "CAMLOC_DATA_DIR", "", "input CSV", true);
    const fs::path out_dir = resolve_path(args.out_dir,
                                          input_path_from(loaded, "out_dir"),
                                          "CAMLOC_OUT_DIR", "", "output directory",
                                          true);
    if (!fs::exists(ensemble_dir / "ensemble.json")) {
        throw camloc::ConfigError("no ensemble archive at " + ensemble_dir.string());
    }
    if (!fs::exists(input_csv)) {
        throw camloc::ConfigError("input CSV not found: " + input_csv.string());
    }
    if (!loaded.config.empty()) {
        camloc::detail::reject_unknown_keys(loaded.config, {"literal_rounding"},
                                            "localize config");
        if (loaded.config.contains("literal_rounding") && !literal_rounding) {
            literal_rounding = loaded.config.at("literal_rounding").get<bool>();
        }
    }
    fs::create_directories(out_dir);

    const camloc::Ensemble ens = camloc::Ensemble::load(ensemble_dir);
    const auto house = camloc::read_house_csv(input_csv);
    const camloc::PowerSeries processed = camloc::forward_fill(
        camloc::resample(house.aggregate, ens.input_interval_s()),
        ens.profile().max_ffill_s);
    if (processed.size() < ens.input_length()) {
        throw camloc::DataError(
            "input series has " + std::to_string(processed.size()) +
            " samples after resampling; at least " +
            std::to_string(ens.input_length()) + " (one window) required");
    }
    const auto mode = literal_rounding ? camloc::Binarize::round_half_up
                                       : camloc::Binarize::strict;
    const auto result = camloc::localize_series(ens, processed, mode);
    std::vector<std::string> outputs;
    camloc::write_predictions_csv(out_dir / "predictions.csv", result.rows);
    outputs.push_back("predictions.csv");

    if (plot) {
        camloc::PlotSpec spec;
        spec.title = ens.appliance() + " localization: " + house.aggregate.house_id;
        const std::size_t n = result.rows.size();
        const std::size_t stride = std::max<std::size_t>(1, n / 5000);
        camloc::PlotSeries agg{"aggregate_w", "#2166ac", {}};
        camloc::PlotSeries est{"est_power_w", "#b2182b", {}};
        std::vector<std::uint8_t> shading;
        const std::int64_t t0 = processed.timestamps.front();
        std::unordered_map<std::int64_t, double> agg_at;
        agg_at.reserve(processed.size());
        for (std::size_t i = 0; i < processed.size(); ++i) {
            agg_at[processed.timestamps[i]] = processed.values[i];
        }
        for (std::size_t i = 0; i < n; i += stride) {
            const auto& row = result.rows[i];
            spec.x.push_back(static_cast<double>(row.timestamp - t0) / 3600.0);
            agg.y.push_back(agg_at.at(row.timestamp));
            est.y.push_back(row.est_power_w);
            shading.push_back(row.status);
        }
        spec.series = {std::move(agg), std::move(est)};
        spec.shading = std::move(shading);
        camloc::write_svg_chart(out_dir / "localization.svg", spec);
        outputs.push_back("localization.svg");
    }

    ordered_json config;
    config["literal_rounding"] = literal_rounding;
    ordered_json inputs;
    inputs["ensemble_dir"] = ensemble_dir.string();
    inputs["input_csv"] = input_csv.string();
    write_manifest(out_dir, "localize", 0, config, inputs, outputs);

    std::cout << "localized " << result.windows_complete << "/"
              << result.windows_total << " windows (" << result.windows_detected
              << " detected) -> " << (out_dir / "predictions.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_evaluate(const CommonArgs& args, const std::string& pred_flag,
                 const std::string& truth_house_flag,
                 const std::string& truth_status_flag) {
    const LoadedConfig loaded = load_config(args.config_path, "evaluate");
    const fs::path pred_csv =
        resolve_path(pred_flag, input_path_from(loaded, "predictions_csv"),
                     "CAMLOC_DATA_DIR", "", "predictions CSV", true);
    const fs::path truth_house_csv =
        resolve_path(truth_house_flag, input_path_from(loaded, "truth_house_csv"),
                     "CAMLOC_DATA_DIR", "", "ground-truth house CSV", true);
    const fs::path truth_status_csv =
        resolve_path(truth_status_flag, input_path_from(loaded, "truth_status_csv"),
                     "CAMLOC_DATA_DIR", "", "ground-truth status CSV", true);
    const fs::path out_dir = resolve_path(args.out_dir,
                                          input_path_from(loaded, "out_dir"),
                                          "CAMLOC_OUT_DIR", "", "output directory",
                                          true);
    for (const auto& p : {pred_csv, truth_house_csv, truth_status_csv}) {
        if (!fs::exists(p)) {
            throw camloc::ConfigError("file not found: " + p.string());
        }
    }
    fs::create_directories(out_dir);

    const auto rows = camloc::read_predictions_csv(pred_csv);
    const auto truth_house = camloc::read_house_csv(truth_house_csv);
    if (!truth_house.appliance) {
        throw camloc::DataError(truth_house_csv.string() +
                                ": no appliance_w column, cannot score energy");
    }
    const auto [truth_ts, truth_status] = camloc::read_status_csv(truth_status_csv);

    std::unordered_map<std::int64_t, std::size_t> status_at;
    status_at.reserve(truth_ts.size());
    for (std::size_t i = 0; i < truth_ts.size(); ++i) status_at[truth_ts[i]] = i;
    std::unordered_map<std::int64_t, std::size_t> power_at;
    power_at.reserve(truth_house.appliance->size());
    for (std::size_t i = 0; i < truth_house.appliance->size(); ++i) {
        power_at[truth_house.appliance->timestamps[i]] = i;
    }

    std::vector<std::uint8_t> pred_status, tru_status;
    std::vector<double> pred_power, tru_power;
    for (const auto& row : rows) {
        const auto si = status_at.find(row.timestamp);
        const auto pi = power_at.find(row.timestamp);
        if (si == status_at.end() || pi == power_at.end()) {
            throw camloc::DataError("prediction timestamp " +
                                    std::to_string(row.timestamp) +
                                    " absent from ground truth");
        }
        pred_status.push_back(row.status);
        tru_status.push_back(truth_status.values[si->second]);
        pred_power.push_back(row.est_power_w);
        const double p = truth_house.appliance->values[pi->second];
        tru_power.push_back(camloc::is_missing(p) ? 0.0 : p);
    }

    const auto report =
        camloc::full_report(pred_status, tru_status, pred_power, tru_power);

    ordered_json j;
    j["rows_scored"] = rows.size();
    j["status"] = camloc::class_scores_to_json(report.status);
    j["balanced_accuracy"] = report.balanced_acc;
    j["energy"] = {{"mae_w", report.energy.mae},
                   {"rmse_w", report.energy.rmse},
                   {"matching_ratio", report.energy.matching_ratio}};
    camloc::write_json_file(out_dir / "report.json", j);

    char line[128];
    std::string text;
    auto add = [&](const char* name, double value) {
        std::snprintf(line, sizeof(line), "%-22s %.6f\n", name, value);
        text += line;
    };
    add("precision", report.status.precision);
    add("recall", report.status.recall);
    add("f1", report.status.f1);
    add("balanced_accuracy", report.balanced_acc);
    add("mae_w", report.energy.mae);
    add("rmse_w", report.energy.rmse);
    add("matching_ratio", report.energy.matching_ratio);
    std::snprintf(line, sizeof(line), "%-22s %llu/%llu/%llu/%llu\n", "tp/fp/tn/fn",
                  static_cast<unsigned long long>(report.status.counts.tp),
                  static_cast<unsigned long long>(report.status.counts.fp),
                  static_cast<unsigned long long>(report.status.counts.tn),
                  static_cast<unsigned long long>(report.status.counts.fn));
    text += line;
    {
        std::ofstream os(out_dir / "report.txt", std::ios::trunc);
        os << text;
        if (!os) throw camloc::DataError("write failed for report.txt");
    }

    ordered_json inputs;
    inputs["predictions_csv"] = pred_csv.string();
    inputs["truth_house_csv"] = truth_house_csv.string();
    inputs["truth_status_csv"] = truth_status_csv.string();
    write_manifest(out_dir, "evaluate", 0, ordered_json::object(), inputs,
                   {"report.json", "report.txt"});

    std::cout << text;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised appliance localization from aggregate "
                 "smart-meter series"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, localize_args, evaluate_args;
    std::string train_data, train_cache;
    std::string loc_ensemble, loc_input;
    bool loc_literal = false, loc_plot = false;
    std::string eval_pred, eval_truth_house, eval_truth_status;

    CLI::App* synth = app.add_subcommand(
        "synth", "Generate a seeded synthetic smart-meter dataset");
    add_common(synth, synth_args);

    CLI::App* train = app.add_subcommand(
        "train", "Train an ensemble of networks and keep the best ones");
    add_common(train, train_args);
    train->add_option("--data", train_data, "Directory of house CSVs");
    train->add_option("--dataset-cache", train_cache,
                      "Also write the preprocessed window datasets here");

    CLI::App* localize = app.add_subcommand(
        "localize", "Per-timestamp status and power for one house CSV");
    add_common(localize, localize_args);
    localize->add_option("--ensemble", loc_ensemble, "Ensemble archive directory");
    localize->add_option("--input", loc_input, "House CSV to localize");
    localize->add_flag("--literal-rounding", loc_literal,
                       "Binarize with sigmoid >= 0.5 instead of the strict rule");
    localize->add_flag("--plot", loc_plot, "Write an SVG overlay chart");

    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "Score predictions against ground truth");
    add_common(evaluate, evaluate_args);
    evaluate->add_option("--pred", eval_pred, "predictions.csv from localize");
    evaluate->add_option("--truth-house", eval_truth_house,
                         "Ground-truth house CSV (with appliance_w)");
    evaluate->add_option("--truth-status", eval_truth_status,
                         "Ground-truth status CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args);
        if (train->parsed()) return cmd_train(train_args, train_data, train_cache);
        if (localize->parsed()) {
            return cmd_localize(localize_args, loc_ensemble, loc_input, loc_literal,
                                loc_plot);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(evaluate_args, eval_pred, eval_truth_house,
                                eval_truth_status);
        }
    } catch (const camloc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
