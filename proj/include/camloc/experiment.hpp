#pragma once

// Experiment plumbing shared by the CLI and the end-to-end tests:
// declarative JSON configs (with unknown keys rejected by name),
// house-directory ingestion, split/window assembly, whole-series
// localization, and report serialization.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "camloc/csv.hpp"
#include "camloc/dataproc.hpp"
#include "camloc/ensemble.hpp"
#include "camloc/errors.hpp"
#include "camloc/localizer.hpp"
#include "camloc/metrics.hpp"
#include "camloc/synth.hpp"

namespace camloc {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError(context + ": unknown field '" + key + "'");
        }
    }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out,
                const std::string& context) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(context + ": field '" + std::string(key) +
                          "' has the wrong type");
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Appliance profile JSON

inline ApplianceProfile profile_from_json(const nlohmann::json& j,
                                          const std::string& context) {
    detail::reject_unknown_keys(
        j, {"name", "on_threshold_w", "mean_power_w", "max_ffill_s"}, context);
    ApplianceProfile p;
    detail::read_field(j, "name", p.name, context);
    detail::read_field(j, "on_threshold_w", p.on_threshold_w, context);
    detail::read_field(j, "mean_power_w", p.mean_power_w, context);
    detail::read_field(j, "max_ffill_s", p.max_ffill_s, context);
    p.validate();
    return p;
}

inline nlohmann::ordered_json profile_to_json(const ApplianceProfile& p) {
    return {{"name", p.name},
            {"on_threshold_w", p.on_threshold_w},
            {"mean_power_w", p.mean_power_w},
            {"max_ffill_s", p.max_ffill_s}};
}

// ---------------------------------------------------------------------------
// Scenario (synth) config JSON

inline SignatureSpec signature_from_json(const nlohmann::json& j,
                                         const std::string& context) {
    detail::reject_unknown_keys(
        j, {"kind", "peak_w", "duration_steps", "phases", "activations_per_day"},
        context);
    SignatureSpec s;
    std::string kind = "pulse";
    detail::read_field(j, "kind", kind, context);
    if (kind == "pulse") s.kind = SignatureSpec::Kind::pulse;
    else if (kind == "multi_phase") s.kind = SignatureSpec::Kind::multi_phase;
    else if (kind == "ramp") s.kind = SignatureSpec::Kind::ramp;
    else throw ConfigError(context + ": unknown signature kind '" + kind + "'");
    detail::read_field(j, "peak_w", s.peak_w, context);
    detail::read_field(j, "duration_steps", s.duration_steps, context);
    detail::read_field(j, "activations_per_day", s.activations_per_day, context);
    if (j.contains("phases")) {
        s.phases.clear();
        for (const auto& jp : j.at("phases")) {
            detail::reject_unknown_keys(jp, {"power_w", "steps"}, context + ".phases");
            SignatureSpec::Phase ph{0, 0};
            detail::read_field(jp, "power_w", ph.power_w, context);
            detail::read_field(jp, "steps", ph.steps, context);
            s.phases.push_back(ph);
        }
    }
    return s;
}

inline nlohmann::ordered_json signature_to_json(const SignatureSpec& s) {
    nlohmann::ordered_json j;
    switch (s.kind) {
        case SignatureSpec::Kind::pulse: j["kind"] = "pulse"; break;
        case SignatureSpec::Kind::multi_phase: j["kind"] = "multi_phase"; break;
        case SignatureSpec::Kind::ramp: j["kind"] = "ramp"; break;
    }
    j["peak_w"] = s.peak_w;
    j["duration_steps"] = s.duration_steps;
    nlohmann::ordered_json phases = nlohmann::ordered_json::array();
    for (const auto& ph : s.phases) {
        phases.push_back({{"power_w", ph.power_w}, {"steps", ph.steps}});
    }
    j["phases"] = std::move(phases);
    j["activations_per_day"] = s.activations_per_day;
    return j;
}

inline SyntheticConfig scenario_from_json(const nlohmann::json& j) {
    const std::string ctx = "scenario";
    detail::reject_unknown_keys(
        j,
        {"num_houses", "owner_houses", "days", "dt_s", "start_epoch_s",
         "base_level_w", "base_daily_amp_w", "noise_sigma_w", "appliance_name",
         "profile", "signature", "start_mode", "seed"},
        ctx);
    SyntheticConfig cfg = easy_dishwasher_scenario();
    detail::read_field(j, "num_houses", cfg.num_houses, ctx);
    detail::read_field(j, "owner_houses", cfg.owner_houses, ctx);
    detail::read_field(j, "days", cfg.days, ctx);
    detail::read_field(j, "dt_s", cfg.dt_s, ctx);
    detail::read_field(j, "start_epoch_s", cfg.start_epoch_s, ctx);
    detail::read_field(j, "base_level_w", cfg.base_level_w, ctx);
    detail::read_field(j, "base_daily_amp_w", cfg.base_daily_amp_w, ctx);
    detail::read_field(j, "noise_sigma_w", cfg.noise_sigma_w, ctx);
    detail::read_field(j, "appliance_name", cfg.appliance_name, ctx);
    detail::read_field(j, "seed", cfg.seed, ctx);
    if (j.contains("start_mode")) {
        const std::string mode = j.at("start_mode").get<std::string>();
        if (mode == "diurnal") cfg.start_mode = SyntheticConfig::StartMode::diurnal;
        else if (mode == "uniform") cfg.start_mode = SyntheticConfig::StartMode::uniform;
        else throw ConfigError(ctx + ": unknown start_mode '" + mode + "'");
    }
    if (j.contains("signature")) {
        cfg.signature = signature_from_json(j.at("signature"), ctx + ".signature");
    }
    if (j.contains("profile")) {
        cfg.profile = profile_from_json(j.at("profile"), ctx + ".profile");
    }
    cfg.validate();
    return cfg;
}

inline nlohmann::ordered_json scenario_to_json(const SyntheticConfig& cfg) {
    nlohmann::ordered_json j;
    j["num_houses"] = cfg.num_houses;
    j["owner_houses"] = cfg.owner_houses;
    j["days"] = cfg.days;
    j["dt_s"] = cfg.dt_s;
    j["start_epoch_s"] = cfg.start_epoch_s;
    j["base_level_w"] = cfg.base_level_w;
    j["base_daily_amp_w"] = cfg.base_daily_amp_w;
    j["noise_sigma_w"] = cfg.noise_sigma_w;
    j["appliance_name"] = cfg.appliance_name;
    j["profile"] = profile_to_json(cfg.profile);
    j["signature"] = signature_to_json(cfg.signature);
    j["start_mode"] =
        cfg.start_mode == SyntheticConfig::StartMode::diurnal ? "diurnal" : "uniform";
    j["seed"] = cfg.seed;
    return j;
}

// ---------------------------------------------------------------------------
// Experiment (train) config JSON

struct ExperimentConfig {
    TrainConfig train;
    std::size_t window_length = 510;
    std::int64_t resample_dt_s = 60;
    std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
    bool balance_train = true;
    bool evaluate_test = true;
    std::optional<ApplianceProfile> profile; // overrides the data dir scenario
    std::string data_dir;                    // optional; flags/env may supply
    std::string out_dir;
};

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    const std::string ctx = "train config";
    detail::reject_unknown_keys(
        j,
        {"kernel_sizes", "trials", "ensemble_size", "max_epochs", "patience",
         "min_delta", "batch_size", "learning_rate", "detection_threshold",
         "num_workers", "seed", "window_length", "resample_dt_s", "split_ratios",
         "balance_train", "evaluate_test", "profile", "data_dir", "out_dir"},
        ctx);
    ExperimentConfig cfg;
    detail::read_field(j, "kernel_sizes", cfg.train.kernel_sizes, ctx);
    detail::read_field(j, "trials", cfg.train.trials, ctx);
    detail::read_field(j, "ensemble_size", cfg.train.ensemble_size, ctx);
    detail::read_field(j, "max_epochs", cfg.train.max_epochs, ctx);
    detail::read_field(j, "patience", cfg.train.patience, ctx);
    detail::read_field(j, "min_delta", cfg.train.min_delta, ctx);
    detail::read_field(j, "batch_size", cfg.train.batch_size, ctx);
    detail::read_field(j, "learning_rate", cfg.train.learning_rate, ctx);
    detail::read_field(j, "detection_threshold", cfg.train.detection_threshold, ctx);
    detail::read_field(j, "num_workers", cfg.train.num_workers, ctx);
    detail::read_field(j, "seed", cfg.train.seed, ctx);
    detail::read_field(j, "window_length", cfg.window_length, ctx);
    detail::read_field(j, "resample_dt_s", cfg.resample_dt_s, ctx);
    if (j.contains("split_ratios")) {
        const auto r = j.at("split_ratios").get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError(ctx + ": split_ratios needs 3 values");
        std::copy(r.begin(), r.end(), cfg.split_ratios.begin());
    }
    detail::read_field(j, "balance_train", cfg.balance_train, ctx);
    detail::read_field(j, "evaluate_test", cfg.evaluate_test, ctx);
    if (j.contains("profile")) {
        cfg.profile = profile_from_json(j.at("profile"), ctx + ".profile");
    }
    detail::read_field(j, "data_dir", cfg.data_dir, ctx);
    detail::read_field(j, "out_dir", cfg.out_dir, ctx);
    if (cfg.window_length == 0) throw ConfigError(ctx + ": window_length must be > 0");
    cfg.train.validate();
    return cfg;
}

inline nlohmann::ordered_json experiment_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["kernel_sizes"] = cfg.train.kernel_sizes;
    j["trials"] = cfg.train.trials;
    j["ensemble_size"] = cfg.train.ensemble_size;
    j["max_epochs"] = cfg.train.max_epochs;
    j["patience"] = cfg.train.patience;
    j["min_delta"] = cfg.train.min_delta;
    j["batch_size"] = cfg.train.batch_size;
    j["learning_rate"] = cfg.train.learning_rate;
    j["detection_threshold"] = cfg.train.detection_threshold;
    j["num_workers"] = cfg.train.num_workers;
    j["seed"] = cfg.train.seed;
    j["window_length"] = cfg.window_length;
    j["resample_dt_s"] = cfg.resample_dt_s;
    j["split_ratios"] = cfg.split_ratios;
    j["balance_train"] = cfg.balance_train;
    j["evaluate_test"] = cfg.evaluate_test;
    if (cfg.profile) j["profile"] = profile_to_json(*cfg.profile);
    if (!cfg.data_dir.empty()) j["data_dir"] = cfg.data_dir;
    if (!cfg.out_dir.empty()) j["out_dir"] = cfg.out_dir;
    return j;
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct HouseWindows {
    std::string house_id;
    WindowDataset windows;
    PowerSeries processed_aggregate; // resampled + filled, Watts
};

// Resample + forward-fill a house CSV and slice it into labelled
// windows. Ground truth (status, appliance power) is attached when the
// CSV has an appliance column.
inline HouseWindows process_house(const HouseCsv& csv,
                                  const ApplianceProfile& profile,
                                  std::size_t window_length,
                                  std::int64_t resample_dt_s) {
    HouseWindows hw;
    hw.house_id = csv.aggregate.house_id;
    hw.processed_aggregate =
        forward_fill(resample(csv.aggregate, resample_dt_s), profile.max_ffill_s);
    if (csv.appliance) {
        PowerSeries app =
            forward_fill(resample(*csv.appliance, resample_dt_s), profile.max_ffill_s);
        if (app.size() != hw.processed_aggregate.size() ||
            (app.size() > 0 &&
             app.timestamps.front() != hw.processed_aggregate.timestamps.front())) {
            throw DataError(hw.house_id +
                            ": aggregate and appliance series misaligned after "
                            "resampling");
        }
        const StatusSeries status = derive_status(app, profile);
        hw.windows = make_windows(hw.processed_aggregate, &status, &app,
                                  window_length);
    } else {
        // No appliance column marks a house that does not own the
        // appliance, so its ground truth is identically zero.
        hw.windows =
            broadcast_possession_label(hw.processed_aggregate, 0, window_length);
        hw.windows.strong_status.assign(
            hw.windows.num_windows() * window_length, 0);
        hw.windows.appliance_power.assign(
            hw.windows.num_windows() * window_length, 0.0);
    }
    return hw;
}

// House CSVs in a directory: every *.csv except *_status.csv and
// reserved outputs. Sorted by filename for deterministic ordering.
inline std::vector<std::filesystem::path> find_house_csvs(
    const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw DataError("data directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".csv") continue;
        if (name.size() > 11 && name.ends_with("_status.csv")) continue;
        if (name == "predictions.csv") continue;
        out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) {
        throw DataError("no house CSVs found in " + dir.string());
    }
    return out;
}

struct SplitDatasets {
    WindowDataset train, validation, test;
    HouseSplit houses;
};

// House-level 70/10/20 split (seeded), then per-split window pools.
// Houses that produced no usable windows are left out of the split.
inline SplitDatasets assemble_splits(const std::vector<HouseWindows>& houses,
                                     const std::array<double, 3>& ratios,
                                     std::uint64_t seed,
                                     std::vector<std::string>* skipped = nullptr) {
    std::vector<std::string> usable;
    std::map<std::string, const WindowDataset*> by_house;
    for (const auto& hw : houses) {
        if (hw.windows.num_windows() == 0) {
            if (skipped) skipped->push_back(hw.house_id);
            continue;
        }
        usable.push_back(hw.house_id);
        by_house[hw.house_id] = &hw.windows;
    }
    SplitDatasets out;
    out.houses = split_houses(usable, ratios, seed);
    auto fill = [&](const std::vector<std::string>& ids, WindowDataset& ds) {
        for (const auto& id : ids) ds.append(*by_house.at(id));
    };
    fill(out.houses.train, out.train);
    fill(out.houses.validation, out.validation);
    fill(out.houses.test, out.test);
    return out;
}

// ---------------------------------------------------------------------------
// Whole-series localization (the `localize` command core)

struct SeriesLocalization {
    std::vector<PredictionRow> rows;
    std::size_t windows_total = 0;
    std::size_t windows_complete = 0;
    std::size_t windows_detected = 0;
};

// Slices the processed series into tumbling windows, skips windows with
// missing values, and emits one row per covered timestamp. Window
// values are scaled exactly as during training (Watts / 1000 in float);
// power estimation clips against the raw Watts.
inline SeriesLocalization localize_series(const Ensemble& ens,
                                          const PowerSeries& processed,
                                          Binarize mode = Binarize::strict,
                                          std::size_t batch_size = 64) {
    const std::size_t L = ens.input_length();
    SeriesLocalization out;
    out.windows_total = processed.size() / L;

    std::vector<std::size_t> offsets;
    for (std::size_t w = 0; w < out.windows_total; ++w) {
        bool complete = true;
        for (std::size_t l = 0; l < L; ++l) {
            if (is_missing(processed.values[w * L + l])) {
                complete = false;
                break;
            }
        }
        if (complete) offsets.push_back(w * L);
    }
    out.windows_complete = offsets.size();

    for (std::size_t done = 0; done < offsets.size(); done += batch_size) {
        const std::size_t take = std::min(batch_size, offsets.size() - done);
        Tensor<float> batch(take, 1, L);
        for (std::size_t b = 0; b < take; ++b) {
            const std::size_t off = offsets[done + b];
            for (std::size_t l = 0; l < L; ++l) {
                batch(b, 0, l) =
                    static_cast<float>(processed.values[off + l] / 1000.0);
            }
        }
        const auto results = localize_batch(ens, batch, mode);
        for (std::size_t b = 0; b < take; ++b) {
            const std::size_t off = offsets[done + b];
            const LocalizeResult& res = results[b];
            if (res.detected) out.windows_detected++;
            std::vector<double> agg_w(processed.values.begin() + off,
                                      processed.values.begin() + off + L);
            const auto power = estimate_power(res.status, ens.profile(), agg_w);
            for (std::size_t l = 0; l < L; ++l) {
                out.rows.push_back({processed.timestamps[off + l], res.prob,
                                    res.status.values[l], power[l]});
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Localization evaluation over a ground-truth window dataset

struct LocalizationEval {
    ClassScores status;          // per-timestamp, micro-averaged
    EnergyScores energy;         // only when appliance power is present
    bool has_energy = false;
    ConfusionCounts detection;   // window-level vs weak labels
    double detection_ba = 0;
    ClassScores detection_scores;
};

inline LocalizationEval evaluate_localization(const Ensemble& ens,
                                              const WindowDataset& ds,
                                              Binarize mode = Binarize::strict,
                                              std::size_t batch_size = 64) {
    if (!ds.has_strong()) {
        throw DataError("evaluate_localization: dataset has no per-timestamp truth");
    }
    const std::size_t L = ds.window_length;
    LocalizationEval ev;
    std::vector<std::uint8_t> pred_status, truth_status;
    std::vector<double> pred_power, truth_power;
    std::vector<std::size_t> idx;
    for (std::size_t done = 0; done < ds.num_windows(); done += batch_size) {
        const std::size_t take = std::min(batch_size, ds.num_windows() - done);
        idx.resize(take);
        for (std::size_t i = 0; i < take; ++i) idx[i] = done + i;
        const auto results = localize_batch(ens, ds.batch(idx), mode);
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t w = done + i;
            const LocalizeResult& res = results[i];
            const bool truth_weak = ds.weak_labels[w] != 0;
            if (res.detected && truth_weak) ev.detection.tp++;
            else if (res.detected && !truth_weak) ev.detection.fp++;
            else if (!res.detected && truth_weak) ev.detection.fn++;
            else ev.detection.tn++;
            pred_status.insert(pred_status.end(), res.status.values.begin(),
                               res.status.values.end());
            truth_status.insert(truth_status.end(),
                                ds.strong_status.begin() + w * L,
                                ds.strong_status.begin() + (w + 1) * L);
            if (ds.has_power()) {
                std::vector<double> agg_w(L);
                for (std::size_t l = 0; l < L; ++l) {
                    agg_w[l] = static_cast<double>(ds.window(w)[l]) * 1000.0;
                }
                const auto power = estimate_power(res.status, ens.profile(), agg_w);
                pred_power.insert(pred_power.end(), power.begin(), power.end());
                truth_power.insert(truth_power.end(),
                                   ds.appliance_power.begin() + w * L,
                                   ds.appliance_power.begin() + (w + 1) * L);
            }
        }
    }
    ev.status = status_scores(pred_status, truth_status);
    if (ds.has_power()) {
        ev.energy = energy_scores(pred_power, truth_power);
        ev.has_energy = true;
    }
    ev.detection_ba = balanced_accuracy(ev.detection);
    ev.detection_scores = scores_from_counts(ev.detection);
    return ev;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::ordered_json counts_to_json(const ConfusionCounts& c) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline nlohmann::ordered_json class_scores_to_json(const ClassScores& s) {
    return {{"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"counts", counts_to_json(s.counts)}};
}

inline nlohmann::ordered_json train_report_to_json(const TrainReport& r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json cands = nlohmann::ordered_json::array();
    for (const auto& c : r.candidates) {
        cands.push_back({{"kernel_size", c.kernel_size},
                         {"trial", c.trial},
                         {"seed", c.seed},
                         {"val_sub_loss", c.val_sub_loss},
                         {"val_loss", c.val_loss},
                         {"epochs_run", c.epochs_run},
                         {"selected", c.selected}});
    }
    j["candidates"] = std::move(cands);
    j["train_sub_windows"] = r.train_sub_windows;
    j["val_sub_windows"] = r.val_sub_windows;
    j["wall_seconds"] = r.wall_seconds;
    return j;
}

inline nlohmann::ordered_json localization_eval_to_json(const LocalizationEval& ev) {
    nlohmann::ordered_json j;
    j["detection"] = {{"balanced_accuracy", ev.detection_ba},
                      {"f1", ev.detection_scores.f1},
                      {"precision", ev.detection_scores.precision},
                      {"recall", ev.detection_scores.recall},
                      {"counts", counts_to_json(ev.detection)}};
    j["localization"] = class_scores_to_json(ev.status);
    if (ev.has_energy) {
        j["energy"] = {{"mae_w", ev.energy.mae},
                       {"rmse_w", ev.energy.rmse},
                       {"matching_ratio", ev.energy.matching_ratio}};
    }
    return j;
}

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::ordered_json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(2) << '\n';
    if (!os) throw DataError("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path.string());
    try {
        nlohmann::json j;
        is >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

} // namespace camloc
