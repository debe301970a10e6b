#pragma once

// Candidate training and ensemble selection.
//
// train_ensemble splits the training windows 80/20 (stratified by weak
// label) into train-sub and val-sub, trains one candidate network per
// (kernel size, trial) pair with early stopping on val-sub, scores every
// candidate on the held-out validation houses, and keeps the n
// candidates with the lowest validation loss (ties broken by lower
// (kernel, trial)).
//
// Candidates carry pre-assigned seeds derived from (master seed, kernel,
// trial), so results are identical no matter how many worker threads run
// them or in which order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "camloc/dataproc.hpp"
#include "camloc/errors.hpp"
#include "camloc/metrics.hpp"
#include "camloc/model_io.hpp"
#include "camloc/optimizer.hpp"
#include "camloc/resnet.hpp"
#include "camloc/rng.hpp"

namespace camloc {

struct TrainConfig {
    std::vector<std::size_t> kernel_sizes{5, 7, 9, 15, 25};
    std::size_t trials = 3;
    std::size_t ensemble_size = 5;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double min_delta = 1e-3;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double detection_threshold = 0.5;
    std::size_t num_workers = 1;
    std::uint64_t seed = 1;

    std::size_t num_candidates() const { return kernel_sizes.size() * trials; }

    void validate() const {
        if (kernel_sizes.empty()) throw ConfigError("train: empty kernel set");
        for (std::size_t k : kernel_sizes) {
            if (k < 1) throw ConfigError("train: kernel size must be >= 1");
        }
        if (trials < 1) throw ConfigError("train: trials must be >= 1");
        if (ensemble_size < 1) throw ConfigError("train: ensemble size must be >= 1");
        if (ensemble_size > num_candidates()) {
            throw ConfigError("train: ensemble size " +
                              std::to_string(ensemble_size) + " exceeds the " +
                              std::to_string(num_candidates()) + " candidates");
        }
        if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("train: learning rate must be > 0");
        if (min_delta < 0) throw ConfigError("train: min_delta must be >= 0");
        if (num_workers < 1) throw ConfigError("train: num_workers must be >= 1");
    }
};

struct CandidateSummary {
    std::size_t kernel_size = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    double val_sub_loss = 0;  // best early-stopping loss
    double val_loss = 0;      // selection loss on the validation houses
    std::size_t epochs_run = 0;
    bool selected = false;
};

struct TrainReport {
    std::vector<CandidateSummary> candidates;
    std::size_t train_sub_windows = 0;
    std::size_t val_sub_windows = 0;
    double wall_seconds = 0;
};

namespace detail {

// Mean of the values summed in ascending order in double precision:
// one canonical summation order, so the result is bit-identical no
// matter how the inputs were ordered.
inline double canonical_mean(std::vector<double> values) {
    if (values.empty()) throw DataError("canonical_mean: empty input");
    std::sort(values.begin(), values.end());
    double sum = 0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

template <class T>
struct ModelSnapshot {
    std::vector<T> params;
    std::vector<T> buffers;
};

template <class T>
ModelSnapshot<T> take_snapshot(ResNet<T>& model) {
    ModelSnapshot<T> s;
    for (const auto& p : model.params()) {
        s.params.insert(s.params.end(), p.value, p.value + p.size);
    }
    for (const auto& b : model.buffers()) {
        s.buffers.insert(s.buffers.end(), b.value, b.value + b.size);
    }
    return s;
}

template <class T>
void restore_snapshot(ResNet<T>& model, const ModelSnapshot<T>& s) {
    std::size_t off = 0;
    for (const auto& p : model.params()) {
        std::copy(s.params.begin() + off, s.params.begin() + off + p.size, p.value);
        off += p.size;
    }
    off = 0;
    for (const auto& b : model.buffers()) {
        std::copy(s.buffers.begin() + off, s.buffers.begin() + off + b.size, b.value);
        off += b.size;
    }
}

inline std::vector<int> labels_for(const WindowDataset& d,
                                   const std::vector<std::size_t>& idx) {
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        labels[i] = d.weak_labels[idx[i]] ? 1 : 0;
    }
    return labels;
}

// Mean NLL over the listed windows, eval mode.
template <class T>
double dataset_loss(ResNet<T>& model, const WindowDataset& d,
                    const std::vector<std::size_t>& idx, std::size_t batch_size) {
    double total = 0;
    std::size_t done = 0;
    while (done < idx.size()) {
        const std::size_t take = std::min(batch_size, idx.size() - done);
        std::vector<std::size_t> part(idx.begin() + done, idx.begin() + done + take);
        const double loss =
            model.loss_forward(d.batch(part), labels_for(d, part), false);
        total += loss * static_cast<double>(take);
        done += take;
    }
    return total / static_cast<double>(idx.size());
}

// 80/20 stratified index split; every class keeps at least one val-sub
// window.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const WindowDataset& d, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < d.num_windows(); ++i) {
        (d.weak_labels[i] ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw DataError("train: training windows contain a single class (" +
                        std::to_string(neg.size()) + " neg / " +
                        std::to_string(pos.size()) + " pos)");
    }
    Rng rng = Rng::child(seed, 0x5714a7ULL, 0x80);
    std::vector<std::size_t> train_idx, val_idx;
    for (auto* cls : {&neg, &pos}) {
        rng.shuffle(*cls);
        const std::size_t val_n = std::max<std::size_t>(1, cls->size() / 5);
        if (val_n >= cls->size()) {
            throw DataError("train: a class has too few windows (" +
                            std::to_string(cls->size()) +
                            ") for an 80/20 split");
        }
        val_idx.insert(val_idx.end(), cls->begin(), cls->begin() + val_n);
        train_idx.insert(train_idx.end(), cls->begin() + val_n, cls->end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    return {std::move(train_idx), std::move(val_idx)};
}

} // namespace detail

// Trains one network on the given index split, early-stopping on
// val-sub loss and restoring the best-epoch weights.
template <class T = float>
std::unique_ptr<ResNet<T>> train_candidate(
    const WindowDataset& data, const std::vector<std::size_t>& train_idx,
    const std::vector<std::size_t>& val_idx, const ResNetSpec& spec,
    std::uint64_t candidate_seed, const TrainConfig& cfg,
    double* best_val_sub_loss = nullptr, std::size_t* epochs_out = nullptr) {
    auto model = std::make_unique<ResNet<T>>(spec, candidate_seed);
    Adam<T> adam(model->params(), cfg.learning_rate);
    Rng shuffle_rng = Rng::child(candidate_seed, 0xe60c45ULL);

    double best_loss = std::numeric_limits<double>::infinity();
    detail::ModelSnapshot<T> best_snapshot;
    std::size_t epochs_since_improve = 0;
    std::size_t epochs_run = 0;
    std::vector<std::size_t> order(train_idx);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            const std::size_t take = std::min(cfg.batch_size, order.size() - off);
            std::vector<std::size_t> part(order.begin() + off,
                                          order.begin() + off + take);
            model->loss_forward(data.batch(part), detail::labels_for(data, part),
                                true);
            model->backward();
            adam.step();
        }
        ++epochs_run;
        const double val_loss =
            detail::dataset_loss(*model, data, val_idx, cfg.batch_size);
        if (val_loss < best_loss - cfg.min_delta) {
            best_loss = val_loss;
            best_snapshot = detail::take_snapshot(*model);
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (epochs_since_improve >= cfg.patience) break;
        }
    }
    if (!best_snapshot.params.empty()) {
        detail::restore_snapshot(*model, best_snapshot);
    }
    model->epochs_run = epochs_run;
    if (best_val_sub_loss) {
        *best_val_sub_loss = std::isfinite(best_loss)
                                 ? best_loss
                                 : detail::dataset_loss(*model, data, val_idx,
                                                        cfg.batch_size);
    }
    if (epochs_out) *epochs_out = epochs_run;
    return model;
}

class Ensemble {
public:
    struct Member {
        std::unique_ptr<ResNet<float>> model;
        std::size_t kernel_size = 0;
        std::size_t trial = 0;
        double val_loss = 0;
    };

    Ensemble() = default;
    Ensemble(std::vector<Member> members, std::string appliance,
             ApplianceProfile profile, std::size_t input_length,
             double threshold = 0.5, std::int64_t input_interval_s = 60)
        : members_(std::move(members)), appliance_(std::move(appliance)),
          profile_(std::move(profile)), input_length_(input_length),
          threshold_(threshold), input_interval_s_(input_interval_s) {
        std::stable_sort(members_.begin(), members_.end(),
                         [](const Member& a, const Member& b) {
                             return a.val_loss < b.val_loss;
                         });
    }

    std::size_t size() const { return members_.size(); }
    const std::vector<Member>& members() const { return members_; }
    std::vector<Member>& members() { return members_; }
    const std::string& appliance() const { return appliance_; }
    const ApplianceProfile& profile() const { return profile_; }
    std::size_t input_length() const { return input_length_; }
    double threshold() const { return threshold_; }
    std::int64_t input_interval_s() const { return input_interval_s_; }

    void check_window(const Tensor<float>& window) const {
        if (members_.empty()) throw StateError("ensemble: no members");
        if (window.channels() != 1 || window.length() != input_length_) {
            throw DataError("ensemble: window shape " + window.shape_str() +
                            " does not match training length " +
                            std::to_string(input_length_));
        }
    }

    // Class-1 probability of each member for each window in the batch,
    // indexed [member][window].
    std::vector<std::vector<double>> member_probabilities(
        const Tensor<float>& batch) const {
        check_window(batch);
        std::vector<std::vector<double>> probs(members_.size());
        for (std::size_t m = 0; m < members_.size(); ++m) {
            auto r = members_[m].model->forward(batch, false);
            probs[m].resize(batch.batch());
            for (std::size_t n = 0; n < batch.batch(); ++n) {
                probs[m][n] = r.probs(n, 1, 0);
            }
        }
        return probs;
    }

    // Arithmetic mean of member class-1 probabilities. Computed in
    // double with the addends sorted ascending, so the value does not
    // depend on member order.
    double probability(const Tensor<float>& window) const {
        const auto probs = member_probabilities(window);
        std::vector<double> member_probs(members_.size());
        for (std::size_t m = 0; m < members_.size(); ++m) {
            member_probs[m] = probs[m][0];
        }
        return detail::canonical_mean(std::move(member_probs));
    }

    std::vector<double> probabilities(const Tensor<float>& batch) const {
        const auto probs = member_probabilities(batch);
        std::vector<double> out(batch.batch());
        std::vector<double> tmp(members_.size());
        for (std::size_t n = 0; n < batch.batch(); ++n) {
            for (std::size_t m = 0; m < members_.size(); ++m) tmp[m] = probs[m][n];
            out[n] = detail::canonical_mean(tmp);
        }
        return out;
    }

    // Detected iff probability strictly exceeds the threshold.
    std::pair<bool, double> detect(const Tensor<float>& window) const {
        const double p = probability(window);
        return {p > threshold_, p};
    }

    // Window-level detection confusion against weak labels.
    ConfusionCounts detection_counts(const WindowDataset& d,
                                     std::size_t batch_size = 64) const {
        ConfusionCounts c;
        std::size_t done = 0;
        std::vector<std::size_t> idx;
        while (done < d.num_windows()) {
            const std::size_t take = std::min(batch_size, d.num_windows() - done);
            idx.resize(take);
            for (std::size_t i = 0; i < take; ++i) idx[i] = done + i;
            const auto probs = probabilities(d.batch(idx));
            for (std::size_t i = 0; i < take; ++i) {
                const bool pred = probs[i] > threshold_;
                const bool truth = d.weak_labels[done + i] != 0;
                if (pred && truth) c.tp++;
                else if (pred && !truth) c.fp++;
                else if (!pred && truth) c.fn++;
                else c.tn++;
            }
            done += take;
        }
        return c;
    }

    void save(const std::filesystem::path& dir) const;
    static Ensemble load(const std::filesystem::path& dir);

private:
    std::vector<Member> members_;
    std::string appliance_;
    ApplianceProfile profile_;
    std::size_t input_length_ = 0;
    double threshold_ = 0.5;
    std::int64_t input_interval_s_ = 60;
};

inline Ensemble train_ensemble(const WindowDataset& train,
                               const WindowDataset& validation,
                               const TrainConfig& cfg,
                               const ApplianceProfile& profile,
                               TrainReport* report = nullptr,
                               std::int64_t input_interval_s = 60) {
    cfg.validate();
    profile.validate();
    const auto train_counts = train.class_counts();
    const auto val_counts = validation.class_counts();
    if (train_counts[0] == 0 || train_counts[1] == 0) {
        throw DataError("train: training set has a single class (" +
                        std::to_string(train_counts[0]) + " neg / " +
                        std::to_string(train_counts[1]) + " pos)");
    }
    if (val_counts[0] == 0 || val_counts[1] == 0) {
        throw DataError("train: validation set has a single class (" +
                        std::to_string(val_counts[0]) + " neg / " +
                        std::to_string(val_counts[1]) + " pos)");
    }
    if (train.window_length != validation.window_length) {
        throw DataError("train: train and validation window lengths differ");
    }

    const auto [train_idx, val_idx] = detail::stratified_split(train, cfg.seed);
    std::vector<std::size_t> validation_idx(validation.num_windows());
    for (std::size_t i = 0; i < validation_idx.size(); ++i) validation_idx[i] = i;

    struct Slot {
        std::unique_ptr<ResNet<float>> model;
        CandidateSummary summary;
        std::exception_ptr error;
    };
    std::vector<Slot> slots(cfg.num_candidates());
    {
        std::size_t c = 0;
        for (std::size_t k : cfg.kernel_sizes) {
            for (std::size_t t = 0; t < cfg.trials; ++t) {
                slots[c].summary.kernel_size = k;
                slots[c].summary.trial = t;
                slots[c].summary.seed = hash_seed(cfg.seed, k, t);
                ++c;
            }
        }
    }

    const auto t_start = std::chrono::steady_clock::now();
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= slots.size()) return;
            Slot& slot = slots[c];
            try {
                ResNetSpec spec;
                spec.kernel_size = slot.summary.kernel_size;
                slot.model = train_candidate<float>(
                    train, train_idx, val_idx, spec, slot.summary.seed, cfg,
                    &slot.summary.val_sub_loss, &slot.summary.epochs_run);
                slot.summary.val_loss = detail::dataset_loss(
                    *slot.model, validation, validation_idx, cfg.batch_size);
                slot.model->best_val_loss = slot.summary.val_loss;
            } catch (...) {
                slot.error = std::current_exception();
            }
        }
    };
    const std::size_t n_workers = std::min(cfg.num_workers, slots.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (auto& slot : slots) {
        if (slot.error) std::rethrow_exception(slot.error);
    }

    std::vector<std::size_t> order(slots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& sa = slots[a].summary;
        const auto& sb = slots[b].summary;
        return std::tie(sa.val_loss, sa.kernel_size, sa.trial) <
               std::tie(sb.val_loss, sb.kernel_size, sb.trial);
    });

    std::vector<Ensemble::Member> members;
    members.reserve(cfg.ensemble_size);
    for (std::size_t i = 0; i < cfg.ensemble_size; ++i) {
        Slot& slot = slots[order[i]];
        slot.summary.selected = true;
        members.push_back({std::move(slot.model), slot.summary.kernel_size,
                           slot.summary.trial, slot.summary.val_loss});
    }

    if (report) {
        report->candidates.clear();
        for (const auto& slot : slots) report->candidates.push_back(slot.summary);
        report->train_sub_windows = train_idx.size();
        report->val_sub_windows = val_idx.size();
        report->wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
    }
    return Ensemble(std::move(members), profile.name, profile, train.window_length,
                    cfg.detection_threshold, input_interval_s);
}

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

inline void Ensemble::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["format_version"] = kEnsembleFormatVersion;
    manifest["appliance"] = appliance_;
    manifest["detection_threshold"] = threshold_;
    manifest["input_length"] = input_length_;
    manifest["input_interval_s"] = input_interval_s_;
    manifest["profile"] = {{"name", profile_.name},
                           {"on_threshold_w", profile_.on_threshold_w},
                           {"mean_power_w", profile_.mean_power_w},
                           {"max_ffill_s", profile_.max_ffill_s}};
    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    for (std::size_t m = 0; m < members_.size(); ++m) {
        char name[32];
        std::snprintf(name, sizeof(name), "model_%02zu.bin", m);
        save_model(*members_[m].model, dir / name);
        members.push_back({{"file", name},
                           {"kernel_size", members_[m].kernel_size},
                           {"trial", members_[m].trial},
                           {"val_loss", members_[m].val_loss},
                           {"seed", members_[m].model->seed()},
                           {"epochs_run", members_[m].model->epochs_run}});
    }
    manifest["members"] = std::move(members);
    std::ofstream os(dir / "ensemble.json", std::ios::trunc);
    if (!os) throw FormatError("cannot write " + (dir / "ensemble.json").string());
    os << manifest.dump(2) << '\n';
}

inline Ensemble Ensemble::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "ensemble.json";
    std::ifstream is(manifest_path);
    if (!is) throw FormatError("cannot open " + manifest_path.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": malformed manifest: " +
                          e.what());
    }
    if (manifest.at("format_version").get<std::uint32_t>() !=
        kEnsembleFormatVersion) {
        throw FormatError(manifest_path.string() + ": unsupported format version");
    }
    ApplianceProfile profile;
    const auto& jp = manifest.at("profile");
    profile.name = jp.at("name").get<std::string>();
    profile.on_threshold_w = jp.at("on_threshold_w").get<double>();
    profile.mean_power_w = jp.at("mean_power_w").get<double>();
    profile.max_ffill_s = jp.at("max_ffill_s").get<std::int64_t>();

    std::vector<Member> members;
    for (const auto& jm : manifest.at("members")) {
        Member m;
        m.kernel_size = jm.at("kernel_size").get<std::size_t>();
        m.trial = jm.at("trial").get<std::size_t>();
        m.val_loss = jm.at("val_loss").get<double>();
        m.model = std::make_unique<ResNet<float>>(
            load_model<float>(dir / jm.at("file").get<std::string>()));
        members.push_back(std::move(m));
    }
    return Ensemble(std::move(members), manifest.at("appliance").get<std::string>(),
                    profile, manifest.at("input_length").get<std::size_t>(),
                    manifest.at("detection_threshold").get<double>(),
                    manifest.at("input_interval_s").get<std::int64_t>());
}

} // namespace camloc
