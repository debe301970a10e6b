#pragma once

// Preprocessing: resampling onto a fixed grid, bounded forward-fill,
// ground-truth status derivation, tumbling-window slicing with kW
// scaling, class balancing, and house-level splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "camloc/errors.hpp"
#include "camloc/rng.hpp"
#include "camloc/series.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

// Fixed-length windows ready for the classifier. Window values are the
// aggregate divided by 1000 (kW). strong_status and appliance_power are
// carried only when ground truth is available; they are evaluation
// data, never training inputs.
struct WindowDataset {
    std::size_t window_length = 510;
    std::vector<float> windows;              // (N, L) flattened, kW
    std::vector<std::uint8_t> weak_labels;   // per window
    std::vector<std::uint8_t> strong_status; // (N, L) or empty
    std::vector<double> appliance_power;     // (N, L) Watts or empty
    std::vector<std::string> house_ids;      // per window
    std::vector<std::int64_t> start_ts;      // per window

    std::size_t num_windows() const { return weak_labels.size(); }
    bool has_strong() const { return !strong_status.empty(); }
    bool has_power() const { return !appliance_power.empty(); }

    const float* window(std::size_t i) const {
        return windows.data() + i * window_length;
    }

    // (B, 1, L) batch tensor for the listed window indices.
    Tensor<float> batch(const std::vector<std::size_t>& idx) const {
        Tensor<float> t(idx.size(), 1, window_length);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            std::copy(window(idx[b]), window(idx[b]) + window_length,
                      t.data() + b * window_length);
        }
        return t;
    }

    std::array<std::size_t, 2> class_counts() const {
        std::array<std::size_t, 2> c{0, 0};
        for (auto l : weak_labels) c[l ? 1 : 0]++;
        return c;
    }

    void append(const WindowDataset& other) {
        if (other.num_windows() == 0) return;
        if (num_windows() == 0) {
            window_length = other.window_length;
        } else if (window_length != other.window_length) {
            throw DataError("window dataset append: length " +
                            std::to_string(other.window_length) + " vs " +
                            std::to_string(window_length));
        }
        if (num_windows() > 0 &&
            (has_strong() != other.has_strong() || has_power() != other.has_power())) {
            throw DataError("window dataset append: mixed ground-truth presence");
        }
        windows.insert(windows.end(), other.windows.begin(), other.windows.end());
        weak_labels.insert(weak_labels.end(), other.weak_labels.begin(),
                           other.weak_labels.end());
        strong_status.insert(strong_status.end(), other.strong_status.begin(),
                             other.strong_status.end());
        appliance_power.insert(appliance_power.end(), other.appliance_power.begin(),
                               other.appliance_power.end());
        house_ids.insert(house_ids.end(), other.house_ids.begin(),
                         other.house_ids.end());
        start_ts.insert(start_ts.end(), other.start_ts.begin(), other.start_ts.end());
    }

    WindowDataset select(const std::vector<std::size_t>& idx) const {
        WindowDataset out;
        out.window_length = window_length;
        const std::size_t L = window_length;
        for (std::size_t i : idx) {
            out.windows.insert(out.windows.end(), window(i), window(i) + L);
            out.weak_labels.push_back(weak_labels[i]);
            if (has_strong()) {
                out.strong_status.insert(out.strong_status.end(),
                                         strong_status.begin() + i * L,
                                         strong_status.begin() + (i + 1) * L);
            }
            if (has_power()) {
                out.appliance_power.insert(out.appliance_power.end(),
                                           appliance_power.begin() + i * L,
                                           appliance_power.begin() + (i + 1) * L);
            }
            out.house_ids.push_back(house_ids[i]);
            out.start_ts.push_back(start_ts[i]);
        }
        return out;
    }
};

// Mean of raw readings per [t, t+dt) bin; empty bins become missing.
inline PowerSeries resample(const PowerSeries& raw, std::int64_t target_dt) {
    if (target_dt <= 0) throw ConfigError("resample: interval must be positive");
    raw.check_sorted();
    PowerSeries out;
    out.house_id = raw.house_id;
    out.interval_s = target_dt;
    if (raw.size() == 0) return out;

    auto bin_of = [&](std::int64_t ts) {
        std::int64_t b = ts / target_dt;
        if (ts < 0 && ts % target_dt != 0) --b; // floor toward -inf
        return b;
    };
    const std::int64_t first_bin = bin_of(raw.timestamps.front());
    const std::int64_t last_bin = bin_of(raw.timestamps.back());
    const std::size_t n_bins = static_cast<std::size_t>(last_bin - first_bin + 1);
    std::vector<double> sums(n_bins, 0.0);
    std::vector<std::size_t> counts(n_bins, 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (is_missing(raw.values[i])) continue;
        const std::size_t b =
            static_cast<std::size_t>(bin_of(raw.timestamps[i]) - first_bin);
        sums[b] += raw.values[i];
        counts[b]++;
    }
    out.timestamps.resize(n_bins);
    out.values.resize(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        out.timestamps[b] = (first_bin + static_cast<std::int64_t>(b)) * target_dt;
        out.values[b] =
            counts[b] > 0 ? sums[b] / static_cast<double>(counts[b]) : kMissing;
    }
    return out;
}

// Fills missing runs whose total duration is within max_ffill with the
// last observed value. A run longer than the limit is left entirely
// unfilled, and so are leading missings (nothing to propagate).
inline PowerSeries forward_fill(const PowerSeries& s, std::int64_t max_ffill_s) {
    if (s.interval_s <= 0) {
        throw DataError("forward_fill: series must be resampled first");
    }
    PowerSeries out = s;
    const std::size_t n = out.size();
    std::size_t i = 0;
    while (i < n) {
        if (!is_missing(out.values[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && is_missing(out.values[j])) ++j;
        const std::int64_t run_duration =
            static_cast<std::int64_t>(j - i) * s.interval_s;
        if (i > 0 && run_duration <= max_ffill_s) {
            for (std::size_t k = i; k < j; ++k) out.values[k] = out.values[i - 1];
        }
        i = j;
    }
    return out;
}

// status(t) = 1 iff power(t) >= on_threshold (inclusive).
inline StatusSeries derive_status(const PowerSeries& appliance_power,
                                  const ApplianceProfile& profile) {
    StatusSeries st;
    st.appliance = profile.name;
    st.values.resize(appliance_power.size());
    for (std::size_t i = 0; i < appliance_power.size(); ++i) {
        const double v = appliance_power.values[i];
        st.values[i] = (!is_missing(v) && v >= profile.on_threshold_w) ? 1 : 0;
    }
    return st;
}

// Tumbling windows of length L; the trailing remainder is dropped and
// any window containing a missing value is discarded. Values are
// divided by 1000. The weak label is the OR of the status within the
// window when status ground truth is supplied.
inline WindowDataset make_windows(const PowerSeries& agg,
                                  const StatusSeries* status,
                                  const PowerSeries* appliance_power,
                                  std::size_t L = 510) {
    if (L == 0) throw ConfigError("make_windows: window length must be positive");
    if (status && status->values.size() != agg.size()) {
        throw DataError("make_windows: status length " +
                        std::to_string(status->values.size()) +
                        " does not match series length " + std::to_string(agg.size()));
    }
    if (appliance_power && appliance_power->size() != agg.size()) {
        throw DataError("make_windows: appliance power length mismatch");
    }
    WindowDataset out;
    out.window_length = L;
    const std::size_t n_windows = agg.size() / L;
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t off = w * L;
        bool complete = true;
        for (std::size_t l = 0; l < L; ++l) {
            if (is_missing(agg.values[off + l])) {
                complete = false;
                break;
            }
        }
        if (!complete) continue;
        for (std::size_t l = 0; l < L; ++l) {
            out.windows.push_back(static_cast<float>(agg.values[off + l] / 1000.0));
        }
        std::uint8_t weak = 0;
        if (status) {
            for (std::size_t l = 0; l < L; ++l) {
                if (status->values[off + l]) {
                    weak = 1;
                    break;
                }
            }
            out.strong_status.insert(out.strong_status.end(),
                                     status->values.begin() + off,
                                     status->values.begin() + off + L);
        }
        if (appliance_power) {
            out.appliance_power.insert(out.appliance_power.end(),
                                       appliance_power->values.begin() + off,
                                       appliance_power->values.begin() + off + L);
        }
        out.weak_labels.push_back(weak);
        out.house_ids.push_back(agg.house_id);
        out.start_ts.push_back(agg.timestamps[off]);
    }
    return out;
}

// Possession-only labelling: every complete window of the house carries
// the household's possession label; no per-timestamp truth is attached.
inline WindowDataset broadcast_possession_label(const PowerSeries& house_series,
                                                int possession, std::size_t L) {
    if (possession != 0 && possession != 1) {
        throw DataError("broadcast_possession_label: possession must be 0 or 1");
    }
    WindowDataset out = make_windows(house_series, nullptr, nullptr, L);
    std::fill(out.weak_labels.begin(), out.weak_labels.end(),
              static_cast<std::uint8_t>(possession));
    return out;
}

// Randomly undersamples the majority class until both classes have the
// same count. Window order of the survivors is preserved.
inline WindowDataset balance_undersample(const WindowDataset& d, std::uint64_t seed) {
    const auto counts = d.class_counts();
    if (counts[0] == 0 || counts[1] == 0) {
        throw DataError("balance_undersample: dataset has a single class (" +
                        std::to_string(counts[0]) + " neg / " +
                        std::to_string(counts[1]) + " pos)");
    }
    if (counts[0] == counts[1]) return d;
    const std::uint8_t majority = counts[1] > counts[0] ? 1 : 0;
    const std::size_t keep = std::min(counts[0], counts[1]);
    std::vector<std::size_t> majority_idx;
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < d.num_windows(); ++i) {
        if ((d.weak_labels[i] != 0) == (majority != 0)) {
            majority_idx.push_back(i);
        } else {
            selected.push_back(i);
        }
    }
    Rng rng = Rng::child(seed, 0xba1a4cedULL);
    rng.shuffle(majority_idx);
    majority_idx.resize(keep);
    selected.insert(selected.end(), majority_idx.begin(), majority_idx.end());
    std::sort(selected.begin(), selected.end());
    return d.select(selected);
}

struct HouseSplit {
    std::vector<std::string> train, validation, test;
};

// Seeded house-level split sized by largest-remainder apportionment.
// Houses are shuffled, then dealt contiguously. A split with a nonzero
// ratio is never left empty: if apportionment gives it zero houses, it
// takes one from the largest split.
inline HouseSplit split_houses(std::vector<std::string> houses,
                               std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split_houses: ratios must sum to 1");
    }
    for (double r : ratios) {
        if (r < 0) throw ConfigError("split_houses: negative ratio");
    }
    std::size_t wanted = 0;
    for (double r : ratios) {
        if (r > 0) ++wanted;
    }
    if (houses.size() < wanted) {
        throw DataError("split_houses: " + std::to_string(houses.size()) +
                        " houses cannot fill " + std::to_string(wanted) + " splits");
    }
    std::sort(houses.begin(), houses.end());
    Rng rng = Rng::child(seed, 0x5b1177edULL);
    rng.shuffle(houses);

    const std::size_t H = houses.size();
    std::array<std::size_t, 3> n{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = ratios[i] * static_cast<double>(H);
        n[i] = static_cast<std::size_t>(exact);
        frac[i] = exact - static_cast<double>(n[i]);
        assigned += n[i];
    }
    while (assigned < H) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (frac[i] > frac[best]) best = i;
        }
        n[best]++;
        frac[best] = -1;
        ++assigned;
    }
    for (int i = 0; i < 3; ++i) {
        while (ratios[i] > 0 && n[i] == 0) {
            int largest = 0;
            for (int j = 1; j < 3; ++j) {
                if (n[j] > n[largest]) largest = j;
            }
            n[largest]--;
            n[i]++;
        }
    }

    HouseSplit split;
    auto it = houses.begin();
    split.train.assign(it, it + n[0]);
    it += n[0];
    split.validation.assign(it, it + n[1]);
    it += n[1];
    split.test.assign(it, it + n[2]);
    return split;
}

} // namespace camloc
