#pragma once

// Window-level detection turned into per-timestamp status and power.
//
// For a detected window, each member's class-1 activation map is
// normalized by its own maximum (negatives kept; a map with no positive
// value becomes all zeros), the normalized maps are averaged, and each
// timestamp is switched ON where sigmoid(cam(t) * x(t)) rounds to 1.
// The default comparison is strict (cam * x > 0), which keeps
// zero-power timestamps OFF; Binarize::round_half_up restores the
// literal sigmoid >= 0.5 rounding. An undetected window is all zeros,
// unconditionally.
//
// Status becomes Watts as min(status * mean_on_power, aggregate),
// against the raw (unscaled) aggregate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "camloc/dataproc.hpp"
#include "camloc/ensemble.hpp"
#include "camloc/errors.hpp"
#include "camloc/series.hpp"
#include "camloc/tensor.hpp"

namespace camloc {

struct CamMap {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Divide by the maximum when it is positive, preserving negative
// entries; a map whose maximum is <= 0 carries no positive evidence and
// becomes all zeros.
inline CamMap normalize_cam(const CamMap& raw) {
    CamMap out;
    out.values.resize(raw.values.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : raw.values) mx = std::max(mx, v);
    if (!(mx > 0)) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        out.values[i] = raw.values[i] / mx;
    }
    return out;
}

inline CamMap aggregate_cams(const std::vector<CamMap>& maps) {
    if (maps.empty()) throw DataError("aggregate_cams: no maps");
    const std::size_t L = maps.front().size();
    for (const auto& m : maps) {
        if (m.size() != L) {
            throw DataError("aggregate_cams: map length " + std::to_string(m.size()) +
                            " differs from " + std::to_string(L));
        }
    }
    CamMap out;
    out.values.assign(L, 0.0);
    for (const auto& m : maps) {
        for (std::size_t i = 0; i < L; ++i) out.values[i] += m.values[i];
    }
    for (std::size_t i = 0; i < L; ++i) {
        out.values[i] /= static_cast<double>(maps.size());
    }
    return out;
}

enum class Binarize {
    strict,        // ON iff cam * x > 0
    round_half_up, // ON iff sigmoid(cam * x) >= 0.5, i.e. cam * x >= 0
};

// window_kw must be the same kW-scaled series the ensemble saw.
inline StatusSeries attention_binarize(const CamMap& cam_ens,
                                       const std::vector<float>& window_kw,
                                       Binarize mode = Binarize::strict) {
    if (cam_ens.size() != window_kw.size()) {
        throw DataError("attention_binarize: cam length " +
                        std::to_string(cam_ens.size()) + " vs window length " +
                        std::to_string(window_kw.size()));
    }
    StatusSeries st;
    st.values.resize(window_kw.size());
    for (std::size_t i = 0; i < window_kw.size(); ++i) {
        const double product =
            cam_ens.values[i] * static_cast<double>(window_kw[i]);
        st.values[i] = (mode == Binarize::strict ? product > 0 : product >= 0) ? 1 : 0;
    }
    return st;
}

struct LocalizeResult {
    bool detected = false;
    double prob = 0;
    StatusSeries status;
    CamMap cam; // aggregated normalized map; empty when not detected
};

// Full pipeline over a batch of windows: detect, then CAM -> normalize
// -> aggregate -> binarize, per window. Detection gates everything: an
// undetected window yields all-zero status no matter what the maps say.
inline std::vector<LocalizeResult> localize_batch(const Ensemble& ens,
                                                  const Tensor<float>& batch,
                                                  Binarize mode = Binarize::strict) {
    ens.check_window(batch);
    const std::size_t B = batch.batch();
    const std::size_t L = batch.length();

    // member_probs[m][b], norm_maps[m * B + b]
    std::vector<std::vector<double>> member_probs(ens.size());
    std::vector<CamMap> norm_maps(ens.size() * B);
    for (std::size_t m = 0; m < ens.size(); ++m) {
        auto& model = *ens.members()[m].model;
        auto fwd = model.forward(batch, false);
        member_probs[m].resize(B);
        Tensor<float> raw = model.cam(fwd.features, 1);
        for (std::size_t b = 0; b < B; ++b) {
            member_probs[m][b] = fwd.probs(b, 1, 0);
            CamMap map;
            map.values.assign(raw.data() + b * L, raw.data() + (b + 1) * L);
            norm_maps[m * B + b] = normalize_cam(map);
        }
    }

    std::vector<LocalizeResult> results(B);
    std::vector<double> probs(ens.size());
    std::vector<CamMap> maps(ens.size());
    for (std::size_t b = 0; b < B; ++b) {
        LocalizeResult& res = results[b];
        res.status.appliance = ens.appliance();
        for (std::size_t m = 0; m < ens.size(); ++m) probs[m] = member_probs[m][b];
        res.prob = detail::canonical_mean(probs);
        res.detected = res.prob > ens.threshold();
        if (!res.detected) {
            res.status.values.assign(L, 0);
            continue;
        }
        for (std::size_t m = 0; m < ens.size(); ++m) {
            maps[m] = std::move(norm_maps[m * B + b]);
        }
        res.cam = aggregate_cams(maps);
        std::vector<float> window_kw(batch.data() + b * L, batch.data() + (b + 1) * L);
        res.status = attention_binarize(res.cam, window_kw, mode);
        res.status.appliance = ens.appliance();
    }
    return results;
}

inline LocalizeResult localize(const Ensemble& ens, const Tensor<float>& window,
                               Binarize mode = Binarize::strict) {
    if (window.batch() != 1) {
        throw DataError("localize: expected a single window, got batch " +
                        std::to_string(window.batch()));
    }
    return std::move(localize_batch(ens, window, mode).front());
}

// min(status * mean_on_power, aggregate) in Watts against the raw
// aggregate series.
inline std::vector<double> estimate_power(const StatusSeries& status,
                                          const ApplianceProfile& profile,
                                          const std::vector<double>& aggregate_w) {
    if (status.values.size() != aggregate_w.size()) {
        throw DataError("estimate_power: status length " +
                        std::to_string(status.values.size()) +
                        " vs aggregate length " +
                        std::to_string(aggregate_w.size()));
    }
    std::vector<double> out(status.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (aggregate_w[i] < 0) {
            throw DataError("estimate_power: negative aggregate at index " +
                            std::to_string(i));
        }
        out[i] = status.values[i]
                     ? std::min(profile.mean_power_w, aggregate_w[i])
                     : 0.0;
    }
    return out;
}

} // namespace camloc
