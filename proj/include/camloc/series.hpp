#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "camloc/errors.hpp"

namespace camloc {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// Regularly or irregularly sampled power readings in Watts. NaN marks a
// missing reading. interval_s is 0 until the series has been resampled
// onto a fixed grid.
struct PowerSeries {
    std::string house_id;
    std::vector<std::int64_t> timestamps; // epoch seconds, strictly increasing
    std::vector<double> values;           // Watts; NaN = missing
    std::int64_t interval_s = 0;

    std::size_t size() const { return timestamps.size(); }

    void check_sorted() const {
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            if (timestamps[i] <= timestamps[i - 1]) {
                throw DataError("series " + house_id +
                                ": timestamps not strictly increasing at index " +
                                std::to_string(i));
            }
        }
        if (timestamps.size() != values.size()) {
            throw DataError("series " + house_id + ": " +
                            std::to_string(timestamps.size()) + " timestamps vs " +
                            std::to_string(values.size()) + " values");
        }
    }
};

// Per-timestamp ON/OFF states for one appliance.
struct StatusSeries {
    std::string appliance;
    std::vector<std::uint8_t> values; // 0 or 1 only
};

struct ApplianceProfile {
    std::string name;
    double on_threshold_w = 0;
    double mean_power_w = 0;
    std::int64_t max_ffill_s = 0;

    void validate() const {
        if (name.empty()) throw ConfigError("appliance profile: empty name");
        if (!(on_threshold_w > 0)) {
            throw ConfigError("appliance profile '" + name +
                              "': on_threshold_w must be > 0");
        }
        if (on_threshold_w > mean_power_w) {
            throw ConfigError("appliance profile '" + name +
                              "': on_threshold_w exceeds mean_power_w");
        }
        if (max_ffill_s < 0) {
            throw ConfigError("appliance profile '" + name +
                              "': max_ffill_s must be >= 0");
        }
    }
};

} // namespace camloc
