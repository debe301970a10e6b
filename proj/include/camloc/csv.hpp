#pragma once

// CSV ingestion and emission.
//
// Input contract: UTF-8, header row required, columns
//   timestamp,aggregate_w[,appliance_w]
// Timestamps are epoch seconds or ISO-8601 (YYYY-MM-DDTHH:MM:SS, optional
// trailing Z, 'T' or space separator), interpreted as UTC. An empty field
// or "nan" is a missing reading.

#include <cctype>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "camloc/errors.hpp"
#include "camloc/series.hpp"

namespace camloc {

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (std::isspace(static_cast<unsigned char>(s[a])) != 0)) ++a;
    while (b > a && (std::isspace(static_cast<unsigned char>(s[b - 1])) != 0)) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            fields.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return fields;
}

} // namespace detail

// Epoch seconds from either an integer literal or an ISO-8601 datetime.
inline std::int64_t parse_timestamp(const std::string& field,
                                    const std::string& context) {
    int y, mo, d, h, mi, s;
    char sep;
    if (std::sscanf(field.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep,
                    &h, &mi, &s) == 7 &&
        (sep == 'T' || sep == ' ')) {
        if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
            throw DataError(context + ": invalid datetime '" + field + "'");
        }
        return detail::days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
    }
    char* end = nullptr;
    const long long v = std::strtoll(field.c_str(), &end, 10);
    if (end == field.c_str() || *end != '\0') {
        throw DataError(context + ": cannot parse timestamp '" + field + "'");
    }
    return static_cast<std::int64_t>(v);
}

inline double parse_power_field(const std::string& field, const std::string& context) {
    if (field.empty() || field == "nan" || field == "NaN" || field == "NAN") {
        return kMissing;
    }
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
        throw DataError(context + ": cannot parse power value '" + field + "'");
    }
    return v;
}

struct HouseCsv {
    PowerSeries aggregate;
    std::optional<PowerSeries> appliance;
};

inline HouseCsv read_house_csv(const std::filesystem::path& path,
                               const std::string& house_id = "") {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    const std::string id = house_id.empty() ? path.stem().string() : house_id;

    std::string line;
    if (!std::getline(is, line)) {
        throw DataError(path.string() + ": empty file (header row required)");
    }
    auto header = detail::split_csv_line(line);
    const bool has_appliance = header.size() == 3 && header[2] == "appliance_w";
    if (header.size() < 2 || header[0] != "timestamp" || header[1] != "aggregate_w" ||
        (header.size() == 3 && !has_appliance) || header.size() > 3) {
        throw DataError(path.string() +
                        ": header must be 'timestamp,aggregate_w[,appliance_w]'");
    }

    HouseCsv out;
    out.aggregate.house_id = id;
    if (has_appliance) {
        out.appliance.emplace();
        out.appliance->house_id = id;
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError(ctx + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        const std::int64_t ts = parse_timestamp(fields[0], ctx);
        out.aggregate.timestamps.push_back(ts);
        out.aggregate.values.push_back(parse_power_field(fields[1], ctx));
        if (has_appliance) {
            out.appliance->timestamps.push_back(ts);
            out.appliance->values.push_back(parse_power_field(fields[2], ctx));
        }
    }
    out.aggregate.check_sorted();
    return out;
}

inline void write_house_csv(const std::filesystem::path& path,
                            const PowerSeries& aggregate,
                            const PowerSeries* appliance = nullptr) {
    if (appliance && appliance->size() != aggregate.size()) {
        throw DataError("write_house_csv: aggregate and appliance lengths differ");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << (appliance ? "timestamp,aggregate_w,appliance_w\n"
                     : "timestamp,aggregate_w\n");
    char buf[64];
    for (std::size_t i = 0; i < aggregate.size(); ++i) {
        os << aggregate.timestamps[i] << ',';
        if (!is_missing(aggregate.values[i])) {
            std::snprintf(buf, sizeof(buf), "%.4f", aggregate.values[i]);
            os << buf;
        }
        if (appliance) {
            os << ',';
            if (!is_missing(appliance->values[i])) {
                std::snprintf(buf, sizeof(buf), "%.4f", appliance->values[i]);
                os << buf;
            }
        }
        os << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

inline void write_status_csv(const std::filesystem::path& path,
                             const std::vector<std::int64_t>& timestamps,
                             const StatusSeries& status) {
    if (timestamps.size() != status.values.size()) {
        throw DataError("write_status_csv: timestamp/status length mismatch");
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "timestamp,status\n";
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        os << timestamps[i] << ',' << int(status.values[i]) << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

inline std::pair<std::vector<std::int64_t>, StatusSeries> read_status_csv(
    const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) ||
        detail::split_csv_line(line) != std::vector<std::string>{"timestamp", "status"}) {
        throw DataError(path.string() + ": header must be 'timestamp,status'");
    }
    std::vector<std::int64_t> ts;
    StatusSeries st;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 2) throw DataError(ctx + ": expected 2 fields");
        ts.push_back(parse_timestamp(fields[0], ctx));
        if (fields[1] != "0" && fields[1] != "1") {
            throw DataError(ctx + ": status must be 0 or 1, got '" + fields[1] + "'");
        }
        st.values.push_back(fields[1] == "1" ? 1 : 0);
    }
    return {std::move(ts), std::move(st)};
}

// One localization output row per covered timestamp.
struct PredictionRow {
    std::int64_t timestamp;
    double prob_ens;
    std::uint8_t status;
    double est_power_w;
};

inline void write_predictions_csv(const std::filesystem::path& path,
                                  const std::vector<PredictionRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os << "timestamp,prob_ens,status,est_power_w\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.9f,%d,%.4f", r.timestamp,
                      r.prob_ens, int(r.status), r.est_power_w);
        os << buf << '\n';
    }
    if (!os) throw DataError("write failed for " + path.string());
}

inline std::vector<PredictionRow> read_predictions_csv(
    const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) ||
        detail::split_csv_line(line) !=
            std::vector<std::string>{"timestamp", "prob_ens", "status",
                                     "est_power_w"}) {
        throw DataError(path.string() +
                        ": header must be 'timestamp,prob_ens,status,est_power_w'");
    }
    std::vector<PredictionRow> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 4) throw DataError(ctx + ": expected 4 fields");
        PredictionRow r;
        r.timestamp = parse_timestamp(fields[0], ctx);
        r.prob_ens = parse_power_field(fields[1], ctx);
        if (fields[2] != "0" && fields[2] != "1") {
            throw DataError(ctx + ": status must be 0 or 1");
        }
        r.status = fields[2] == "1" ? 1 : 0;
        r.est_power_w = parse_power_field(fields[3], ctx);
        rows.push_back(r);
    }
    return rows;
}

} // namespace camloc
