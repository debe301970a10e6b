#pragma once

// Versioned binary container for preprocessed window datasets, so a
// training rerun can skip CSV ingestion. Layout mirrors the model
// container: magic "CAMLOCDS", u32 format version, u32 header length,
// JSON header (shapes, flags, house-id table), then raw little-endian
// arrays: windows (f32), weak labels (u8), strong status (u8),
// appliance power (f64), window start timestamps (i64), per-window
// house index (u32).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "camloc/dataproc.hpp"
#include "camloc/errors.hpp"

namespace camloc {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr char kDatasetMagic[9] = "CAMLOCDS";

inline void save_dataset(const WindowDataset& d, const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little);
    std::vector<std::string> house_table;
    std::unordered_map<std::string, std::uint32_t> house_index;
    std::vector<std::uint32_t> window_house(d.num_windows());
    for (std::size_t i = 0; i < d.num_windows(); ++i) {
        auto [it, inserted] = house_index.try_emplace(
            d.house_ids[i], static_cast<std::uint32_t>(house_table.size()));
        if (inserted) house_table.push_back(d.house_ids[i]);
        window_house[i] = it->second;
    }

    nlohmann::ordered_json header;
    header["format_version"] = kDatasetFormatVersion;
    header["window_length"] = d.window_length;
    header["num_windows"] = d.num_windows();
    header["has_strong_status"] = d.has_strong();
    header["has_appliance_power"] = d.has_power();
    header["houses"] = house_table;
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kDatasetMagic, 8);
    const std::uint32_t ver = kDatasetFormatVersion;
    os.write(reinterpret_cast<const char*>(&ver), 4);
    const std::uint32_t hlen = static_cast<std::uint32_t>(header_str.size());
    os.write(reinterpret_cast<const char*>(&hlen), 4);
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    auto write_raw = [&](const void* p, std::size_t bytes) {
        os.write(reinterpret_cast<const char*>(p),
                 static_cast<std::streamsize>(bytes));
    };
    write_raw(d.windows.data(), d.windows.size() * sizeof(float));
    write_raw(d.weak_labels.data(), d.weak_labels.size());
    write_raw(d.strong_status.data(), d.strong_status.size());
    write_raw(d.appliance_power.data(), d.appliance_power.size() * sizeof(double));
    write_raw(d.start_ts.data(), d.start_ts.size() * sizeof(std::int64_t));
    write_raw(window_house.data(), window_house.size() * sizeof(std::uint32_t));
    if (!os) throw FormatError("write failed for " + path.string());
}

inline WindowDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kDatasetMagic, 8) != 0) {
        throw FormatError(path.string() + ": not a dataset container (bad magic)");
    }
    std::uint32_t ver = 0, hlen = 0;
    is.read(reinterpret_cast<char*>(&ver), 4);
    is.read(reinterpret_cast<char*>(&hlen), 4);
    if (!is) throw FormatError(path.string() + ": truncated fixed header");
    if (ver != kDatasetFormatVersion) {
        throw FormatError(path.string() + ": unsupported dataset version " +
                          std::to_string(ver));
    }
    std::string header_str(hlen, '\0');
    is.read(header_str.data(), hlen);
    if (!is) throw FormatError(path.string() + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed header: " + e.what());
    }

    WindowDataset d;
    d.window_length = header.at("window_length").get<std::size_t>();
    const std::size_t n = header.at("num_windows").get<std::size_t>();
    const bool has_strong = header.at("has_strong_status").get<bool>();
    const bool has_power = header.at("has_appliance_power").get<bool>();
    const auto houses = header.at("houses").get<std::vector<std::string>>();

    d.windows.resize(n * d.window_length);
    d.weak_labels.resize(n);
    if (has_strong) d.strong_status.resize(n * d.window_length);
    if (has_power) d.appliance_power.resize(n * d.window_length);
    d.start_ts.resize(n);
    std::vector<std::uint32_t> window_house(n);

    auto read_raw = [&](void* p, std::size_t bytes) {
        is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(bytes));
        if (!is) throw FormatError(path.string() + ": truncated array data");
    };
    read_raw(d.windows.data(), d.windows.size() * sizeof(float));
    read_raw(d.weak_labels.data(), d.weak_labels.size());
    if (has_strong) read_raw(d.strong_status.data(), d.strong_status.size());
    if (has_power) {
        read_raw(d.appliance_power.data(), d.appliance_power.size() * sizeof(double));
    }
    read_raw(d.start_ts.data(), d.start_ts.size() * sizeof(std::int64_t));
    read_raw(window_house.data(), window_house.size() * sizeof(std::uint32_t));

    d.house_ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (window_house[i] >= houses.size()) {
            throw FormatError(path.string() + ": house index out of range");
        }
        d.house_ids[i] = houses[window_house[i]];
    }
    return d;
}

} // namespace camloc
