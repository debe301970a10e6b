#pragma once

// Binary model container.
//
// Layout: 8-byte magic "CAMLOCMD", then a little-endian u32 format
// version, a u32 header length, a JSON header (spec fields, seed,
// training metadata, element type, byte order, and the ordered array
// directory), and finally the raw parameter and buffer arrays in
// directory order. Floats are written verbatim, so a save/load round
// trip is bit-exact on the same platform.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "camloc/errors.hpp"
#include "camloc/resnet.hpp"

namespace camloc {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[9] = "CAMLOCMD";

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw FormatError("model container truncated in fixed header");
    return v;
}

template <class T>
const char* element_type_name() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    else if constexpr (std::is_same_v<T, double>) return "f64";
    else return "unknown";
}

template <class T>
ResNet<T> instantiate_model(const nlohmann::json& header, std::istream& is,
                            const std::filesystem::path& path);

} // namespace detail

template <class T>
void save_model(ResNet<T>& model, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["format_version"] = kModelFormatVersion;
    header["element_type"] = detail::element_type_name<T>();
    header["byte_order"] = "little";
    header["spec"] = {{"kernel_size", model.spec().kernel_size},
                      {"filters", model.spec().filters},
                      {"num_classes", model.spec().num_classes},
                      {"input_channels", model.spec().input_channels}};
    header["seed"] = model.seed();
    header["epochs_run"] = model.epochs_run;
    // JSON has no literal for non-finite numbers; null stands in for the
    // untrained-model sentinel.
    if (std::isfinite(model.best_val_loss)) {
        header["best_val_loss"] = model.best_val_loss;
    } else {
        header["best_val_loss"] = nullptr;
    }
    header["bn_stats_initialized"] = model.bn_stats_initialized();

    auto params = model.params();
    auto buffers = model.buffers();
    nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
    for (const auto& p : params) {
        arrays.push_back({{"name", p.name}, {"size", p.size}});
    }
    for (const auto& b : buffers) {
        arrays.push_back({{"name", b.name}, {"size", b.size}});
    }
    header["arrays"] = std::move(arrays);

    const std::string header_str = header.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kModelMagic, 8);
    detail::write_u32(os, kModelFormatVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(header_str.size()));
    os.write(header_str.data(),
             static_cast<std::streamsize>(header_str.size()));
    for (const auto& p : params) {
        os.write(reinterpret_cast<const char*>(p.value),
                 static_cast<std::streamsize>(p.size * sizeof(T)));
    }
    for (const auto& b : buffers) {
        os.write(reinterpret_cast<const char*>(b.value),
                 static_cast<std::streamsize>(b.size * sizeof(T)));
    }
    if (!os) throw FormatError("write failed for " + path.string());
}

template <class T = float>
ResNet<T> load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kModelMagic, 8) != 0) {
        throw FormatError(path.string() + ": not a model container (bad magic)");
    }
    const std::uint32_t version = detail::read_u32(is);
    if (version != kModelFormatVersion) {
        throw FormatError(path.string() + ": unsupported format version " +
                          std::to_string(version));
    }
    const std::uint32_t header_len = detail::read_u32(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), header_len);
    if (!is) throw FormatError(path.string() + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed header: " + e.what());
    }
    try {
        return detail::instantiate_model<T>(header, is, path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": malformed header: " + e.what());
    }
}

namespace detail {

template <class T>
ResNet<T> instantiate_model(const nlohmann::json& header, std::istream& is,
                            const std::filesystem::path& path) {
    if (header.at("byte_order").get<std::string>() != "little") {
        throw FormatError(path.string() + ": unsupported byte order");
    }
    if (header.at("element_type").get<std::string>() !=
        detail::element_type_name<T>()) {
        throw FormatError(path.string() + ": element type " +
                          header.at("element_type").get<std::string>() +
                          " does not match requested " +
                          detail::element_type_name<T>());
    }

    ResNetSpec spec;
    const auto& js = header.at("spec");
    spec.kernel_size = js.at("kernel_size").get<std::size_t>();
    const auto filters = js.at("filters").get<std::vector<std::size_t>>();
    if (filters.size() != spec.filters.size()) {
        throw FormatError(path.string() + ": bad filters list in header");
    }
    std::copy(filters.begin(), filters.end(), spec.filters.begin());
    spec.num_classes = js.at("num_classes").get<std::size_t>();
    spec.input_channels = js.at("input_channels").get<std::size_t>();

    ResNet<T> model(spec, header.at("seed").get<std::uint64_t>());
    model.epochs_run = header.at("epochs_run").get<std::uint64_t>();
    const auto& loss = header.at("best_val_loss");
    model.best_val_loss = loss.is_null()
                              ? std::numeric_limits<double>::infinity()
                              : loss.get<double>();

    auto params = model.params();
    auto buffers = model.buffers();
    const auto& arrays = header.at("arrays");
    if (arrays.size() != params.size() + buffers.size()) {
        throw FormatError(path.string() + ": array directory has " +
                          std::to_string(arrays.size()) + " entries, model needs " +
                          std::to_string(params.size() + buffers.size()));
    }
    std::size_t idx = 0;
    auto read_array = [&](const std::string& name, T* dst, std::size_t size) {
        const auto& entry = arrays.at(idx++);
        if (entry.at("name").get<std::string>() != name ||
            entry.at("size").get<std::size_t>() != size) {
            throw FormatError(path.string() + ": array directory mismatch at '" +
                              name + "'");
        }
        is.read(reinterpret_cast<char*>(dst),
                static_cast<std::streamsize>(size * sizeof(T)));
        if (!is) throw FormatError(path.string() + ": truncated array data");
    };
    for (const auto& p : params) read_array(p.name, p.value, p.size);
    for (const auto& b : buffers) read_array(b.name, b.value, b.size);

    if (header.at("bn_stats_initialized").get<bool>()) {
        model.mark_bn_stats_initialized();
    }
    return model;
}

} // namespace detail

} // namespace camloc
