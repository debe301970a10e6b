#pragma once

// Shared helpers for the test suite: random tensors, a central
// finite-difference harness, scratch directories, and process spawning
// for the CLI tests. Header-only like the library itself.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "camloc/camloc.hpp"

namespace testutil {

template <class T>
camloc::Tensor<T> random_tensor(std::size_t n, std::size_t c, std::size_t l,
                                camloc::Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
    camloc::Tensor<T> t(n, c, l);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    }
    return t;
}

// Pushes values out of the [-margin, margin] band so ReLU kinks do not
// poison finite differences.
template <class T>
void nudge_from_zero(camloc::Tensor<T>& t, double margin = 0.05) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = t.data()[i];
        if (v >= 0 && v < margin) v += margin;
        if (v < 0 && v > -margin) v -= margin;
        t.data()[i] = static_cast<T>(v);
    }
}

inline double rel_err(double a, double b) {
    const double denom = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

// Central finite differences of scalar() with respect to the n values at
// v, compared against the analytic gradient; returns the largest
// rel_err. scalar() must be a pure function of *v (and fixed state).
inline double max_fd_err(double* v, std::size_t n, const double* analytic,
                         const std::function<double()>& scalar,
                         double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = scalar();
        v[i] = keep - h;
        const double dn = scalar();
        v[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, analytic[i]));
    }
    return worst;
}

// Same, but the analytic gradient was computed by a float instance of
// the layer while scalar() runs a double twin over the same values.
inline double max_fd_err_f32(double* v, std::size_t n, const float* analytic,
                             const std::function<double()>& scalar,
                             double h = 1e-4) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = scalar();
        v[i] = keep - h;
        const double dn = scalar();
        v[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        worst = std::max(worst, rel_err(fd, analytic[i]));
    }
    return worst;
}

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        std::string tmpl =
            (std::filesystem::temp_directory_path() / (tag + ".XXXXXX")).string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) {
            throw std::runtime_error("mkdtemp failed for " + tmpl);
        }
        path = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path.string(); }
};

inline std::string read_file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr interleaved
};

// Runs a shell command, capturing combined output. Exit code -1 means
// the child did not terminate normally.
inline RunResult run_command(const std::string& cmd) {
    RunResult r;
    FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed: " + cmd);
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) {
        r.output.append(buf, got);
    }
    const int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

// Small two-class window set: negatives are low-level noise, positives
// add a rectangular bump. Values in kW like the real pipeline.
inline camloc::WindowDataset toy_dataset(std::size_t num_windows, std::size_t L,
                                         std::uint64_t seed,
                                         double bump_kw = 1.5) {
    camloc::WindowDataset d;
    d.window_length = L;
    camloc::Rng rng(camloc::hash_seed(seed, 0x70dadaULL));
    for (std::size_t w = 0; w < num_windows; ++w) {
        const bool on = (w % 2) == 1;
        std::vector<float> values(L);
        std::vector<std::uint8_t> status(L, 0);
        std::vector<double> power(L, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            values[l] = static_cast<float>(0.2 + 0.02 * rng.uniform());
        }
        if (on) {
            const std::size_t span = L / 4;
            const std::size_t start = rng.uniform_int(L - span);
            for (std::size_t l = start; l < start + span; ++l) {
                values[l] += static_cast<float>(bump_kw);
                status[l] = 1;
                power[l] = bump_kw * 1000.0;
            }
        }
        d.windows.insert(d.windows.end(), values.begin(), values.end());
        d.weak_labels.push_back(on ? 1 : 0);
        d.strong_status.insert(d.strong_status.end(), status.begin(), status.end());
        d.appliance_power.insert(d.appliance_power.end(), power.begin(), power.end());
        d.house_ids.push_back("toy");
        d.start_ts.push_back(static_cast<std::int64_t>(w * L) * 60);
    }
    return d;
}

} // namespace testutil
