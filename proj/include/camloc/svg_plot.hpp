#pragma once

// Static SVG line charts for localization overlays: aggregate and
// estimated power as polylines, predicted ON spans as shaded bands.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "camloc/errors.hpp"

namespace camloc {

struct PlotSeries {
    std::string label;
    std::string color; // CSS color
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::vector<double> x;
    std::vector<PlotSeries> series;
    std::vector<std::uint8_t> shading; // optional, same length as x
    std::string shade_color = "#f4a582";
    int width = 960;
    int height = 360;
};

inline void write_svg_chart(const std::filesystem::path& path, const PlotSpec& p) {
    for (const auto& s : p.series) {
        if (s.y.size() != p.x.size()) {
            throw DataError("svg chart: series '" + s.label + "' has " +
                            std::to_string(s.y.size()) + " points, x axis has " +
                            std::to_string(p.x.size()));
        }
    }
    if (!p.shading.empty() && p.shading.size() != p.x.size()) {
        throw DataError("svg chart: shading length mismatch");
    }
    const double ml = 60, mr = 20, mt = 36, mb = 32;
    const double pw = p.width - ml - mr, ph = p.height - mt - mb;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!p.x.empty()) {
        xmin = *std::min_element(p.x.begin(), p.x.end());
        xmax = *std::max_element(p.x.begin(), p.x.end());
    }
    bool got_y = false;
    for (const auto& s : p.series) {
        for (double v : s.y) {
            if (std::isnan(v)) continue;
            if (!got_y) {
                ymin = ymax = v;
                got_y = true;
            } else {
                ymin = std::min(ymin, v);
                ymax = std::max(ymax, v);
            }
        }
    }
    if (!got_y) ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    ymin = std::min(ymin, 0.0);

    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width
       << "\" height=\"" << p.height << "\" viewBox=\"0 0 " << p.width << " "
       << p.height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << p.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"14\">" << p.title << "</text>\n";

    if (!p.shading.empty()) {
        std::size_t i = 0;
        while (i < p.shading.size()) {
            if (!p.shading[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < p.shading.size() && p.shading[j]) ++j;
            const double x0 = sx(p.x[i]);
            const double x1 = sx(p.x[j - 1]);
            os << "<rect x=\"" << x0 << "\" y=\"" << mt << "\" width=\""
               << std::max(1.0, x1 - x0) << "\" height=\"" << ph << "\" fill=\""
               << p.shade_color << "\" opacity=\"0.35\"/>\n";
            i = j;
        }
    }

    os << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
       << "\" y2=\"" << mt + ph << "\" stroke=\"#444\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
       << mt + ph << "\" stroke=\"#444\"/>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.0f", ymax);
    os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << buf << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.0f", ymin);
    os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + ph
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << buf << "</text>\n";

    for (const auto& s : p.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color
           << "\" stroke-width=\"1\" points=\"";
        bool pen_down = false;
        for (std::size_t i = 0; i < p.x.size(); ++i) {
            if (std::isnan(s.y[i])) {
                pen_down = false;
                continue;
            }
            if (pen_down) os << ' ';
            os << sx(p.x[i]) << ',' << sy(s.y[i]);
            pen_down = true;
        }
        os << "\"/>\n";
    }

    double lx = ml + 8;
    for (const auto& s : p.series) {
        os << "<rect x=\"" << lx << "\" y=\"" << mt + 6
           << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
        os << "<text x=\"" << lx + 14 << "\" y=\"" << mt + 15
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
           << "</text>\n";
        lx += 14.0 + 7.0 * static_cast<double>(s.label.size()) + 18.0;
    }
    os << "</svg>\n";
    if (!os) throw DataError("write failed for " + path.string());
}

} // namespace camloc
