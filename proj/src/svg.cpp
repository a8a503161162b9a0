#include "frg/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "frg/errors.hpp"

namespace frg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    if (std::abs(v) < 1e-12) v = 0.0;  // avoid "-0"
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void include(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi <= lo) {
            double s = std::max(1.0, std::abs(lo));
            lo -= 0.5 * s;
            hi += 0.5 * s;
        } else {
            double s = 0.05 * (hi - lo);
            lo -= s;
            hi += s;
        }
    }
};

}  // namespace

std::string render_line_chart(const std::vector<SvgSeries>& series,
                              const SvgOptions& options) {
    if (series.empty()) throw PreconditionError("svg: no series to plot");
    for (const SvgSeries& s : series) {
        if (s.x.empty()) throw PreconditionError("svg: empty series '" + s.label + "'");
        if (s.x.size() != s.y.size())
            throw PreconditionError("svg: series '" + s.label + "' has " +
                                    std::to_string(s.x.size()) + " x values but " +
                                    std::to_string(s.y.size()) + " y values");
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
                throw PreconditionError("svg: non-finite point in series '" + s.label +
                                        "' at index " + std::to_string(i));
    }

    Range rx, ry;
    for (const SvgSeries& s : series) {
        for (double v : s.x) rx.include(v);
        for (double v : s.y) ry.include(v);
    }
    rx.pad();
    ry.pad();

    const double w = options.width;
    const double h = options.height;
    const double ml = 72, mr = 24, mt = options.title.empty() ? 24 : 44, mb = 56;
    const double pw = w - ml - mr;
    const double ph = h - mt - mb;
    auto px = [&](double v) { return ml + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto py = [&](double v) { return mt + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(options.width) + "\" height=\"" + std::to_string(options.height) +
           "\" viewBox=\"0 0 " + std::to_string(options.width) + " " +
           std::to_string(options.height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!options.title.empty())
        out += "<text x=\"" + fixed2(w / 2) +
               "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"16\">" +
               escape_xml(options.title) + "</text>\n";

    // Axes.
    out += "<line x1=\"" + fixed2(ml) + "\" y1=\"" + fixed2(mt + ph) + "\" x2=\"" +
           fixed2(ml + pw) + "\" y2=\"" + fixed2(mt + ph) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"" + fixed2(ml) + "\" y1=\"" + fixed2(mt) + "\" x2=\"" + fixed2(ml) +
           "\" y2=\"" + fixed2(mt + ph) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";

    // Ticks with labels and faint grid lines.
    const int kTicks = 5;
    for (int i = 0; i <= kTicks; ++i) {
        double fx = rx.lo + (rx.hi - rx.lo) * i / kTicks;
        double X = px(fx);
        out += "<line x1=\"" + fixed2(X) + "\" y1=\"" + fixed2(mt) + "\" x2=\"" + fixed2(X) +
               "\" y2=\"" + fixed2(mt + ph) + "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out += "<line x1=\"" + fixed2(X) + "\" y1=\"" + fixed2(mt + ph) + "\" x2=\"" +
               fixed2(X) + "\" y2=\"" + fixed2(mt + ph + 5) +
               "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fixed2(X) + "\" y=\"" + fixed2(mt + ph + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               tick_label(fx) + "</text>\n";

        double fy = ry.lo + (ry.hi - ry.lo) * i / kTicks;
        double Y = py(fy);
        out += "<line x1=\"" + fixed2(ml) + "\" y1=\"" + fixed2(Y) + "\" x2=\"" +
               fixed2(ml + pw) + "\" y2=\"" + fixed2(Y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        out += "<line x1=\"" + fixed2(ml - 5) + "\" y1=\"" + fixed2(Y) + "\" x2=\"" +
               fixed2(ml) + "\" y2=\"" + fixed2(Y) +
               "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        out += "<text x=\"" + fixed2(ml - 8) + "\" y=\"" + fixed2(Y + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               tick_label(fy) + "</text>\n";
    }

    if (!options.x_label.empty())
        out += "<text x=\"" + fixed2(ml + pw / 2) + "\" y=\"" + fixed2(h - 12) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
               escape_xml(options.x_label) + "</text>\n";
    if (!options.y_label.empty())
        out += "<text x=\"18\" y=\"" + fixed2(mt + ph / 2) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
               "transform=\"rotate(-90 18 " +
               fixed2(mt + ph / 2) + ")\">" + escape_xml(options.y_label) + "</text>\n";

    // One polyline per series.
    for (std::size_t si = 0; si < series.size(); ++si) {
        const SvgSeries& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i > 0) pts += " ";
            pts += fixed2(px(s.x[i])) + "," + fixed2(py(s.y[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        if (s.x.size() == 1)
            out += "<circle cx=\"" + fixed2(px(s.x[0])) + "\" cy=\"" + fixed2(py(s.y[0])) +
                   "\" r=\"2.5\" fill=\"" + std::string(color) + "\"/>\n";
    }

    // Legend, top right inside the plot area.
    for (std::size_t si = 0; si < series.size(); ++si) {
        double Y = mt + 16 + 16 * static_cast<double>(si);
        const char* color = kPalette[si % kPaletteSize];
        out += "<line x1=\"" + fixed2(ml + pw - 120) + "\" y1=\"" + fixed2(Y - 4) +
               "\" x2=\"" + fixed2(ml + pw - 96) + "\" y2=\"" + fixed2(Y - 4) +
               "\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fixed2(ml + pw - 90) + "\" y=\"" + fixed2(Y) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" +
               escape_xml(series[si].label) + "</text>\n";
    }

    out += "</svg>\n";
    return out;
}

void write_svg(const std::string& path, const std::vector<SvgSeries>& series,
               const SvgOptions& options) {
    std::string body = render_line_chart(series, options);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open SVG file for write: " + path);
    out << body;
    if (!out) throw IoError("write failed on SVG file: " + path);
}

}  // namespace frg
