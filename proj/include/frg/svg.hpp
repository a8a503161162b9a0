#pragma once

#include <string>
#include <vector>

namespace frg {

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct SvgOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    int width = 800;
    int height = 520;
};

// Deterministic standalone line chart: fixed layout, fixed palette and
// fixed numeric formatting, so identical input yields identical bytes.
// Emits exactly one polyline per series. Throws PreconditionError when
// there are no series, a series is empty or mismatched, or a coordinate
// is not finite.
std::string render_line_chart(const std::vector<SvgSeries>& series,
                              const SvgOptions& options);

void write_svg(const std::string& path, const std::vector<SvgSeries>& series,
               const SvgOptions& options);

}  // namespace frg
