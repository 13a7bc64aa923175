#pragma once

// Minimal deterministic SVG emitters for line plots and heatmaps.

#include <string>
#include <vector>

namespace hopfshock::svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool markers = false;
};

struct Axes {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
};

std::string line_plot(const Axes& axes, const std::vector<Series>& series);

/// Row-major values[row * cols + col]; rows run along y, columns along x.
std::string heatmap(const Axes& axes, const std::vector<double>& values, std::size_t rows, std::size_t cols,
                    double x0, double x1, double y0, double y1);

}  // namespace hopfshock::svg
