#include "hopfshock/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace hopfshock::svg {

namespace {

constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string header(const Axes& axes) {
    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kW, kH);
    s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kW / 2,
                     escape(axes.title));
    s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + (kW - kLeft - kRight) / 2,
                     kH - 12, escape(axes.xlabel));
    s += fmt::format("<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
                     kTop + (kH - kTop - kBottom) / 2, kTop + (kH - kTop - kBottom) / 2, escape(axes.ylabel));
    return s;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!std::isfinite(lo)) lo = 0, hi = 1;
        if (hi - lo < 1e-300) {
            const double pad = std::max(std::abs(lo) * 0.05, 1e-12);
            lo -= pad;
            hi += pad;
        }
    }
};

std::string frame(const Range& xr, const Range& yr, bool logx, bool logy) {
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    std::string s = fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
                                kLeft, kTop, pw, ph);
    for (int k = 0; k <= 4; ++k) {
        const double fx = k / 4.0;
        const double vx = xr.lo + fx * (xr.hi - xr.lo);
        const double vy = yr.lo + fx * (yr.hi - yr.lo);
        s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", kLeft + fx * pw,
                         kTop + ph + 16, logx ? std::pow(10.0, vx) : vx);
        s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 4,
                         kTop + ph - fx * ph + 4, logy ? std::pow(10.0, vy) : vy);
    }
    return s;
}

}  // namespace

std::string line_plot(const Axes& axes, const std::vector<Series>& series) {
    auto tx = [&](double v) { return axes.logx ? (v > 0 ? std::log10(v) : NAN) : v; };
    auto ty = [&](double v) { return axes.logy ? (v > 0 ? std::log10(v) : NAN) : v; };
    Range xr, yr;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            xr.add(tx(s.x[i]));
            yr.add(ty(s.y[i]));
        }
    xr.settle();
    yr.settle();
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto px = [&](double v) { return kLeft + (tx(v) - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double v) { return kTop + ph - (ty(v) - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string out = header(axes) + frame(xr, yr, axes.logx, axes.logy);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kColors[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            const double X = px(s.x[i]), Y = py(s.y[i]);
            if (!std::isfinite(X) || !std::isfinite(Y)) continue;
            pts += fmt::format("{:.2f},{:.2f} ", X, Y);
            if (s.markers)
                out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", X, Y, color);
        }
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, pts);
        out += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", kLeft + 10, kTop + 16 + 14 * k, color,
                           escape(s.label));
    }
    out += "</svg>\n";
    return out;
}

std::string heatmap(const Axes& axes, const std::vector<double>& values, std::size_t rows, std::size_t cols,
                    double x0, double x1, double y0, double y1) {
    Range xr{x0, x1}, yr{y0, y1};
    xr.settle();
    yr.settle();
    double vmax = 0.0;
    for (double v : values)
        if (std::isfinite(v)) vmax = std::max(vmax, std::abs(v));
    if (vmax == 0.0) vmax = 1.0;
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    const double cw = pw / static_cast<double>(std::max<std::size_t>(cols, 1));
    const double rh = ph / static_cast<double>(std::max<std::size_t>(rows, 1));
    std::string out = header(axes);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = values[r * cols + c] / vmax;  // diverging blue-white-red
            const int red = v > 0 ? 255 : static_cast<int>(std::lround(255 * (1 + v)));
            const int blue = v < 0 ? 255 : static_cast<int>(std::lround(255 * (1 - v)));
            const int green = static_cast<int>(std::lround(255 * (1 - std::abs(v))));
            out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"rgb({},{},{})\"/>\n",
                               kLeft + c * cw, kTop + ph - (r + 1) * rh, cw + 0.05, rh + 0.05, red, green, blue);
        }
    out += frame(xr, yr, false, false);
    out += "</svg>\n";
    return out;
}

}  // namespace hopfshock::svg
