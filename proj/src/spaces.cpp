#include "hopfshock/spaces.hpp"

#include <algorithm>
#include <cmath>

#include "hopfshock/error.hpp"

namespace hopfshock {

Grid1D::Grid1D(double half_width, std::size_t point_count) : L_(half_width), n_(point_count) {
    require(half_width > 0.0, ErrorKind::Argument, "grid half width must be positive");
    require(point_count >= 3, ErrorKind::Argument, "grid needs at least 3 points");
    require(point_count % 2 == 1, ErrorKind::Argument, "grid point count must be odd");
    h_ = 2.0 * L_ / static_cast<double>(n_ - 1);
}

Grid1D Grid1D::with_spacing(double half_width, double h) {
    require(h > 0.0, ErrorKind::Argument, "spacing must be positive");
    auto half = static_cast<std::size_t>(std::llround(half_width / h));
    return Grid1D(half_width, 2 * std::max<std::size_t>(half, 1) + 1);
}

Vec Grid1D::nodes() const {
    Vec v(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) v[static_cast<Eigen::Index>(i)] = x(i);
    return v;
}

GridFunction::GridFunction(Grid1D g, std::size_t comps)
    : grid(g), components(comps), values(Vec::Zero(static_cast<Eigen::Index>(g.size() * comps))) {
    require(comps >= 1, ErrorKind::Argument, "component count must be positive");
}

GridFunction::GridFunction(Grid1D g, std::size_t comps, Vec v) : grid(g), components(comps), values(std::move(v)) {
    require(static_cast<std::size_t>(values.size()) == g.size() * comps, ErrorKind::Dimension,
            "values length must equal points x components");
}

double GridFunction::magnitude(std::size_t node) const {
    double s = 0.0;
    for (std::size_t c = 0; c < components; ++c) s += at(node, c) * at(node, c);
    return std::sqrt(s);
}

GridFunction GridFunction::component(std::size_t comp) const {
    require(comp < components, ErrorKind::Argument, "component index out of range");
    GridFunction out(grid, 1);
    for (std::size_t i = 0; i < grid.size(); ++i) out.at(i) = at(i, comp);
    return out;
}

double quadrature(std::span<const double> samples, double h, QuadratureRule rule) {
    const std::size_t n = samples.size();
    if (rule == QuadratureRule::Trapezoid) {
        require(n >= 2, ErrorKind::Argument, "trapezoid rule needs at least 2 samples");
        double s = 0.5 * (samples.front() + samples.back());
        for (std::size_t i = 1; i + 1 < n; ++i) s += samples[i];
        return s * h;
    }
    require(n >= 3 && n % 2 == 1, ErrorKind::Argument, "simpson rule needs an odd sample count >= 3");
    double s = samples.front() + samples.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * samples[i];
    return s * h / 3.0;
}

Vec trapezoid_weights(const Grid1D& g) {
    Vec w = Vec::Constant(static_cast<Eigen::Index>(g.size()), g.spacing());
    w[0] *= 0.5;
    w[w.size() - 1] *= 0.5;
    return w;
}

namespace {

template <class V>
double l2_impl(const Grid1D& g, std::size_t comps, const V& v) {
    require(static_cast<std::size_t>(v.size()) == g.size() * comps, ErrorKind::Dimension, "grid/value size mismatch");
    const double h = g.spacing();
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = (i == 0 || i + 1 == g.size()) ? 0.5 * h : h;
        for (std::size_t c = 0; c < comps; ++c) s += w * std::norm(v[static_cast<Eigen::Index>(i * comps + c)]);
    }
    return std::sqrt(s);
}

template <class V>
double x1_impl(const Grid1D& g, std::size_t comps, const V& v) {
    require(static_cast<std::size_t>(v.size()) == g.size() * comps, ErrorKind::Dimension, "grid/value size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < comps; ++c) s += std::norm(v[static_cast<Eigen::Index>(i * comps + c)]);
        m = std::max(m, (1.0 + std::abs(g.x(i))) * std::sqrt(s));
    }
    return m;
}

}  // namespace

double l2_norm(const Grid1D& g, std::size_t comps, const Vec& v) { return l2_impl(g, comps, v); }
double l2_norm(const Grid1D& g, std::size_t comps, const CVec& v) { return l2_impl(g, comps, v); }
double x1_norm(const Grid1D& g, std::size_t comps, const Vec& v) { return x1_impl(g, comps, v); }
double x1_norm(const Grid1D& g, std::size_t comps, const CVec& v) { return x1_impl(g, comps, v); }

double norm_b1(const GridFunction& f) { return l2_norm(f.grid, f.components, f.values); }
double norm_x1(const GridFunction& f) { return x1_norm(f.grid, f.components, f.values); }

double norm_l1(const GridFunction& f) {
    const Vec w = trapezoid_weights(f.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < f.grid.size(); ++i) s += w[static_cast<Eigen::Index>(i)] * f.magnitude(i);
    return s;
}

double integral(const GridFunction& f, std::size_t comp) {
    const Vec w = trapezoid_weights(f.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < f.grid.size(); ++i) s += w[static_cast<Eigen::Index>(i)] * f.at(i, comp);
    return s;
}

double norm(const GridFunction& f, NormKind kind, const GridFunction* aux) {
    switch (kind) {
        case NormKind::B1: return norm_b1(f);
        case NormKind::X1: return norm_x1(f);
        case NormKind::B2Pair: {
            require(aux != nullptr, ErrorKind::Argument, "B2 norm needs the density as aux");
            require(aux->grid == f.grid && aux->components == f.components, ErrorKind::Dimension,
                    "density and derivative live on different grids");
            return norm_l1(*aux) + norm_b1(f);
        }
        case NormKind::X2Pair: {
            require(aux != nullptr, ErrorKind::Argument, "X2 norm needs the density as aux");
            require(aux->grid == f.grid && aux->components == f.components, ErrorKind::Dimension,
                    "density and derivative live on different grids");
            double m = 0.0;
            for (std::size_t i = 0; i < aux->grid.size(); ++i) {
                const double w = 1.0 + std::abs(aux->grid.x(i));
                m = std::max(m, w * w * aux->magnitude(i));
            }
            return m + norm_x1(f);
        }
    }
    return 0.0;
}

GridFunction antiderivative(const GridFunction& f) {
    GridFunction out(f.grid, f.components);
    const double h = f.grid.spacing();
    for (std::size_t c = 0; c < f.components; ++c) {
        double acc = 0.0;
        for (std::size_t i = 1; i < f.grid.size(); ++i) {
            acc += 0.5 * h * (f.at(i - 1, c) + f.at(i, c));
            out.at(i, c) = acc;
        }
    }
    return out;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size() && x.size() >= 2, ErrorKind::Argument, "line fit needs >= 2 matched samples");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    require(std::abs(det) > 0.0, ErrorKind::Argument, "degenerate abscissae in line fit");
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.slope * sx) / n;
    for (std::size_t i = 0; i < x.size(); ++i)
        fit.residual = std::max(fit.residual, std::abs(y[i] - fit.slope * x[i] - fit.intercept));
    return fit;
}

PowerLaw fit_power_law(std::span<const double> arg, std::span<const double> value) {
    std::vector<double> lx(arg.size()), ly(value.size());
    for (std::size_t i = 0; i < arg.size(); ++i) {
        require(arg[i] > 0.0 && value[i] > 0.0, ErrorKind::Argument, "power-law fit needs positive data");
        lx[i] = std::log(arg[i]);
        ly[i] = std::log(value[i]);
    }
    const auto line = fit_line(lx, ly);
    return {line.slope, std::exp(line.intercept), line.residual};
}

std::vector<double> logspace(double lo, double hi, std::size_t count) {
    require(lo > 0 && hi > lo && count >= 2, ErrorKind::Argument, "bad logspace range");
    std::vector<double> out(count);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

}  // namespace hopfshock
