#pragma once

// Uniform grids, grid functions, the four weighted norms used throughout the
// analysis (B1, B2, X1, X2) and composite quadrature.

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hopfshock {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

/// Uniform grid on [-L, L] with an odd node count so that x = 0 is a node.
class Grid1D {
public:
    Grid1D(double half_width, std::size_t point_count);

    /// Grid with spacing as close as possible to `h` (node count rounded to odd).
    static Grid1D with_spacing(double half_width, double h);

    double half_width() const noexcept { return L_; }
    std::size_t size() const noexcept { return n_; }
    double spacing() const noexcept { return h_; }
    double x(std::size_t i) const noexcept { return -L_ + static_cast<double>(i) * h_; }
    std::size_t center_index() const noexcept { return (n_ - 1) / 2; }
    Vec nodes() const;

    bool operator==(const Grid1D& o) const noexcept { return n_ == o.n_ && L_ == o.L_; }
    bool operator!=(const Grid1D& o) const noexcept { return !(*this == o); }

private:
    double L_;
    std::size_t n_;
    double h_;
};

/// Real samples on a grid, `components` values per node stored node-major:
/// values[i * components + c].
struct GridFunction {
    Grid1D grid;
    std::size_t components = 1;
    Vec values;

    GridFunction(Grid1D g, std::size_t comps = 1);
    GridFunction(Grid1D g, std::size_t comps, Vec v);

    template <class F>
    static GridFunction sample(const Grid1D& g, F&& f) {
        GridFunction out(g, 1);
        for (std::size_t i = 0; i < g.size(); ++i) out.values[static_cast<Eigen::Index>(i)] = f(g.x(i));
        return out;
    }

    double at(std::size_t node, std::size_t comp = 0) const {
        return values[static_cast<Eigen::Index>(node * components + comp)];
    }
    double& at(std::size_t node, std::size_t comp = 0) {
        return values[static_cast<Eigen::Index>(node * components + comp)];
    }
    /// Euclidean magnitude of the component vector at a node.
    double magnitude(std::size_t node) const;
    /// One component extracted as a scalar grid function.
    GridFunction component(std::size_t comp) const;
};

enum class NormKind { B1, B2Pair, X1, X2Pair };

enum class QuadratureRule { Trapezoid, Simpson };

/// Composite quadrature of uniformly spaced samples.
double quadrature(std::span<const double> samples, double h, QuadratureRule rule);

/// Trapezoid weights h*(1/2, 1, ..., 1, 1/2) on the grid.
Vec trapezoid_weights(const Grid1D& g);

/// Norm of `f`. Pair kinds describe a distributional derivative: `f` is the
/// derivative ∂_x F and `aux` carries the density F itself.
///   B1 = L2;  X1 = sup (1+|x|)|f|;
///   B2(∂F) = |F|_L1 + |∂F|_L2;  X2(∂F) = sup (1+|x|)^2 |F| + X1(∂F).
double norm(const GridFunction& f, NormKind kind, const GridFunction* aux = nullptr);

double norm_b1(const GridFunction& f);
double norm_x1(const GridFunction& f);
double norm_l1(const GridFunction& f);
double integral(const GridFunction& f, std::size_t comp = 0);

/// L2 norm of raw node-major samples with the grid's trapezoid weights.
double l2_norm(const Grid1D& g, std::size_t comps, const Vec& v);
double l2_norm(const Grid1D& g, std::size_t comps, const CVec& v);
double x1_norm(const Grid1D& g, std::size_t comps, const Vec& v);
double x1_norm(const Grid1D& g, std::size_t comps, const CVec& v);

/// Cumulative trapezoid antiderivative starting from zero at x = -L.
GridFunction antiderivative(const GridFunction& f);

/// Ordinary least squares y ≈ slope*x + intercept.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;  // max absolute residual
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Log-log power-law fit value ≈ C * arg^exponent.
struct PowerLaw {
    double exponent = 0.0;
    double constant = 0.0;
    double residual = 0.0;
};
PowerLaw fit_power_law(std::span<const double> arg, std::span<const double> value);

std::vector<double> logspace(double lo, double hi, std::size_t count);

}  // namespace hopfshock
