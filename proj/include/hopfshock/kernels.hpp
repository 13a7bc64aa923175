#pragma once

// Model Green kernels K and J, their closed-form derivatives, and the
// excited/scattering decomposition of the transverse Green function.

#include <functional>
#include <string>
#include <vector>

#include "hopfshock/spaces.hpp"

namespace hopfshock {

/// errfn(z) = (1/2π) ∫_{-∞}^z e^{-ξ²} dξ. Limits 0 and √π/(2π).
double errfn(double z);

enum class KernelMode { GaussianK, ExcitedJ };

struct ModelKernel {
    double a = -1.0;
    KernelMode mode = KernelMode::GaussianK;
    std::function<double(double)> profile_derivative;  // ū'(x), ExcitedJ only

    static ModelKernel gaussian(double speed);
    static ModelKernel excited(double speed, std::function<double(double)> ubar_prime);
    void validate() const;
};

inline constexpr int kMaxAlpha = 4;
inline constexpr int kMaxBeta = 4;

/// ∂_t^β ∂_y^α of the kernel at (x, t; y).
double kernel_derivative(const ModelKernel& k, int alpha, int beta, double x, double t, double y);

/// K and its derivatives in the comoving variable ξ = x - y - a t (translation invariant in y).
double gaussian_derivative_comoving(int alpha, int beta, double xi, double t, double a);

/// Smooth cutoff equal to 0 for t <= 1/2 and 1 for t >= 1 (cubic smoothstep between).
double cutoff_t(double t);

/// Spectral data of the transverse Green function model. Indices k run over
/// the characteristic families at u_-, j over the scattered families.
struct GreensModel {
    std::size_t dim = 1;
    Vec speeds_minus, speeds_plus;  // a_k^-, a_j^+
    Mat right_minus, left_minus;    // columns r_k^-, l_k^-
    Mat right_plus, left_plus;      // columns r_j^+, l_j^+
    Vec excited_minus;              // [c^0_{k,-}] (zero unless a_k^- > 0)
    Mat reflected_minus;            // [c^{j,-}_{k,-}] indexed (j, k)
    Mat transmitted_minus;          // [c^{j,+}_{k,-}] indexed (j, k)
    // mirror data used for y >= 0; defaults reflect the minus-side data
    Vec excited_plus;               // [c^0_{k,+}]
    Mat reflected_plus;             // [c^{j,+}_{k,+}] (j over plus families, k over plus)
    Mat transmitted_plus;           // [c^{j,-}_{k,+}] (j over minus families, k over plus)
    std::function<Vec(double)> profile_derivative;  // Ū'(x), n components
    bool include_excited = true;
    bool include_scattering = true;

    void validate() const;

    /// Scalar single-speed data: G = r l (4πt)^{-1/2} e^{-(x-y-at)²/4t} for y <= 0.
    static GreensModel scalar(double a_minus, double a_plus);
};

/// Scattered path z_jk(y,t) = a_j (t - |y|/|a_k|).
double scattered_center(double a_j, double a_k, double y, double t);
/// Effective diffusion rate β̄_jk = |x^±|/|a_j t| + |y|/|a_k t| (a_j/a_k)².
double scattered_rate(double a_j, double a_k, double x_part, double y, double t);

/// Ẽ + S̃ at (x, t; y) as an n×n matrix.
Mat eval_model_green(const GreensModel& g, double x, double t, double y);

/// (S f)(x) = ∫ G̃(x,T;y) f(y) dy by trapezoid quadrature on f's grid.
GridFunction apply_transverse(const GreensModel& g, const GridFunction& f, double T);
GridFunction apply_transverse(const ModelKernel& k, const GridFunction& f, double T);

/// sup_y ‖∂_t^β ∂_y^α k(·,T;y)‖ in the given norm (see fit_norm_law for the grid convention).
double kernel_norm(const ModelKernel& k, int alpha, int beta, NormKind kind, double T, const Grid1D& grid);

struct NormLaw {
    double exponent = 0.0;
    double constant = 0.0;
    double residual = 0.0;
    std::vector<double> times;
    std::vector<double> norms;
};

/// Log-log fit of sup_y ‖∂_t^β ∂_y^α k(·,T;y)‖ over T. For K the norm is
/// independent of y and is evaluated on `grid` in the comoving variable; for
/// J the grid is the x-grid and the sup over y is taken by a scan around the
/// moving front y = -aT.
NormLaw fit_norm_law(const ModelKernel& k, int alpha, int beta, NormKind kind, const std::vector<double>& times,
                     const Grid1D& grid);

/// GreensModel from JSON text: {"speeds_minus": [...], "left_minus": [[...]], ...}.
GreensModel greens_model_from_json(const std::string& text);

}  // namespace hopfshock
