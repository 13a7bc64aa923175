#pragma once

// Lyapunov-Schmidt reduction for discrete systems
//   a ↦ R(ε)a + N₁(ε,a,b),  b ↦ S(ε)b + N₂(ε,a,b),
// the scalar branch solve ε(a), a Brouwer-type implicit function solver and
// the translation quotient.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hopfshock/profiles.hpp"
#include "hopfshock/spaces.hpp"

namespace hopfshock {

struct StepEval {
    double R = 1.0;    // R(ε,0,0)
    double N1 = 0.0;   // scalar-block nonlinearity
    Vec N2;            // transverse nonlinearity, already in derivative form
    double period = 0.0;
};

/// Evaluators must be callable from several threads at once.
struct DiscreteSystem {
    std::string name;
    std::size_t dim_b = 0;
    std::function<double(double eps)> R;
    std::function<StepEval(double eps, double a, const Vec& b)> evaluate;
    std::function<Vec(double eps, const Vec& source)> right_inverse;  // (Id - S(ε))^{-1}
    std::function<double(const Vec&)> weak_norm;                      // ℬ₁
    std::function<double(const Vec&)> strong_norm;                    // X₁
    std::optional<double> dR0;  // ∂_ε R(0,0,0); secant estimate when empty
};

struct SmallnessBox {
    double eps = 0.1;
    double a = 0.1;
    double b_strong = 0.1;
};

struct ReductionOptions {
    double tol = 1e-10;  // weak-norm increment
    std::size_t max_iter = 100;
    SmallnessBox box;
    Vec initial;  // starting iterate; empty means ω
};

struct ReductionResult {
    Vec b;
    std::size_t iterations = 0;
    double increment = 0.0;       // last ‖b_{k+1} - b_k‖ in the weak norm, the g residual
    double bound_constant = 0.0;  // ‖B‖ / (‖ω‖ + a²), 0 for the trivial point
    StepEval eval;                // evaluation at the last iterate
};

/// Fixed point of b = ω + (Id - S)^{-1} N₂(ε,a,b); the strong norm must stay
/// inside the box at every iterate.
ReductionResult reduce_B(const DiscreteSystem& sys, double eps, double a, const Vec& omega,
                         const ReductionOptions& opt = {});

struct IftOptions {
    double tol = 1e-12;     // |F(δ,a)|
    double radius = 0.1;    // search ball |δ| ≤ radius
    std::size_t max_iter = 100;
    double damping = 1.0;
    std::size_t bracket_samples = 16;
};

struct IftResult {
    double delta = 0.0;
    double residual = 0.0;
    std::size_t evaluations = 0;
    bool bracketed = false;  // true when the fixed-point iteration gave way to bracketing
};

/// Root δ(a) of F(·,a) near 0 for F(0,0) = 0, ∂_δF(0,0) = dF0 ≠ 0: damped chord
/// iteration δ ↦ δ - F(δ,a)/dF0, then sign-change bracketing inside the ball.
IftResult brouwer_ift(const std::function<double(double, double)>& F, std::optional<double> dF0, double a,
                      const IftOptions& opt = {});

struct BranchPoint {
    double a = 0.0;
    double eps = 0.0;
    double period = 0.0;
    double f_resid = 0.0;  // |(R-1)a + N₁| at the solution
    double g_resid = 0.0;  // weak norm of the reduction increment
    Vec b;
    std::size_t evaluations = 0;
};

struct BifurcationCurve {
    std::vector<BranchPoint> points;
    std::vector<double> even_fit;  // ε ≈ c₂a² + c₄a⁴ (c₂, c₄)
    double continuity_ratio = 0.0; // |ε|/|a| at the smallest nonzero |a|, small when ε(a) = o(a)

    std::string to_csv() const;    // header a,epsilon,period,f_resid,g_resid
    std::string to_svg() const;
};

struct BranchOptions {
    ReductionOptions reduction;
    IftOptions ift;
    std::size_t threads = 1;
};

using OmegaRule = std::function<Vec(double eps, double a)>;

/// ε(a) from the reduced scalar equation (R(ε) - 1 + N₁(ε,a,B)/a)/∂_εR = 0 with
/// B = B(ε,a,ω(ε,a)) nested inside; ω defaults to 0.
BifurcationCurve solve_branch(const DiscreteSystem& sys, const std::vector<double>& a_samples,
                              const OmegaRule& omega = {}, const BranchOptions& opt = {});

/// Planar normal form ṙ = εr - σr³, θ̇ = 2π/T over one period (closed form),
/// with a decoupled transverse block S = diag(s_k), N₂ = a²c + q b∘b.
struct NormalFormParams {
    double sigma = 1.0;  // +1 supercritical, -1 subcritical
    double period = 2.0 * 3.14159265358979323846;
    std::size_t dim_b = 6;
    double q = 0.5;
};
DiscreteSystem normal_form_system(const NormalFormParams& p = {});

/// r(T) for ṙ = εr - σr³, r(0) = a.
double normal_form_flow(double eps, double sigma, double a, double T);

struct TranslateResult {
    double shift = 0.0;
    double a = 0.0;
    GridFunction b;
    double norm_before = 0.0;  // X₁
    double norm_after = 0.0;   // X₁
    bool in_cone = false;      // ‖b̂‖_{X₁} ≤ C|â|
};

/// Φ(c)(a,b) = (a, b(·+c) + ū(·+c) - ū); c minimizes the ℬ₁ norm of the
/// translated perturbation on [-bracket, bracket] (doubled once when the
/// minimum sits on the boundary).
TranslateResult quotient_translate(double a, const GridFunction& b, const ShockProfile& profile, double cone_C,
                                   double bracket = 1.0);

/// b(· + c) by cubic B-spline interpolation, zero outside the grid.
GridFunction translate(const GridFunction& f, double c, const Vec* far_left = nullptr, const Vec* far_right = nullptr);

}  // namespace hopfshock
