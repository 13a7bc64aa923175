#pragma once

// Discretized linearized operator L = -∂_x(A(x)·) + ∂_x², its crossing pair,
// spectral projections and Crank-Nicolson semigroup steps.

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "hopfshock/profiles.hpp"
#include "hopfshock/spaces.hpp"

namespace hopfshock {

/// Banded part plus a rank-k update: L = B + U Vᵀ. Unknowns are node-major
/// (index node*components + comp) and the values beyond the grid are zero.
template <class T>
struct LinearOperatorT {
    using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

    Grid1D grid{1.0, 3};
    std::size_t components = 1;
    double eps = 0.0;
    int order = 6;
    std::string closure = "zero-ghost";
    int bandwidth = 0;  // max |row - col| in the banded part
    Eigen::SparseMatrix<T, Eigen::RowMajor> band;
    MatT U, V;

    std::size_t size() const { return grid.size() * components; }
    VecT apply(const VecT& x) const {
        VecT y = band * x;
        if (U.cols() > 0) y += U * (V.transpose() * x);
        return y;
    }
    VecT apply_transpose(const VecT& x) const {
        VecT y = band.transpose() * x;
        if (U.cols() > 0) y += V * (U.transpose() * x);
        return y;
    }
    MatT dense() const {
        MatT d = MatT(band);
        if (U.cols() > 0) d += U * V.transpose();
        return d;
    }
    LinearOperatorT transposed() const {
        LinearOperatorT t = *this;
        t.band = Eigen::SparseMatrix<T, Eigen::RowMajor>(band.transpose());
        t.U = V;
        t.V = U;
        return t;
    }
};

using DiscreteLinearOperator = LinearOperatorT<double>;
using ComplexLinearOperator = LinearOperatorT<Complex>;

/// LU of alpha·I + beta·L with LAPACK banded storage and a Woodbury correction
/// for the low-rank part. Immutable after construction.
template <class T>
class ShiftedSolver {
public:
    using VecT = typename LinearOperatorT<T>::VecT;
    using MatT = typename LinearOperatorT<T>::MatT;

    ShiftedSolver(const LinearOperatorT<T>& L, T alpha, T beta);
    VecT solve(const VecT& rhs) const;
    std::size_t size() const { return n_; }

private:
    VecT band_solve(const VecT& rhs) const;
    std::size_t n_;
    int kl_;
    std::vector<T> ab_;
    std::vector<int> ipiv_;
    MatT Z_;      // B^{-1} (beta U)
    MatT V_;      // V
    MatT small_;  // (I + Vᵀ Z)^{-1}
};

/// Rank-2 planted block with prescribed eigenvalues gamma_slope·eps ± i·tau0
/// on span{(g',0), (0,g')}, g = exp(-x²/(2 width²)). Rows/columns follow the
/// real basis, so L q = q M(eps) with M = [[γ, -τ], [τ, γ]].
struct PlantedPair {
    double tau0 = 0.5;
    double gamma_slope = 1.0;
    double width = 1.0;
    double center = 0.0;
    std::size_t first_component = 0;  // q1 lives here, q2 in the next component (or same for scalars)
};

struct LinopOptions {
    int order = 6;  // 2 or 6
    std::optional<PlantedPair> planted;
};

/// Node-wise Jacobians A(x_i) = F_u(eps, ū(x_i)).
std::vector<Mat> profile_jacobians(const ShockProfile& profile, const FluxFamily& flux);

/// -D1(A·) + D2 with the chosen order; no planting.
DiscreteLinearOperator assemble_divergence_operator(const Grid1D& grid, std::size_t n, const std::vector<Mat>& A,
                                                    int order);

DiscreteLinearOperator assemble_L(const ShockProfile& profile, const FluxFamily& flux, const LinopOptions& opt = {});

/// Replaces the low-rank part of L by the planted block, built against the
/// current banded part (so shifts applied to the band beforehand are honoured).
void plant_pair(DiscreteLinearOperator& L, const ShockProfile& profile, const PlantedPair& pp);

/// Conservative first difference (same stencil as the assembled operator).
Vec apply_dx(const Grid1D& grid, std::size_t n, const Vec& f, int order);
CVec apply_dx(const Grid1D& grid, std::size_t n, const CVec& f, int order);

/// Discrete inner product h Σ f_k g_k (bilinear, no conjugation).
Complex inner(const Grid1D& grid, const CVec& f, const CVec& g);
double inner(const Grid1D& grid, const Vec& f, const Vec& g);

struct EigenPair {
    Complex lambda;
    CVec vector;
    double residual = 0.0;  // ‖Lx - λx‖/‖x‖
};

/// Eigenvalues nearest a shift by Arnoldi on (L - σ)^{-1}; pairs with relative
/// residual above `tol` are dropped.
std::vector<EigenPair> eigs_near(const DiscreteLinearOperator& L, Complex sigma, std::size_t nev,
                                 std::size_t krylov = 40, double tol = 1e-8);
std::vector<EigenPair> eigs_near(const ComplexLinearOperator& L, Complex sigma, std::size_t nev,
                                 std::size_t krylov = 40, double tol = 1e-8);

/// Full spectrum by a dense eigensolve; refused above `max_unknowns`.
std::vector<Complex> dense_spectrum(const DiscreteLinearOperator& L, std::size_t max_unknowns = 400);
std::vector<Complex> dense_spectrum(const ComplexLinearOperator& L, std::size_t max_unknowns = 400);

/// Inverse iteration polish of an approximate eigenpair.
EigenPair refine_eigenpair(const DiscreteLinearOperator& L, Complex lambda, const CVec& start, int iterations = 3);

struct SearchBox {
    double re_min = -0.05;  // keeps clear of the essential envelope
    double im_min = 0.05;
    double im_max = 3.0;
    double shift_spacing = 0.5;
    double probe_re = 0.55;     // second column of shifts, catches unstable eigenvalues further right
    double zero_radius = 1e-4;  // eigenvalues this close to 0 are the translation mode
};

struct SpectralPair {
    Complex lambda;            // γ + iτ, τ > 0
    double gamma = 0.0, tau = 0.0;
    CVec phi, phi_left;        // right/left eigenvectors for λ₊ with ⟨φ̃, φ⟩ = 1
    CVec Phi;                  // antiderivative of φ₊
    double residual = 0.0, left_residual = 0.0;
    double mass = 0.0;         // |h Σ φ₊|
    std::vector<Complex> unstable_others;  // should stay empty under the spectral condition
    std::vector<Complex> found;            // every converged eigenvalue seen by the scan
};

SpectralPair crossing_pair(const DiscreteLinearOperator& L, const SearchBox& box = {});

/// Polish and normalize a pair from an approximate eigenvalue and vector (no
/// scan, so no check of the rest of the spectrum). Used to follow the pair in ε;
/// with `phase_ref` the phase makes ⟨phase_ref, φ⟩ real positive.
SpectralPair pair_from_guess(const DiscreteLinearOperator& L, Complex lambda, const CVec& guess,
                             const CVec* phase_ref = nullptr);

struct EssentialEnvelope {
    Vec speeds;                 // a_j^± (all families, both sides)
    Vec xi;
    std::vector<CVec> curves;   // λ_j(ξ) = i a_j ξ - ξ²
    double max_real_nonzero_xi = 0.0;
    double margin(Complex lambda) const;  // distance to the nearest curve sample
};

EssentialEnvelope essential_envelope(const FluxFamily& flux, double eps, const Vec& xi);

struct Projectors {
    Grid1D grid{1.0, 3};
    std::size_t components = 1;
    CVec phi, phi_left;   // crossing pair (λ₊); Π f = 2 Re(φ ⟨φ̃, f⟩)
    Vec zero_right;       // ū'
    Vec zero_left;        // discrete left null vector, ⟨ℓ_h, ū'⟩ = 1
    Vec ell;              // constant ℓ ⟂ S(A_-) ∪ U(A_+), ℓ·(u_+ - u_-) = 1
    bool has_pair = true;

    Vec pi(const Vec& f) const;
    Vec pi_tilde(const Vec& f) const { return f - pi(f); }
    Vec pi_zero(const Vec& f) const;
    /// w = 2⟨φ̃₊, f⟩, so that Π f = Re(w φ₊).
    Complex coordinate(const Vec& f) const;
    Vec from_coordinate(Complex w) const;
};

/// Projectors for the pair (or only the zero mode when `pair` is null).
Projectors projections(const DiscreteLinearOperator& L, const SpectralPair* pair, const ShockProfile& profile,
                       const FluxFamily& flux);

/// Crank-Nicolson with Rannacher startup (two implicit-Euler half steps) for
/// e^{Lt}f, or e^{L̃t}Π̃ f when projectors are given.
class SemigroupStepper {
public:
    SemigroupStepper(const DiscreteLinearOperator& L, double dt);
    double dt() const { return dt_; }
    const DiscreteLinearOperator& op() const { return *L_; }
    /// One CN step of u' = L u + g (g held at the midpoint value supplied).
    Vec cn_step(const Vec& u, const Vec& forcing) const;
    /// Implicit-Euler half step of u' = L u + g.
    Vec half_euler(const Vec& u, const Vec& forcing) const;
    Vec propagate(const Vec& u, std::size_t steps) const;

private:
    std::shared_ptr<const DiscreteLinearOperator> L_;
    double dt_;
    ShiftedSolver<double> solver_;  // I - (dt/2) L
};

GridFunction semigroup_step(const DiscreteLinearOperator& L, const GridFunction& f, double t, std::size_t substeps,
                            const Projectors* proj = nullptr);

}  // namespace hopfshock
