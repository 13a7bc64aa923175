#pragma once

// Viscous shocks in a duct ℝ × 𝕋^{d-1}: the transverse Fourier family
// L_ξ = L₀ - Σ iξ_j A^j(x₁) - |ξ|², its decay for ξ ≠ 0, mode-wise right
// inverses and periodic orbits with a crossing pair planted in one mode.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "hopfshock/linops.hpp"
#include "hopfshock/resummation.hpp"
#include "hopfshock/returnmap.hpp"

namespace hopfshock {

/// Transverse wave vector; only the first transverse_dim entries are used.
using Mode = std::array<int, 2>;

double mode_norm2(const Mode& xi, std::size_t dims);

struct TransverseModeFamily {
    std::size_t transverse_dim = 1;  // d - 1
    int xi_max = 16;
    double eps = 0.0;
    FluxFamily flux;
    std::vector<FluxFamily> transverse;  // F^j, j = 2..d
    ShockProfile profile{Grid1D(1.0, 3), 1};
    DiscreteLinearOperator L0;       // assemble_L, unchanged
    std::vector<std::vector<Mat>> A; // A[j][i] = F^j_u(ε, ū(x_i))
    double eta = 0.0;                // Re λ ≤ -η|ξ|² on the endstate dispersion curves

    /// L_ξ as a complex operator (same band pattern and low-rank part as L₀).
    ComplexLinearOperator mode(const Mode& xi) const;
    /// Real L_ξ; only for ξ = 0 or when every A^j vanishes.
    DiscreteLinearOperator real_mode(const Mode& xi) const;
    bool has_transverse_flux() const;
};

/// Assembles the family. Every ζA¹_± + Σ ξ_j A^j_± must be real diagonalizable
/// (spectral-assumption error otherwise).
TransverseModeFamily assemble_mode_family(const ShockProfile& profile, const FluxFamily& flux,
                                          const std::vector<FluxFamily>& transverse, const LinopOptions& linop = {},
                                          int xi_max = 16);

/// max over ζ of Re λ(-i(ζA¹ + Σ ξ_j A^j) - ζ² - |ξ|²) at both endstates.
double dispersion_max_real(const TransverseModeFamily& fam, const Mode& xi, double zeta_max = 20.0,
                           std::size_t samples = 801);

struct GapFit {
    Mode xi{};
    double rate = 0.0;      // fitted -d/dt log ‖(1+|x₁|)e^{L_ξ t} f‖_∞
    double predicted = 0.0; // η|ξ|²
    std::vector<double> t, norm;
};

/// Fits the decay of e^{L_ξ t}f for t in [t0, t1] (Crank-Nicolson, `steps`
/// steps over [0, t1]). At ξ = 0 the pair and the zero mode are projected out.
GapFit gap_decay(const TransverseModeFamily& fam, const Mode& xi, const CVec& f, double t0, double t1,
                 std::size_t steps = 2000);

/// Coefficients û(x₁, ξ) for |ξ_j| ≤ xi_max, node-major in x₁ per mode.
class CylinderField {
public:
    CylinderField(Grid1D grid, std::size_t components, std::size_t transverse_dim, int xi_max, bool hermitian = true);

    const Grid1D& grid() const { return grid_; }
    std::size_t components() const { return n_; }
    std::size_t transverse_dim() const { return dims_; }
    int xi_max() const { return K_; }
    bool hermitian() const { return hermitian_; }
    std::size_t modes() const { return coef_.size(); }
    std::size_t index(const Mode& xi) const;
    Mode mode_at(std::size_t index) const;
    CVec& operator[](const Mode& xi) { return coef_[index(xi)]; }
    const CVec& operator[](const Mode& xi) const { return coef_[index(xi)]; }
    CVec& at(std::size_t k) { return coef_[k]; }
    const CVec& at(std::size_t k) const { return coef_[k]; }

    /// Largest |û(ξ) - conj(û(-ξ))|.
    double hermitian_defect() const;
    /// Samples on P^{d-1} equispaced transverse points of [0, 2π)^{d-1}; entry
    /// [m] holds the x₁-node-major field at transverse point m.
    std::vector<CVec> to_physical(std::size_t P) const;
    static CylinderField from_physical(const std::vector<CVec>& samples, std::size_t P, const Grid1D& grid,
                                       std::size_t components, std::size_t transverse_dim, int xi_max);

private:
    Grid1D grid_;
    std::size_t n_, dims_;
    int K_;
    bool hermitian_;
    std::vector<CVec> coef_;
};

struct ModeLedger {
    Mode xi{};
    std::size_t terms = 0;
    std::vector<double> increments;  // ‖S_ξ^j ∂n̂_ξ‖_{B1}
    double contraction = 0.0;        // last increment ratio
    double tail_norm = 0.0;          // ‖Σ_j S_ξ^j ∂n̂_ξ‖_{X1}
};

struct MultidInverse {
    CylinderField b;
    SeriesLedger zero_ledger;
    std::vector<ModeLedger> ledgers;  // ξ ≠ 0, in mode order
    double tail_constant = 0.0;       // Σ_{ξ≠0} tails / sup_ξ ‖(1+|x₁|)∂n̂_ξ‖_∞
};

/// S₀ = e^{L̃₀T}(I - Π - Π₀) as a real one-step operator; the ξ = 0 part of the
/// mode-wise inverse runs the 1-D resummed series on it.
TransverseOperator zero_mode_operator(const TransverseModeFamily& fam, double T, std::size_t substeps);

/// b̂_ξ = Σ_j S_ξ^j ∂_{x₁} n̂_ξ with S_ξ = e^{L_ξ T}: the resummed 1-D series at
/// ξ = 0 and plain geometric sums (stopped at increment ≤ tol) elsewhere.
MultidInverse multid_right_inverse(const TransverseModeFamily& fam, const CylinderField& n_density, double T, double tol,
                                   const InverseOptions& zero_opt = {}, std::size_t substeps = 256);

// ------------------------------------------------------------ cylinder orbits

/// Orbits in d = 2 restricted to fields even in x₂,
/// u = Σ_{k=0}^{K} û_k(x₁) cos(k x₂). Needs F² = 0, so each L_k = L₀ - k² is
/// real and the planted pair (in mode k*) is the only crossing pair.
struct CylinderOptions {
    Grid1D grid = Grid1D::with_spacing(30.0, 0.1);
    int xi_max = 16;
    int crossing_mode = 1;
    int order = 6;
    PlantedPair planted{};
    FlowOptions flow;
    InverseOptions series{1e-14, 1e-10, 400, false, ContinuizationOrder::Trapezoid};
};

class CylinderSystem : public SplitDynamics {
public:
    CylinderSystem(const FluxFamily& flux, ShockProfile profile, const CylinderOptions& opt,
                   const SpectralPair* seed = nullptr);

    FluxFamily flux;
    double eps = 0.0;
    ShockProfile profile;
    int K = 0, kstar = 0;
    std::vector<DiscreteLinearOperator> L;  // L_k, k = 0..K
    SpectralPair pair_;
    Projectors zero_proj;                    // zero mode of L₀
    CVec phi, phi_left;                      // pair in mode k*
    std::vector<Mat> jac;
    std::vector<Vec> flux_bar;
    std::size_t P = 0;                       // cosine collocation points on [0, π]

    /// Mode block k of a state (node-major, profile.dim values per node).
    Vec block(const Vec& u, int k) const;
    void set_block(Vec& u, int k, const Vec& f) const;
    /// Values on x₂_j = πj/(P-1), per node and component: out[(i*n + c)*P + j].
    Vec synthesize(const Vec& u) const;
    Vec analyze(const Vec& samples) const;

    const SpectralPair& pair() const override { return pair_; }
    const Grid1D& grid() const override { return profile.grid; }
    std::size_t components() const override { return profile.dim * static_cast<std::size_t>(K + 1); }
    Complex coordinate(const Vec& f) const override;
    Vec from_coordinate(Complex w) const override;
    Vec pi_zero(const Vec& f) const override;
    double zero_coordinate(const Vec& f) const override;
    Vec forcing(const Vec& u) const override;
    std::shared_ptr<const LinearStepper> stepper(double dt) const override;
    Vec background() const override;
    Vec far_left() const override;
    Vec far_right() const override;

private:
    struct Plans;
    std::shared_ptr<Plans> plans_;
};

PoincareSystem assemble_cylinder_poincare(const FluxFamily& flux, const CylinderOptions& opt = {});

struct CylinderOrbit {
    PeriodicOrbit orbit;
    int xi_max = 0, crossing_mode = 0;
    double cosine_fit_residual = 0.0;  // max over snapshots of ‖u - (A cos k*x₂ + B sin k*x₂)‖/‖u‖
    std::vector<double> mode_energy;   // max over snapshots of ‖û_k‖_{B1}
    double tail_max = 0.0;             // max ‖û_k‖_∞ over k > K/2 and snapshots
    bool tail_ok = false;              // tail_max ≤ 1e-10

    std::string to_json() const;
    std::string mode_energy_csv() const;  // k,energy
    /// u - ū over (x₁, x₂) at snapshot `frame`.
    std::string frame_svg(std::size_t frame, std::size_t component = 0, std::size_t transverse_points = 48) const;
};

CylinderOrbit multid_orbit(const PoincareSystem& ps, double a, const OrbitOptions& opt = {});

}  // namespace hopfshock
