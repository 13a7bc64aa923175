#pragma once

// Perturbation equations u_t = L(ε)u + ∂_x Q(ε,u) about the profile, split as
// u = Re(wφ₊) + v, with the truncated flow, the period map, the Poincaré
// system handed to the bifurcation layer and the periodic-orbit search.

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hopfshock/bifurcation.hpp"
#include "hopfshock/linops.hpp"
#include "hopfshock/resummation.hpp"

namespace hopfshock {

/// C² blend: z on [0,1/2], 1 on [1,∞), quintic in between.
double truncation_psi(double z);
double truncation_psi_derivative(double z);
/// max over z of ψ(z)/z, the factor in |v̂| ≤ κ C₀|w|.
double truncation_overshoot();

enum class TruncationOrder { Linear, Quadratic };

/// One Crank-Nicolson step of v' = L̃ v + G with G held fixed over the step.
class LinearStepper {
public:
    virtual ~LinearStepper() = default;
    virtual Vec cn_step(const Vec& v, const Vec& forcing) const = 0;
};

/// What the truncated flow needs from a perturbation equation: the crossing
/// pair with its coordinate, the zero-mode projection, the nonlinear forcing
/// and the linear stepper. States are node-major on an x₁ grid with
/// components() values per node.
class SplitDynamics {
public:
    virtual ~SplitDynamics() = default;
    virtual const SpectralPair& pair() const = 0;
    virtual const Grid1D& grid() const = 0;
    virtual std::size_t components() const = 0;
    /// w = 2⟨φ̃₊, f⟩ and its inverse Re(wφ₊).
    virtual Complex coordinate(const Vec& f) const = 0;
    virtual Vec from_coordinate(Complex w) const = 0;
    virtual Vec pi_zero(const Vec& f) const = 0;
    /// ⟨ℓ_h, f⟩, the translation coordinate.
    virtual double zero_coordinate(const Vec& f) const = 0;
    /// ∂_x Q(u) (plus transverse terms where present).
    virtual Vec forcing(const Vec& u) const = 0;
    virtual std::shared_ptr<const LinearStepper> stepper(double dt) const = 0;
    /// Full steady state and its far-field values in the same layout.
    virtual Vec background() const = 0;
    virtual Vec far_left() const = 0;
    virtual Vec far_right() const = 0;

    Vec pi_tilde(const Vec& f) const { return f - from_coordinate(coordinate(f)); }
    double linear_period() const;  // 2π/τ(ε)
    std::size_t size() const { return grid().size() * components(); }
};

class PerturbationSystem : public SplitDynamics {
public:
    PerturbationSystem(FluxFamily flux, ShockProfile profile, DiscreteLinearOperator L, SpectralPair pair,
                       Projectors proj);

    FluxFamily flux;
    double eps = 0.0;
    ShockProfile profile;
    DiscreteLinearOperator L;
    SpectralPair pair_;
    Projectors proj;
    std::vector<Mat> jac;      // F_u(ε,ū) per node
    std::vector<Vec> flux_bar; // F(ε,ū) per node

    /// Q(ε,u) = -F(ε,ū+u) + F(ε,ū) + F_u(ε,ū)u, node-major.
    Vec Q(const Vec& u) const;
    /// Conservative difference of Q (the operator's own first-difference stencil).
    Vec dxQ(const Vec& u) const;

    const SpectralPair& pair() const override { return pair_; }
    const Grid1D& grid() const override { return profile.grid; }
    std::size_t components() const override { return profile.dim; }
    Complex coordinate(const Vec& f) const override { return proj.coordinate(f); }
    Vec from_coordinate(Complex w) const override { return proj.from_coordinate(w); }
    Vec pi_zero(const Vec& f) const override { return proj.pi_zero(f); }
    double zero_coordinate(const Vec& f) const override;
    Vec forcing(const Vec& u) const override { return dxQ(u); }
    std::shared_ptr<const LinearStepper> stepper(double dt) const override;
    Vec background() const override { return profile.values.values; }
    Vec far_left() const override { return profile.u_minus; }
    Vec far_right() const override { return profile.u_plus; }
};

/// Builds profile, operator, pair and projectors at ε. With `seed`, the pair is
/// followed from the seed eigenvalue instead of running the full scan.
PerturbationSystem make_perturbation_system(const FluxFamily& flux, double eps, const Grid1D& grid,
                                            const LinopOptions& linop, const SpectralPair* seed = nullptr);
PerturbationSystem make_perturbation_system(const FluxFamily& flux, ShockProfile profile, const LinopOptions& linop,
                                            const SpectralPair* seed = nullptr);

/// Follows a tracked pair: the eigenvalue of L nearest the seed, phase-aligned with it.
SpectralPair track_pair(const DiscreteLinearOperator& L, const SpectralPair& seed);

/// Whole-node translation; vacated nodes take the far-field states (zero if none).
GridFunction shift_nodes(const GridFunction& f, long nodes, const Vec* far_left = nullptr,
                         const Vec* far_right = nullptr);
ShockProfile shift_profile(const ShockProfile& p, long nodes);

struct FlowOptions {
    double C0 = 10.0;
    TruncationOrder order = TruncationOrder::Linear;
    bool truncate = true;
    bool nonlinear = true;
    std::size_t steps_per_period = 512;
    double bound_C = 10.0;             // |w(t)|/|a| must stay in [1/C, C]
    std::size_t snapshots = 0;         // evenly spaced full-state snapshots per run (0: none)
};

struct TruncatedFlow {
    double dt = 0.0;
    std::vector<double> t;
    std::vector<Complex> w;
    std::vector<double> theta;       // unwrapped, θ(0) = arg w(0)
    std::vector<double> theta_dot;
    std::vector<double> v_x1;        // ‖v(t)‖_{X₁}
    Vec v;                           // final transverse state
    std::vector<double> snapshot_t;
    std::vector<Vec> snapshots;      // perturbation Re(wφ) + v
    double C0 = 10.0;
    TruncationOrder order = TruncationOrder::Linear;
    double max_v_over_w = 0.0;       // max_t ‖v‖_{X₁}/|w| (|w|² for the quadratic order)
    bool truncation_active = false;  // ψ < 1 somewhere along the run
    double max_vhat_ratio = 0.0;     // max |v̂(x)|/(C₀|w|) over active nodes
};

/// IMEX run: w by second-order exponential time differencing (exact for the
/// linear part), v by Crank-Nicolson with Adams-Bashforth forcing, re-projected
/// with Π̃ every step. w(0) = a, v(0) = b.
TruncatedFlow evolve_truncated(const SplitDynamics& sys, Complex a, const Vec& b, double t_end, std::size_t steps,
                               const FlowOptions& opt = {});

struct PeriodResult {
    double T = 0.0;
    TruncatedFlow flow;        // run with Δt = T/M ending exactly at T
    std::size_t runs = 0;
    double theta_error = 0.0;  // |θ(T) - 2π|
    double min_theta_dot = 0.0;
};

/// Smallest T in [π/τ, 3π/τ] with θ(T) = 2π; the crossing is located by cubic
/// Hermite interpolation of θ and re-run until it falls on the last step.
PeriodResult solve_period(const SplitDynamics& sys, double a, const Vec& b, const FlowOptions& opt = {});

/// Builds the split dynamics at ε; `seed` is the ε = 0 pair once known.
using DynamicsFactory = std::function<std::shared_ptr<const SplitDynamics>(double eps, const SpectralPair* seed)>;

/// Shared per-ε state behind the Poincaré system (thread-safe cache).
class PoincareContext {
public:
    PoincareContext(DynamicsFactory make, FlowOptions flow, InverseOptions series);
    std::shared_ptr<const SplitDynamics> at(double eps) const;
    const FlowOptions& flow() const { return flow_; }
    const InverseOptions& series() const { return series_; }
    /// S(ε)x = e^{L T₀}(I - Π - Π₀)x with T₀ = 2π/τ(ε), same stepping as the flow.
    Vec apply_S(double eps, const Vec& x) const;

private:
    struct Entry {
        std::shared_ptr<const SplitDynamics> sys;
        std::shared_ptr<const LinearStepper> stepper;
    };
    const Entry& entry(double eps) const;
    Entry make_entry(std::shared_ptr<const SplitDynamics> sys) const;
    DynamicsFactory make_;
    FlowOptions flow_;
    InverseOptions series_;
    mutable std::mutex mu_;
    mutable std::map<double, Entry> cache_;
    SpectralPair seed_;
};

struct PoincareSystem {
    DiscreteSystem system;
    std::shared_ptr<PoincareContext> context;
};

/// R = e^{γT₀}, S = e^{L̃T₀}, N₁ = |w(T)| - R a, N₂ = (I - Π₀)(v(T) - S b) with
/// T = T(ε,a,b) from solve_period.
PoincareSystem assemble_poincare(const std::string& name, DynamicsFactory make, const FlowOptions& flow = {},
                                 const InverseOptions& series = {1e-14, 1e-10, 400, false,
                                                                 ContinuizationOrder::Trapezoid});

struct ReturnMapOptions {
    Grid1D grid = Grid1D::with_spacing(30.0, 0.1);
    LinopOptions linop{6, PlantedPair{}};
    FlowOptions flow;
    InverseOptions series{1e-14, 1e-10, 400, false, ContinuizationOrder::Trapezoid};
};

/// The 1-D system on a flux family.
PoincareSystem assemble_poincare(const FluxFamily& flux, const ReturnMapOptions& opt = {});

struct OrbitOptions {
    BranchOptions branch;
    std::size_t snapshots = 64;
    OrbitOptions() {
        branch.reduction.tol = 1e-11;
        branch.reduction.box.b_strong = 1.0;
        branch.ift.tol = 1e-9;
    }
};

struct PeriodicOrbit {
    double a = 0.0, eps = 0.0, period = 0.0;
    double f_resid = 0.0, g_resid = 0.0;
    double periodicity_residual = 0.0;  // ‖u(T*) - u(0)‖_{ℬ₁}/‖u(0)‖_{ℬ₁}, untruncated run
    double max_v_over_w = 0.0;
    bool truncation_active = false;
    double drift_shift = 0.0;           // best translation aligning u(T*) with u(0)
    double drift_coefficient = 0.0;     // ⟨ℓ_h, u(T*) - u(0)⟩
    double mass_drift = 0.0;            // max_t max_c |∫ (u(t) - u(0))_c|
    double projection_defect = 0.0;     // max_t ‖Π̃u‖/‖u‖
    double b_x1 = 0.0;
    std::vector<double> snapshot_t;
    std::vector<Vec> snapshots;         // perturbations u^a - ū^{ε(a)}
    std::vector<double> amplitude;      // sup (1+|x|)|u^a - ū^{ε(a)}| per snapshot
    Vec b;
    Vec u0;                             // Re(aφ₊) + b
    Grid1D grid{1.0, 3};
    std::size_t components = 1;

    std::string to_json() const;
    std::string amplitude_csv() const;  // t,amplitude
    std::string heatmap_svg(std::size_t component = 0) const;
};

PeriodicOrbit find_periodic_orbit(const PoincareSystem& ps, double a, const OrbitOptions& opt = {});

/// Periodicity residual of a 1-D orbit moved by `nodes` grid points, evolved
/// (untruncated) under the equally translated profile and planted block.
double translated_periodicity_residual(const FluxFamily& flux, const ReturnMapOptions& opt, const PeriodicOrbit& orb,
                                       long nodes);

}  // namespace hopfshock
