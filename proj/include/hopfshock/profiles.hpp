#pragma once

// Flux families, standing viscous shock profiles u' = F(eps,u) - F(eps,u_-),
// Lax classification of the endstates and tail decay rates.

#include <functional>
#include <optional>
#include <string>

#include "hopfshock/spaces.hpp"

namespace hopfshock {

struct FluxFamily {
    std::string name;
    std::size_t dim = 1;
    std::function<Vec(double eps, const Vec& u)> flux;
    std::function<Mat(double eps, const Vec& u)> jacobian;
    std::function<Vec(double eps)> u_minus;
    std::function<Vec(double eps)> u_plus;
    double eps_min = -0.1;
    double eps_max = 0.1;

    /// |F(eps,u_+) - F(eps,u_-)|.
    double rh_residual(double eps) const;
};

/// Scalar Burgers flux u^2/2 with constant endstates.
FluxFamily burgers(double u_minus = 1.0, double u_plus = -1.0);

/// Burgers in a moving frame, F(eps,u) = u^2/2 - eps*u with u_± = ∓1 + eps.
FluxFamily burgers_shifted();

/// Two-component exemplar F(u,v) = (u^2/2 + mu*v, c*v + beta*u^2) with
/// u_- = (1,0), u_+ = (-1,0): a Lax 1-shock with a 1-D stable manifold at u_+.
struct ExemplarParams {
    double mu = 0.1;
    double beta = 0.25;
    double c = 1.0;
};
FluxFamily exemplar_2x2(const ExemplarParams& p = {});

/// Look up a shipped flux by name ("burgers", "burgers_shifted", "exemplar_2x2").
FluxFamily flux_by_name(const std::string& name);

struct LaxReport {
    Vec eig_minus;  // eigenvalues of A_-, ascending
    Vec eig_plus;   // eigenvalues of A_+, ascending
    std::size_t dim_stable_plus = 0;
    std::size_t dim_unstable_minus = 0;
    std::size_t family = 0;  // characteristic family p (1-based), 0 if not Lax
    bool lax_ok = false;
    std::string reason;
    double rh_residual = 0.0;
};

LaxReport classify_lax(const FluxFamily& flux, double eps);

struct ShockProfile {
    Grid1D grid;
    std::size_t dim = 1;
    double eps = 0.0;
    std::string flux_name;
    Vec u_minus, u_plus;
    GridFunction values;
    GridFunction derivative;
    double eta = 0.0;          // tail decay rate, 0 for a constant profile
    double ode_residual = 0.0; // sup of the one-step ODE defect between neighbouring nodes
    double phase = 0.0;

    ShockProfile(Grid1D g, std::size_t n);
    Vec state(std::size_t node) const;
};

struct ProfileOptions {
    std::optional<double> phase;   // default: midpoint of the first component's endstates
    std::size_t phase_component = 0;
    double seed = 1e-6;            // distance from the rest point where shooting starts
    double rtol = 1e-13;
    double atol = 1e-18;
    bool force_collocation = false;
};

ShockProfile solve_profile(const FluxFamily& flux, double eps, const Grid1D& grid, const ProfileOptions& opt = {});

/// Smaller of the two one-sided exponential tail rates.
double decay_rate(const ShockProfile& profile);

/// Versioned JSON (de)serialization for the cache.
inline constexpr int kProfileSchema = 1;
std::string profile_to_json(const ShockProfile& p);
ShockProfile profile_from_json(const std::string& text);

}  // namespace hopfshock
