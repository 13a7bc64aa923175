#pragma once

// Adaptive Dormand-Prince 5(4) integration for small dense ODE systems
// (profile shooting and planar return maps).

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace hopfshock::ode {

using State = Eigen::VectorXd;
using Rhs = std::function<State(double, const State&)>;

struct Tolerances {
    double rtol = 1e-12;
    double atol = 1e-14;
    double h_init = 1e-3;
    double h_max = 0.5;
    std::size_t max_steps = 2'000'000;
};

/// Integrate from t0 to t1 (either direction) and return the final state.
State integrate(const Rhs& f, double t0, const State& y0, double t1, const Tolerances& tol = {});

/// Integrate through the given increasing-or-decreasing list of output times,
/// landing exactly on each and returning the state at every one of them.
std::vector<State> integrate_to(const Rhs& f, double t0, const State& y0, const std::vector<double>& times,
                                const Tolerances& tol = {});

/// Integrate until `event(t, y)` changes sign or t reaches t_max. Returns the
/// crossing time located by bisection on the last step, or t_max if none.
struct EventResult {
    bool found = false;
    double t = 0.0;
    State y;
};
EventResult integrate_until(const Rhs& f, double t0, const State& y0, double t_max,
                            const std::function<double(double, const State&)>& event, const Tolerances& tol = {});

}  // namespace hopfshock::ode
