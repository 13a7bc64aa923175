#include "hopfshock/ode.hpp"

#include <algorithm>
#include <cmath>

#include "hopfshock/error.hpp"

namespace hopfshock::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

struct Stepper {
    const Rhs& f;
    const Tolerances& tol;
    double t;
    State y;
    State k1;
    double h;

    Stepper(const Rhs& rhs, double t0, const State& y0, double dir, const Tolerances& tl)
        : f(rhs), tol(tl), t(t0), y(y0), k1(rhs(t0, y0)), h(dir * tl.h_init) {}

    // Advance one accepted step without passing `t_stop`. Returns false on failure.
    bool step(double t_stop) {
        const double dir = h > 0 ? 1.0 : -1.0;
        for (int attempt = 0; attempt < 60; ++attempt) {
            if (dir * (t + h - t_stop) > 0) h = t_stop - t;
            const State k2 = f(t + c2 * h, y + h * (a21 * k1));
            const State k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
            const State k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
            const State k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            const State k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            const State y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            const State k7 = f(t + h, y_new);
            const State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double en = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                const double sc = tol.atol + tol.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
                en = std::max(en, std::abs(err[i]) / sc);
            }
            if (!std::isfinite(en)) {
                h *= 0.25;
                continue;
            }
            const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (en <= 1.0) {
                t += h;
                y = y_new;
                k1 = k7;
                h = dir * std::min(std::abs(h) * fac, tol.h_max);
                return true;
            }
            h *= fac;
        }
        return false;
    }

    void run_to(double t_stop) {
        std::size_t steps = 0;
        while (t != t_stop) {
            if (std::abs(t_stop - t) <= 1e-14 * std::max(1.0, std::abs(t_stop))) {
                t = t_stop;
                break;
            }
            require(step(t_stop), ErrorKind::Numerical, "ODE step size underflow");
            require(++steps <= tol.max_steps, ErrorKind::Nonconvergence, "ODE step budget exhausted");
        }
    }
};

}  // namespace

State integrate(const Rhs& f, double t0, const State& y0, double t1, const Tolerances& tol) {
    if (t1 == t0) return y0;
    Stepper s(f, t0, y0, t1 > t0 ? 1.0 : -1.0, tol);
    s.run_to(t1);
    return s.y;
}

std::vector<State> integrate_to(const Rhs& f, double t0, const State& y0, const std::vector<double>& times,
                                const Tolerances& tol) {
    std::vector<State> out;
    out.reserve(times.size());
    if (times.empty()) return out;
    const double dir = times.back() >= t0 ? 1.0 : -1.0;
    Stepper s(f, t0, y0, dir, tol);
    for (double tt : times) {
        require(dir * (tt - s.t) >= 0, ErrorKind::Argument, "output times must be monotone");
        s.run_to(tt);
        out.push_back(s.y);
    }
    return out;
}

EventResult integrate_until(const Rhs& f, double t0, const State& y0, double t_max,
                            const std::function<double(double, const State&)>& event, const Tolerances& tol) {
    const double dir = t_max >= t0 ? 1.0 : -1.0;
    Stepper s(f, t0, y0, dir, tol);
    double g_prev = event(s.t, s.y);
    std::size_t steps = 0;
    while (dir * (t_max - s.t) > 0) {
        const double t_prev = s.t;
        const State y_prev = s.y;
        require(s.step(t_max), ErrorKind::Numerical, "ODE step size underflow");
        require(++steps <= tol.max_steps, ErrorKind::Nonconvergence, "ODE step budget exhausted");
        const double g = event(s.t, s.y);
        if ((g_prev < 0) != (g < 0)) {
            double lo = t_prev, hi = s.t;
            State y_lo = y_prev;
            for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
                const double mid = 0.5 * (lo + hi);
                const State ym = integrate(f, lo, y_lo, mid, tol);
                if ((event(mid, ym) < 0) == (g_prev < 0)) {
                    lo = mid;
                    y_lo = ym;
                } else {
                    hi = mid;
                }
            }
            return {true, lo, y_lo};
        }
        g_prev = g;
    }
    return {false, s.t, s.y};
}

}  // namespace hopfshock::ode
