#include "hopfshock/returnmap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hopfshock/error.hpp"
#include "hopfshock/svg.hpp"

namespace hopfshock {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double truncation_psi(double z) {
    if (z <= 0.5) return z;
    if (z >= 1.0) return 1.0;
    const double s = z - 0.5;
    return 0.5 + s + s * s * s * (16.0 + s * (-56.0 + 48.0 * s));
}

double truncation_psi_derivative(double z) {
    if (z <= 0.5) return 1.0;
    if (z >= 1.0) return 0.0;
    const double s = z - 0.5;
    return 1.0 + s * s * (48.0 + s * (-224.0 + 240.0 * s));
}

double truncation_overshoot() {
    double best = 1.0;
    for (int k = 0; k <= 5000; ++k) {
        const double z = 0.5 + 0.5 * k / 5000.0;
        best = std::max(best, truncation_psi(z) / z);
    }
    return best;
}

double SplitDynamics::linear_period() const { return kTwoPi / pair().tau; }

// ------------------------------------------------------------ perturbation system

namespace {

class CnStepper : public LinearStepper {
public:
    CnStepper(const DiscreteLinearOperator& L, double dt) : s_(L, dt) {}
    Vec cn_step(const Vec& v, const Vec& forcing) const override { return s_.cn_step(v, forcing); }

private:
    SemigroupStepper s_;
};

}  // namespace

PerturbationSystem::PerturbationSystem(FluxFamily f, ShockProfile p, DiscreteLinearOperator op, SpectralPair sp,
                                       Projectors pr)
    : flux(std::move(f)), eps(p.eps), profile(std::move(p)), L(std::move(op)), pair_(std::move(sp)), proj(std::move(pr)) {
    jac = profile_jacobians(profile, flux);
    flux_bar.reserve(profile.grid.size());
    for (std::size_t i = 0; i < profile.grid.size(); ++i) flux_bar.push_back(flux.flux(eps, profile.state(i)));
}

double PerturbationSystem::zero_coordinate(const Vec& f) const { return inner(profile.grid, proj.zero_left, f); }

std::shared_ptr<const LinearStepper> PerturbationSystem::stepper(double dt) const {
    return std::make_shared<CnStepper>(L, dt);
}

Vec PerturbationSystem::Q(const Vec& u) const {
    const std::size_t n = profile.dim;
    Vec out(u.size());
    for (std::size_t i = 0; i < profile.grid.size(); ++i) {
        const auto off = static_cast<Eigen::Index>(i * n);
        const auto m = static_cast<Eigen::Index>(n);
        const Vec ui = u.segment(off, m);
        const Vec full = profile.state(i) + ui;
        out.segment(off, m) = -flux.flux(eps, full) + flux_bar[i] + jac[i] * ui;
    }
    return out;
}

Vec PerturbationSystem::dxQ(const Vec& u) const { return apply_dx(profile.grid, profile.dim, Q(u), L.order); }

PerturbationSystem make_perturbation_system(const FluxFamily& flux, ShockProfile profile, const LinopOptions& linop,
                                            const SpectralPair* seed) {
    auto L = assemble_L(profile, flux, linop);
    SpectralPair pair = seed ? track_pair(L, *seed) : crossing_pair(L);
    require(pair.residual <= 1e-8, ErrorKind::Numerical, "crossing pair not resolved");
    auto proj = projections(L, &pair, profile, flux);
    return PerturbationSystem(flux, std::move(profile), std::move(L), std::move(pair), std::move(proj));
}

SpectralPair track_pair(const DiscreteLinearOperator& L, const SpectralPair& seed) {
    const auto near = eigs_near(L, seed.lambda, 4);
    const EigenPair* best = nullptr;
    for (const auto& p : near) {
        if (p.lambda.imag() <= 0) continue;
        if (!best || std::abs(p.lambda - seed.lambda) < std::abs(best->lambda - seed.lambda)) best = &p;
    }
    if (!best) fail(ErrorKind::SpectralAssumption, fmt::format("lost the crossing pair at ε = {}", L.eps));
    return pair_from_guess(L, best->lambda, best->vector, &seed.phi);
}

PerturbationSystem make_perturbation_system(const FluxFamily& flux, double eps, const Grid1D& grid,
                                            const LinopOptions& linop, const SpectralPair* seed) {
    return make_perturbation_system(flux, solve_profile(flux, eps, grid), linop, seed);
}

ShockProfile shift_profile(const ShockProfile& p, long nodes) {
    ShockProfile out = p;
    out.values = shift_nodes(p.values, nodes, &p.u_minus, &p.u_plus);
    out.derivative = shift_nodes(p.derivative, nodes);
    out.phase = p.phase + static_cast<double>(nodes) * p.grid.spacing();
    return out;
}

GridFunction shift_nodes(const GridFunction& f, long nodes, const Vec* far_left, const Vec* far_right) {
    const std::size_t n = f.components;
    const auto N = static_cast<long>(f.grid.size());
    GridFunction out(f.grid, n);
    for (long i = 0; i < N; ++i) {
        const long j = i - nodes;
        for (std::size_t c = 0; c < n; ++c) {
            double v = 0.0;
            if (j >= 0 && j < N) v = f.values[static_cast<Eigen::Index>(j * static_cast<long>(n) + static_cast<long>(c))];
            else if (j < 0 && far_left) v = (*far_left)[static_cast<Eigen::Index>(c)];
            else if (j >= N && far_right) v = (*far_right)[static_cast<Eigen::Index>(c)];
            out.values[static_cast<Eigen::Index>(i * static_cast<long>(n) + static_cast<long>(c))] = v;
        }
    }
    return out;
}

// ------------------------------------------------------------ truncated flow

namespace {

struct Forcing {
    Complex g;   // w-equation forcing 2⟨φ̃, ∂_x Q̃⟩
    Vec G;       // v-equation forcing Π̃ ∂_x Q̃
};

TruncatedFlow run_flow(const SplitDynamics& sys, Complex a, const Vec& b, double dt, std::size_t steps,
                       const FlowOptions& opt, std::size_t capture, Vec* v_capture) {
    require(dt > 0 && steps > 0, ErrorKind::Argument, "flow needs a positive step and step count");
    require(b.size() == static_cast<Eigen::Index>(sys.size()), ErrorKind::Dimension, "b has the wrong size");
    const Grid1D& g = sys.grid();
    const std::size_t n = sys.components();
    const SplitDynamics& P = sys;
    const Complex lam = sys.pair().lambda;

    TruncatedFlow fl;
    fl.dt = dt;
    fl.C0 = opt.C0;
    fl.order = opt.order;

    const auto stepper = sys.stepper(dt);
    const Complex z = lam * dt;
    Complex phi1, phi2;
    if (std::abs(z) < 1e-3) {
        phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
    } else {
        phi1 = (std::exp(z) - 1.0) / z;
        phi2 = (std::exp(z) - 1.0 - z) / (z * z);
    }
    const Complex E = std::exp(z);

    auto forcing = [&](Complex w, const Vec& v) {
        Forcing f{0.0, Vec::Zero(v.size())};
        if (!opt.nonlinear) return f;
        Vec vhat = v;
        if (opt.truncate) {
            const double target = opt.C0 * (opt.order == TruncationOrder::Linear ? std::abs(w) : std::norm(w));
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto off = static_cast<Eigen::Index>(i * n);
                const double m = v.segment(off, static_cast<Eigen::Index>(n)).norm();
                if (m == 0.0) continue;
                const double zz = target / m;
                const double psi = truncation_psi(zz);
                if (zz < 1.0) {
                    fl.truncation_active = true;
                    if (target > 0) fl.max_vhat_ratio = std::max(fl.max_vhat_ratio, psi * m / target);
                }
                vhat.segment(off, static_cast<Eigen::Index>(n)) *= psi;
            }
        }
        const Vec u = P.from_coordinate(w) + vhat;
        const Vec q = sys.forcing(u);
        f.g = P.coordinate(q);
        f.G = q - P.from_coordinate(f.g);
        return f;
    };

    Complex w = a;
    Vec v = b;
    double theta = std::arg(w == 0.0 ? Complex(1.0) : w);
    const std::size_t snap_every =
        opt.snapshots > 0 ? std::max<std::size_t>(1, steps / opt.snapshots) : std::numeric_limits<std::size_t>::max();

    auto record = [&](std::size_t k, const Forcing& f) {
        const double t = static_cast<double>(k) * dt;
        fl.t.push_back(t);
        fl.w.push_back(w);
        fl.theta.push_back(theta);
        fl.theta_dot.push_back(w == 0.0 ? 0.0 : ((lam * w + f.g) / w).imag());
        const double vx1 = x1_norm(g, n, v);
        fl.v_x1.push_back(vx1);
        if (w != 0.0) {
            const double denom = opt.order == TruncationOrder::Linear ? std::abs(w) : std::norm(w);
            fl.max_v_over_w = std::max(fl.max_v_over_w, vx1 / denom);
        }
        if (a != 0.0) {
            const double ratio = std::abs(w) / std::abs(a);
            if (ratio > opt.bound_C || ratio < 1.0 / opt.bound_C)
                fail(ErrorKind::SmallnessBox, fmt::format("|w(t)|/|a| = {} left [1/C, C] at t = {}", ratio, t));
        }
        if (k % snap_every == 0 || k == steps) {
            fl.snapshot_t.push_back(t);
            fl.snapshots.push_back(P.from_coordinate(w) + v);
        }
        if (k == capture && v_capture) *v_capture = v;
    };

    Forcing prev = forcing(w, v);
    record(0, prev);
    Forcing cur = prev;
    for (std::size_t k = 0; k < steps; ++k) {
        const Complex dg = k == 0 ? Complex(0.0) : cur.g - prev.g;
        const Complex w_new = E * w + dt * (phi1 * cur.g + phi2 * dg);
        const Vec G = k == 0 ? cur.G : Vec(1.5 * cur.G - 0.5 * prev.G);
        Vec v_new = stepper->cn_step(v, G);
        v_new = P.pi_tilde(v_new);
        if (w_new != 0.0 && w != 0.0) theta += std::arg(w_new / w);
        w = w_new;
        v = std::move(v_new);
        prev = cur;
        cur = forcing(w, v);
        record(k + 1, cur);
    }
    fl.v = v;
    return fl;
}

void trim(TruncatedFlow& fl, std::size_t steps, const Vec& v_end) {
    const std::size_t m = steps + 1;
    fl.t.resize(m);
    fl.w.resize(m);
    fl.theta.resize(m);
    fl.theta_dot.resize(m);
    fl.v_x1.resize(m);
    fl.v = v_end;
    const double t_end = fl.t.back();
    while (!fl.snapshot_t.empty() && fl.snapshot_t.back() > t_end + 1e-12) {
        fl.snapshot_t.pop_back();
        fl.snapshots.pop_back();
    }
}

}  // namespace

TruncatedFlow evolve_truncated(const SplitDynamics& sys, Complex a, const Vec& b, double t_end, std::size_t steps,
                               const FlowOptions& opt) {
    require(t_end > 0, ErrorKind::Argument, "t_end must be positive");
    return run_flow(sys, a, b, t_end / static_cast<double>(steps), steps, opt, steps, nullptr);
}

PeriodResult solve_period(const SplitDynamics& sys, double a, const Vec& b, const FlowOptions& opt) {
    const std::size_t M = opt.steps_per_period;
    require(M >= 8, ErrorKind::Argument, "too few steps per period");
    const double tau = sys.pair().tau;
    const double T0 = kTwoPi / tau;
    PeriodResult res;
    if (a == 0.0) {
        res.T = T0;
        res.flow = run_flow(sys, a, b, T0 / static_cast<double>(M), M, opt, M, nullptr);
        res.runs = 1;
        return res;
    }
    const double lo = std::numbers::pi / tau, hi = 3.0 * std::numbers::pi / tau;
    double T = T0;
    bool wide = true;
    for (std::size_t run = 0; run < 12; ++run) {
        const double dt = T / static_cast<double>(M);
        const std::size_t steps = wide ? static_cast<std::size_t>(std::ceil(hi / dt)) : M + std::max<std::size_t>(8, M / 16);
        Vec vM;
        auto fl = run_flow(sys, a, b, dt, steps, opt, M, &vM);
        ++res.runs;
        const double target = fl.theta[0] + kTwoPi;
        // first crossing of θ = θ(0) + 2π
        std::size_t cross = steps;
        for (std::size_t k = 0; k < steps; ++k)
            if (fl.theta[k] < target && fl.theta[k + 1] >= target) {
                cross = k;
                break;
            }
        const std::size_t upto = std::min(steps, std::max(cross + 1, M));
        double mind = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k <= upto; ++k) mind = std::min(mind, fl.theta_dot[k]);
        if (mind < 0.5 * tau)
            fail(ErrorKind::TruncationConstant,
                 fmt::format("angular speed {} fell below τ/2 = {} (a = {})", mind, 0.5 * tau, a));
        res.min_theta_dot = mind;

        const double err = fl.theta[M] - target;
        if (std::abs(err) <= 1e-10) {
            trim(fl, M, vM);
            res.T = T;
            res.flow = std::move(fl);
            res.theta_error = std::abs(err);
            return res;
        }
        if (cross == steps) {
            if (wide) fail(ErrorKind::TruncationConstant, "θ does not reach 2π inside [π/τ, 3π/τ]");
            wide = true;
            continue;
        }
        // cubic Hermite on [t_k, t_{k+1}] and Newton for the crossing
        const double th0 = fl.theta[cross], th1 = fl.theta[cross + 1];
        const double d0 = fl.theta_dot[cross] * dt, d1 = fl.theta_dot[cross + 1] * dt;
        auto H = [&](double s) {
            const double s2 = s * s, s3 = s2 * s;
            return (2 * s3 - 3 * s2 + 1) * th0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * th1 + (s3 - s2) * d1;
        };
        auto dH = [&](double s) {
            const double s2 = s * s;
            return (6 * s2 - 6 * s) * th0 + (3 * s2 - 4 * s + 1) * d0 + (-6 * s2 + 6 * s) * th1 + (3 * s2 - 2 * s) * d1;
        };
        double s = (target - th0) / (th1 - th0);
        for (int it = 0; it < 30; ++it) {
            const double step = (H(s) - target) / dH(s);
            s = std::clamp(s - step, 0.0, 1.0);
            if (std::abs(step) < 1e-15) break;
        }
        const double T_new = (static_cast<double>(cross) + s) * dt;
        if (T_new < lo || T_new > hi)
            fail(ErrorKind::TruncationConstant, fmt::format("period {} outside [π/τ, 3π/τ]", T_new));
        T = T_new;
        wide = false;
    }
    fail(ErrorKind::Nonconvergence, "period iteration did not settle");
}

// ------------------------------------------------------------ Poincaré system

PoincareContext::PoincareContext(DynamicsFactory make, FlowOptions flow, InverseOptions series)
    : make_(std::move(make)), flow_(flow), series_(series) {
    auto sys = make_(0.0, nullptr);
    seed_ = sys->pair();
    cache_.emplace(0.0, make_entry(std::move(sys)));
}

PoincareContext::Entry PoincareContext::make_entry(std::shared_ptr<const SplitDynamics> sys) const {
    const double dt = sys->linear_period() / static_cast<double>(flow_.steps_per_period);
    auto st = sys->stepper(dt);
    return Entry{std::move(sys), std::move(st)};
}

const PoincareContext::Entry& PoincareContext::entry(double eps) const {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(eps);
        if (it != cache_.end()) return it->second;
    }
    Entry e = make_entry(make_(eps, &seed_));
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(eps, std::move(e)).first->second;
}

std::shared_ptr<const SplitDynamics> PoincareContext::at(double eps) const { return entry(eps).sys; }

Vec PoincareContext::apply_S(double eps, const Vec& x) const {
    const Entry& e = entry(eps);
    const SplitDynamics& P = *e.sys;
    Vec y = P.pi_tilde(x) - P.pi_zero(x);
    const Vec none;
    for (std::size_t k = 0; k < flow_.steps_per_period; ++k) y = P.pi_tilde(e.stepper->cn_step(y, none));
    return y;
}

PoincareSystem assemble_poincare(const std::string& name, DynamicsFactory make, const FlowOptions& flow,
                                 const InverseOptions& series) {
    PoincareSystem ps;
    ps.context = std::make_shared<PoincareContext>(std::move(make), flow, series);
    auto ctx = ps.context;
    const auto s0 = ctx->at(0.0);
    const Grid1D grid = s0->grid();
    const std::size_t n = s0->components();
    DiscreteSystem& sys = ps.system;
    sys.name = "poincare_" + name;
    sys.dim_b = grid.size() * n;
    sys.R = [ctx](double eps) {
        const auto s = ctx->at(eps);
        return std::exp(kTwoPi * s->pair().gamma / s->pair().tau);
    };
    sys.evaluate = [ctx](double eps, double a, const Vec& b) {
        const auto s = ctx->at(eps);
        StepEval ev;
        ev.R = std::exp(kTwoPi * s->pair().gamma / s->pair().tau);
        ev.period = s->linear_period();
        if (a == 0.0 && b.cwiseAbs().maxCoeff() == 0.0) {
            ev.N2 = Vec::Zero(b.size());
            return ev;
        }
        const auto pr = solve_period(*s, a, b, ctx->flow());
        ev.period = pr.T;
        ev.N1 = std::abs(pr.flow.w.back()) - ev.R * a;
        const Vec d = pr.flow.v - ctx->apply_S(eps, b);
        ev.N2 = d - s->pi_zero(d);
        return ev;
    };
    sys.right_inverse = [ctx, grid, n](double eps, const Vec& src) {
        TransverseOperator op;
        op.name = "poincare_S";
        op.grid = grid;
        op.components = n;
        op.period = ctx->at(eps)->linear_period();
        op.apply = [ctx, eps, grid, n](const GridFunction& f) {
            return GridFunction(grid, n, ctx->apply_S(eps, f.values));
        };
        op.dx = central_dx;
        op.requires_projection = true;
        op.has_projection = true;
        return apply_right_inverse_source(op, GridFunction(grid, n, src), ctx->series()).b.values;
    };
    sys.weak_norm = [grid, n](const Vec& v) { return l2_norm(grid, n, v); };
    sys.strong_norm = [grid, n](const Vec& v) { return x1_norm(grid, n, v); };
    return ps;
}

PoincareSystem assemble_poincare(const FluxFamily& flux, const ReturnMapOptions& opt) {
    DynamicsFactory make = [flux, opt](double eps, const SpectralPair* seed) -> std::shared_ptr<const SplitDynamics> {
        return std::make_shared<PerturbationSystem>(make_perturbation_system(flux, eps, opt.grid, opt.linop, seed));
    };
    return assemble_poincare(flux.name, std::move(make), opt.flow, opt.series);
}

// ------------------------------------------------------------ periodic orbit

PeriodicOrbit find_periodic_orbit(const PoincareSystem& ps, double a, const OrbitOptions& opt) {
    const auto& ctx = *ps.context;
    const auto s0 = ctx.at(0.0);
    const Grid1D& g = s0->grid();
    const std::size_t n = s0->components();
    PeriodicOrbit orb;
    orb.a = a;
    orb.grid = g;
    orb.components = n;
    if (a == 0.0) {
        orb.period = s0->linear_period();
        orb.b = Vec::Zero(static_cast<Eigen::Index>(g.size() * n));
        orb.u0 = orb.b;
        return orb;
    }
    const auto curve = solve_branch(ps.system, {a}, {}, opt.branch);
    const auto& pt = curve.points.front();
    orb.eps = pt.eps;
    orb.f_resid = pt.f_resid;
    orb.g_resid = pt.g_resid;
    orb.b = pt.b;
    orb.b_x1 = x1_norm(g, n, pt.b);
    const auto s = ctx.at(pt.eps);

    FlowOptions fo = ctx.flow();
    const auto pr = solve_period(*s, a, pt.b, fo);
    orb.period = pr.T;
    orb.max_v_over_w = pr.flow.max_v_over_w;
    orb.truncation_active = pr.flow.truncation_active;
    if (orb.truncation_active || !(orb.max_v_over_w < 0.5 * fo.C0))
        fail(ErrorKind::Inconsistency,
             fmt::format("truncation active at the solution (max ‖v‖/|w| = {}, C0 = {})", orb.max_v_over_w, fo.C0));

    // the orbit must also solve the untruncated equations
    fo.truncate = false;
    fo.snapshots = opt.snapshots;
    const auto fl = evolve_truncated(*s, a, pt.b, pr.T, fo.steps_per_period, fo);
    const SplitDynamics& P = *s;
    const Vec u0 = P.from_coordinate(a) + pt.b;
    orb.u0 = u0;
    const Vec uT = P.from_coordinate(fl.w.back()) + fl.v;
    orb.periodicity_residual = l2_norm(g, n, Vec(uT - u0)) / l2_norm(g, n, u0);
    orb.drift_coefficient = P.zero_coordinate(Vec(uT - u0));

    const Vec bg = P.background(), fl_left = P.far_left(), fl_right = P.far_right();
    const GridFunction U0(g, n, bg + u0);
    const GridFunction UT(g, n, bg + uT);
    boost::uintmax_t iters = 100;
    const double br = 0.5;
    const auto m = boost::math::tools::brent_find_minima(
        [&](double c) {
            const auto sh = translate(UT, c, &fl_left, &fl_right);
            return l2_norm(g, n, Vec(sh.values - U0.values));
        },
        -br, br, 40, iters);
    orb.drift_shift = m.first;

    orb.snapshot_t = fl.snapshot_t;
    orb.snapshots = fl.snapshots;
    for (const auto& u : fl.snapshots) {
        orb.amplitude.push_back(x1_norm(g, n, u));
        const Vec d = u - u0;
        for (std::size_t c = 0; c < n; ++c)
            orb.mass_drift = std::max(orb.mass_drift, std::abs(integral(GridFunction(g, n, d), c)));
        orb.projection_defect =
            std::max(orb.projection_defect, l2_norm(g, n, P.pi_tilde(u)) / std::max(l2_norm(g, n, u), 1e-300));
    }
    return orb;
}

double translated_periodicity_residual(const FluxFamily& flux, const ReturnMapOptions& opt, const PeriodicOrbit& orb,
                                       long nodes) {
    const auto base = make_perturbation_system(flux, orb.eps, opt.grid, opt.linop);
    const Grid1D& g = base.profile.grid;
    const std::size_t n = base.profile.dim;
    require(orb.u0.size() == static_cast<Eigen::Index>(base.size()), ErrorKind::Dimension, "orbit and grid differ");
    LinopOptions lo = opt.linop;
    if (lo.planted) lo.planted->center += static_cast<double>(nodes) * g.spacing();
    SpectralPair seed = base.pair();
    seed.phi = shift_nodes(GridFunction(g, n, seed.phi.real()), nodes).values.cast<Complex>() +
               Complex(0, 1) * shift_nodes(GridFunction(g, n, seed.phi.imag()), nodes).values.cast<Complex>();
    const auto sys = make_perturbation_system(flux, shift_profile(base.profile, nodes), lo, &seed);

    const Vec s0 = shift_nodes(GridFunction(g, n, orb.u0), nodes).values;
    const Complex w0 = sys.coordinate(s0);
    const Vec v0 = s0 - sys.from_coordinate(w0);
    FlowOptions fo = opt.flow;
    fo.truncate = false;
    const auto fl = evolve_truncated(sys, w0, v0, orb.period, fo.steps_per_period, fo);
    const Vec sT = sys.from_coordinate(fl.w.back()) + fl.v;
    return l2_norm(g, n, Vec(sT - s0)) / l2_norm(g, n, s0);
}

std::string PeriodicOrbit::to_json() const {
    nlohmann::json j;
    j["schema"] = 1;
    j["a"] = a;
    j["epsilon"] = eps;
    j["period"] = period;
    j["f_resid"] = f_resid;
    j["g_resid"] = g_resid;
    j["periodicity_residual"] = periodicity_residual;
    j["max_v_over_w"] = max_v_over_w;
    j["truncation_active"] = truncation_active;
    j["drift_shift"] = drift_shift;
    j["drift_coefficient"] = drift_coefficient;
    j["mass_drift"] = mass_drift;
    j["projection_defect"] = projection_defect;
    j["b_x1"] = b_x1;
    j["grid"] = {{"half_width", grid.half_width()}, {"points", grid.size()}, {"components", components}};
    j["snapshot_t"] = snapshot_t;
    j["amplitude"] = amplitude;
    auto snaps = nlohmann::json::array();
    for (const auto& s : snapshots) snaps.push_back(std::vector<double>(s.data(), s.data() + s.size()));
    j["snapshots"] = snaps;
    return j.dump();
}

std::string PeriodicOrbit::amplitude_csv() const {
    std::string s = "t,amplitude\n";
    for (std::size_t k = 0; k < amplitude.size(); ++k) s += fmt::format("{:.17g},{:.17g}\n", snapshot_t[k], amplitude[k]);
    return s;
}

std::string PeriodicOrbit::heatmap_svg(std::size_t component) const {
    const std::size_t cols_full = grid.size();
    const std::size_t stride = std::max<std::size_t>(1, cols_full / 300);
    const std::size_t cols = (cols_full + stride - 1) / stride;
    std::vector<double> vals;
    for (const auto& s : snapshots)
        for (std::size_t i = 0; i < cols_full; i += stride)
            vals.push_back(s[static_cast<Eigen::Index>(i * components + component)]);
    const double t1 = snapshot_t.empty() ? 1.0 : snapshot_t.back();
    return svg::heatmap({fmt::format("u - ubar, component {}", component), "x", "t"}, vals, snapshots.size(), cols,
                        -grid.half_width(), grid.half_width(), 0.0, t1);
}

}  // namespace hopfshock
