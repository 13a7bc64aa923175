#include "hopfshock/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/numeric/odeint.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hopfshock/bifurcation.hpp"
#include "hopfshock/error.hpp"
#include "hopfshock/kernels.hpp"
#include "hopfshock/multid.hpp"
#include "hopfshock/resummation.hpp"
#include "hopfshock/svg.hpp"

namespace hopfshock {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------------ config io

/// Object reader that rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorKind::Configuration, path_ + " must be an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(ErrorKind::Configuration, "unknown key " + path_ + "." + k);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::Configuration, path_ + "." + key + ": " + e.what());
        }
    }
    Reader child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Reader(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

const char* truncation_name(TruncationOrder o) { return o == TruncationOrder::Linear ? "linear" : "quadratic"; }

std::string fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------- stages

struct StageOutput {
    std::vector<Artifact> artifacts;
    std::vector<CriterionResult> criteria;
    std::vector<Constant> constants;
};

struct StageContext {
    const RunConfig& cfg;
    std::string hash;
    StageOutput out;
    std::string stage;

    std::string file(const std::string& kind, const std::string& ext) const {
        return kind + "-" + hash + "." + ext;
    }
    void artifact(const std::string& kind, const std::string& ext, std::string content) {
        out.artifacts.push_back({file(kind, ext), std::move(content)});
    }
    void constant(const std::string& name, double v) { out.constants.push_back({stage, name, v}); }
    void criterion(int id, std::string name, bool numeric, std::string measured, std::string tolerance, double secs,
                   double limit = 0.0) {
        CriterionResult c;
        c.id = id;
        c.name = std::move(name);
        c.stage = stage;
        c.numeric_pass = numeric;
        c.runtime_pass = limit <= 0.0 || secs < limit;
        c.status = c.numeric_pass && c.runtime_pass ? CriterionStatus::Pass : CriterionStatus::Fail;
        c.measured = std::move(measured);
        c.tolerance = std::move(tolerance);
        c.seconds = secs;
        out.criteria.push_back(std::move(c));
    }
};

Grid1D main_grid(const RunConfig& c) { return Grid1D(c.half_width, c.nodes); }

LinopOptions linop_options(const RunConfig& c) { return LinopOptions{c.operator_order, c.planted}; }

FlowOptions flow_options(const RunConfig& c) {
    FlowOptions f;
    f.C0 = c.truncation.C0;
    f.order = c.truncation.order;
    f.steps_per_period = c.truncation.steps_per_period;
    return f;
}

InverseOptions series_options(const RunConfig& c) {
    return InverseOptions{c.tol.series, c.tol.series_verify, 400, false, ContinuizationOrder::Trapezoid};
}

ReturnMapOptions returnmap_options(const RunConfig& c, const Grid1D& grid) {
    ReturnMapOptions o;
    o.grid = grid;
    o.linop = linop_options(c);
    o.flow = flow_options(c);
    o.series = series_options(c);
    return o;
}

OrbitOptions orbit_options(const RunConfig& c) {
    OrbitOptions o;
    o.branch.reduction.tol = c.tol.reduction;
    o.branch.ift.tol = c.tol.orbit;
    o.branch.threads = c.threads;
    o.snapshots = c.hopf.snapshots;
    return o;
}

std::string grid_function_csv(const GridFunction& f) {
    std::string s = "x";
    for (std::size_t c = 0; c < f.components; ++c) s += fmt::format(",u{}", c);
    s += "\n";
    for (std::size_t i = 0; i < f.grid.size(); ++i) {
        s += num(f.grid.x(i));
        for (std::size_t c = 0; c < f.components; ++c) s += "," + num(f.at(i, c));
        s += "\n";
    }
    return s;
}

void stage_profile(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto flux = flux_by_name(cfg.exemplar);
    const auto lax = classify_lax(flux, 0.0);
    require(lax.lax_ok, ErrorKind::SpectralAssumption, "exemplar is not a Lax shock: " + lax.reason);
    const auto p = solve_profile(flux, 0.0, main_grid(cfg));
    ctx.artifact("profile", "json", profile_to_json(p));
    ctx.artifact("profile", "csv", grid_function_csv(p.values));
    std::vector<svg::Series> series;
    for (std::size_t c = 0; c < p.dim; ++c) {
        svg::Series s{fmt::format("u{}", c), {}, {}, false};
        for (std::size_t i = 0; i < p.grid.size(); ++i) {
            s.x.push_back(p.grid.x(i));
            s.y.push_back(p.values.at(i, c));
        }
        series.push_back(std::move(s));
    }
    ctx.artifact("profile", "svg", svg::line_plot({"profile " + cfg.exemplar, "x", "u", false, false}, series));
    ctx.constant("decay_rate", decay_rate(p));
    ctx.constant("ode_residual", p.ode_residual);
    ctx.constant("rh_residual", lax.rh_residual);
    ctx.constant("lax_family", static_cast<double>(lax.family));

    // Burgers against -tanh(x/2)
    const auto t0 = std::chrono::steady_clock::now();
    const Grid1D g(20.0, 2001);
    const auto b = solve_profile(burgers(), 0.0, g);
    double err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(b.values.at(i) + std::tanh(g.x(i) / 2)));
    const double eta = decay_rate(b);
    const double secs = seconds_since(t0);
    ctx.constant("burgers_sup_error", err);
    ctx.constant("burgers_decay_rate", eta);
    ctx.criterion(9, "Burgers profile", err <= 1e-6 && std::abs(eta - 1.0) <= 0.02,
                  fmt::format("sup error {:.3g}, eta {:.6f}", err, eta),
                  "sup error <= 1e-6 on [-20,20] with 2001 nodes, |eta - 1| <= 0.02, runtime < 1 s", secs, 1.0);
}

void stage_spectrum(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto flux = flux_by_name(cfg.exemplar);
    const auto grid = main_grid(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const auto p = solve_profile(flux, 0.0, grid);
    const auto L = assemble_L(p, flux, linop_options(cfg));
    const auto pair = crossing_pair(L);
    require(pair.residual <= cfg.tol.eigen, ErrorKind::SpectralAssumption,
            fmt::format("crossing pair residual {:.3g} above tolerance", pair.residual));
    ctx.constant("gamma0", pair.gamma);
    ctx.constant("tau0", pair.tau);
    ctx.constant("pair_residual", pair.residual);

    auto found = pair.found;
    std::sort(found.begin(), found.end(), [](Complex a, Complex b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() < b.imag();
    });
    std::string eig = "re,im\n";
    for (auto z : found) eig += num(z.real()) + "," + num(z.imag()) + "\n";
    ctx.artifact("eigenvalues", "csv", eig);

    // γ(ε), τ(ε) across the configured range
    std::string sweep = "epsilon,gamma,tau\n";
    std::vector<double> es, gs;
    const std::size_t m = cfg.spectrum.eps_samples;
    for (std::size_t k = 0; k < m; ++k) {
        const double e = m == 1 ? cfg.spectrum.eps_min
                                : cfg.spectrum.eps_min + (cfg.spectrum.eps_max - cfg.spectrum.eps_min) * k / (m - 1.0);
        const auto pe = solve_profile(flux, e, grid);
        const auto sp = crossing_pair(assemble_L(pe, flux, linop_options(cfg)));
        sweep += num(e) + "," + num(sp.gamma) + "," + num(sp.tau) + "\n";
        es.push_back(e);
        gs.push_back(sp.gamma);
    }
    ctx.artifact("spectrum", "csv", sweep);
    if (m >= 2) ctx.constant("crossing_speed", fit_line(es, gs).slope);

    Vec xi(401);
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = -4.0 + 8.0 * static_cast<double>(k) / 400.0;
    const auto env = essential_envelope(flux, 0.0, xi);
    std::vector<svg::Series> series;
    for (std::size_t c = 0; c < env.curves.size(); ++c) {
        svg::Series s{fmt::format("essential {}", c), {}, {}, false};
        for (Eigen::Index k = 0; k < env.curves[c].size(); ++k) {
            s.x.push_back(env.curves[c][k].real());
            s.y.push_back(env.curves[c][k].imag());
        }
        series.push_back(std::move(s));
    }
    svg::Series pts{"eigenvalues", {}, {}, true};
    for (auto z : found) {
        pts.x.push_back(z.real());
        pts.y.push_back(z.imag());
    }
    series.push_back(std::move(pts));
    ctx.artifact("spectrum", "svg", svg::line_plot({"spectrum at epsilon = 0", "Re", "Im", false, false}, series));

    // zero eigenstructure
    const auto P = projections(L, &pair, p, flux);
    const double lu = l2_norm(grid, p.dim, L.apply(p.derivative.values));
    std::mt19937 rng(static_cast<unsigned>(cfg.spectrum.projection_seed));
    std::normal_distribution<double> nd;
    Vec f(static_cast<Eigen::Index>(L.size()));
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = nd(rng);
    const Vec pf = P.pi(f);
    const double idem = l2_norm(grid, p.dim, Vec(P.pi(pf) - pf)) / l2_norm(grid, p.dim, f);
    const double secs = seconds_since(t0);
    ctx.constant("pair_mass", pair.mass);
    ctx.constant("L_ubar_prime", lu);
    ctx.constant("projection_idempotence", idem);
    ctx.criterion(8, "zero eigenstructure", pair.mass <= 1e-8 && lu <= 1e-6 && idem <= 1e-10,
                  fmt::format("|int phi| {:.3g}, |L u'| {:.3g}, idempotence {:.3g}", pair.mass, lu, idem),
                  "|int phi| <= 1e-8, |L u'| <= 1e-6, |Pi Pi f - Pi f|/|f| <= 1e-10", secs);
}

void stage_kernels(StageContext& ctx) {
    const auto& kc = ctx.cfg.kernels;
    const auto t0 = std::chrono::steady_clock::now();
    const auto k = ModelKernel::gaussian(kc.speed);
    const Grid1D grid(kc.half_width, kc.nodes);
    const auto times = logspace(kc.t_min, kc.t_max, kc.t_samples);
    std::string csv = "alpha,beta,exponent,expected,constant,residual\n";
    std::vector<svg::Series> series;
    double worst = 0.0;
    std::string measured;
    for (const auto& ab : kc.pairs) {
        const auto law = fit_norm_law(k, ab[0], ab[1], NormKind::B1, times, grid);
        const double expected = -(1.0 + 2.0 * ab[0] + 2.0 * ab[1]) / 4.0;
        worst = std::max(worst, std::abs(law.exponent - expected));
        csv += fmt::format("{},{},{},{},{},{}\n", ab[0], ab[1], num(law.exponent), num(expected), num(law.constant),
                           num(law.residual));
        ctx.constant(fmt::format("exponent_{}_{}", ab[0], ab[1]), law.exponent);
        measured += fmt::format("{}({},{}) {:.4f}", measured.empty() ? "" : ", ", ab[0], ab[1], law.exponent);
        series.push_back({fmt::format("alpha={} beta={}", ab[0], ab[1]), law.times, law.norms, true});
    }
    const double secs = seconds_since(t0);
    ctx.artifact("kernels", "csv", csv);
    ctx.artifact("kernels", "svg", svg::line_plot({"kernel norm laws", "T", "norm", true, true}, series));
    ctx.criterion(1, "kernel decay laws", worst <= 0.03,
                  fmt::format("{}; max deviation {:.4f}", measured, worst),
                  "|exponent + (1+2alpha+2beta)/4| <= 0.03 over T in [1,1000], runtime < 20 s", secs, 20.0);
}

GridFunction gaussian_squared(const Grid1D& g) {
    return GridFunction::sample(g, [](double x) { return std::exp(-x * x); });
}

void stage_resum(StageContext& ctx) {
    const auto& rc = ctx.cfg.resum;
    const auto& kc = ctx.cfg.kernels;

    // naive vs resummed
    auto t0 = std::chrono::steady_clock::now();
    const auto naive = naive_sum_norms(ModelKernel::gaussian(rc.speed), 1, rc.period, rc.naive_terms,
                                       Grid1D(kc.half_width, kc.nodes));
    const Grid1D eg = Grid1D::with_spacing(rc.envelope_half_width, rc.spacing);
    const auto env = apply_right_inverse(heat_model_operator(eg, rc.envelope_speed, rc.period), gaussian_squared(eg));
    double secs = seconds_since(t0);
    ctx.constant("naive_growth_exponent", naive.growth_exponent);
    ctx.constant("envelope_exponent", env.ledger.envelope_exponent);
    ctx.constant("envelope_constant", env.ledger.envelope_constant);
    {
        std::string s = "N,cumulative\n";
        for (std::size_t j = 0; j < naive.cumulative.size(); ++j) s += fmt::format("{},{}\n", j + 1, num(naive.cumulative[j]));
        ctx.artifact("naive", "csv", s);
    }
    ctx.criterion(2, "conditional vs absolute convergence",
                  std::abs(naive.growth_exponent - 0.25) <= 0.05 && std::abs(env.ledger.envelope_exponent + 0.25) <= 0.05,
                  fmt::format("naive growth {:.4f}, envelope {:.4f}", naive.growth_exponent,
                              env.ledger.envelope_exponent),
                  "growth 0.25 +- 0.05, envelope -0.25 +- 0.05, runtime < 30 s", secs, 30.0);

    // cancellation identity and the defining equation
    t0 = std::chrono::steady_clock::now();
    const auto k = ModelKernel::gaussian(rc.speed);
    std::mt19937_64 rng(rc.identity_seed);
    std::uniform_real_distribution<double> ux(-30, 30), ult(std::log(0.5), std::log(100.0));
    double id_res = 0.0;
    for (std::size_t i = 0; i < rc.identity_samples; ++i) {
        const double x = ux(rng), y = ux(rng), t = std::exp(ult(rng));
        const double lhs = kernel_derivative(k, 1, 0, x, t, y);
        const double rhs = (kernel_derivative(k, 0, 1, x, t, y) - kernel_derivative(k, 2, 0, x, t, y)) / k.a;
        id_res = std::max(id_res, std::abs(lhs - rhs));
    }
    const Grid1D mg = Grid1D::with_spacing(rc.mass_half_width, rc.spacing);
    const auto n = gaussian_squared(mg);
    const auto inv = apply_right_inverse(heat_model_operator(mg, rc.speed, rc.period), n);
    secs = seconds_since(t0);
    ctx.constant("identity_residual", id_res);
    ctx.constant("defining_residual", inv.ledger.residual);
    ctx.criterion(3, "cancellation identity", id_res <= 1e-10 && inv.ledger.residual <= 1e-6,
                  fmt::format("pointwise {:.3g} on {} samples, |(Id-S)b - N2| {:.3g}", id_res, rc.identity_samples,
                              inv.ledger.residual),
                  "pointwise <= 1e-10, defining residual <= 1e-6", secs);

    ctx.artifact("ledger", "csv", inv.ledger.to_csv());
    {
        svg::Series inc{"increment", {}, {}, false};
        for (const auto& r : inv.ledger.records)
            if (r.j > 0 && r.increment_norm > 0) {
                inc.x.push_back(static_cast<double>(r.j));
                inc.y.push_back(r.increment_norm);
            }
        ctx.artifact("ledger", "svg", svg::line_plot({"series increments", "j", "|S^j N2|", true, true}, {inc}));
    }

    // mass escape: partial sums keep zero mass until the drifting front reaches the boundary
    const double n_l1 = norm_l1(n);
    // last j whose Gaussian tail at the absorbing end is below e^{-23}
    std::size_t j_max = 0;
    for (std::size_t j = 1; j < 100000; ++j) {
        const double d = rc.mass_half_width - std::abs(rc.speed) * rc.period * static_cast<double>(j);
        if (d <= 0 || d * d < 4.0 * rc.period * static_cast<double>(j) * std::log(1e10)) break;
        j_max = j;
    }
    double worst_mass = 0.0;
    for (const auto& r : inv.ledger.records)
        if (r.j <= j_max) worst_mass = std::max(worst_mass, std::abs(r.mass));
    const double escaped = std::abs(integral(inv.b, 0));
    ctx.constant("partial_sum_mass", worst_mass / n_l1);
    ctx.constant("escaped_mass", escaped);
    ctx.criterion(5, "mass escape", worst_mass <= 1e-8 * n_l1 && escaped > 100 * 1e-8 * n_l1,
                  fmt::format("partial sums j <= {}: {:.3g} (relative), |int b| {:.6g}", j_max, worst_mass / n_l1, escaped),
                  "partial-sum mass <= 1e-8 |n|_1 before boundary contact, |int b| > 1e-6 |n|_1", 0.0);

    // Simpson continuization
    t0 = std::chrono::steady_clock::now();
    const auto cont = continuization_error(ModelKernel::gaussian(rc.continuization_speed), rc.period, rc.continuization_n,
                                           ContinuizationOrder::Simpson,
                                           Grid1D::with_spacing(rc.continuization_half_width, rc.continuization_spacing));
    secs = seconds_since(t0);
    {
        std::string s = "N,theta_norm,tail_norm\n";
        for (std::size_t i = 0; i < cont.n_values.size(); ++i)
            s += fmt::format("{},{},{}\n", cont.n_values[i], num(cont.theta_norms[i]), num(cont.tail_norms[i]));
        ctx.artifact("continuization", "csv", s);
    }
    ctx.constant("simpson_tail_exponent", cont.tail_exponent);
    ctx.criterion(4, "Simpson continuization", std::abs(cont.tail_exponent + 1.75) <= 0.1,
                  fmt::format("tail exponent {:.4f}", cont.tail_exponent), "-1.75 +- 0.1", secs);
}

// Planar normal form in Cartesian coordinates by adaptive Dormand-Prince,
// Newton in ε on r(T) = a.
double oracle_radius(double eps, double sigma, double a, double T) {
    using State = std::array<double, 2>;
    const double w = 2 * std::numbers::pi / T;
    auto rhs = [&](const State& s, State& ds, double) {
        const double r2 = s[0] * s[0] + s[1] * s[1];
        ds[0] = eps * s[0] - w * s[1] - sigma * s[0] * r2;
        ds[1] = w * s[0] + eps * s[1] - sigma * s[1] * r2;
    };
    State s{a, 0.0};
    namespace ode = boost::numeric::odeint;
    ode::integrate_adaptive(ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5<State>()), rhs, s, 0.0, T, 1e-3);
    return std::hypot(s[0], s[1]);
}

double oracle_eps(double sigma, double a, double T) {
    double e = 0.0;
    for (int k = 0; k < 30; ++k) {
        const double d = 1e-7;
        const double g = oracle_radius(e, sigma, a, T) - a;
        const double dg = (oracle_radius(e + d, sigma, a, T) - oracle_radius(e - d, sigma, a, T)) / (2 * d);
        const double step = g / dg;
        e -= step;
        if (std::abs(step) < 1e-15) break;
    }
    return e;
}

void hopf_normal_form(StageContext& ctx) {
    const auto& hc = ctx.cfg.hopf;
    const auto t0 = std::chrono::steady_clock::now();
    BranchOptions bo;
    bo.threads = ctx.cfg.threads;
    NormalFormParams sup, sub;
    sub.sigma = -1.0;
    const auto cs = solve_branch(normal_form_system(sup), hc.normal_form_a, {}, bo);
    const auto cb = solve_branch(normal_form_system(sub), hc.normal_form_a, {}, bo);
    double dev_oracle = 0.0, dev_square = 0.0;
    bool flipped = true;
    for (std::size_t i = 0; i < hc.normal_form_a.size(); ++i) {
        const double a = hc.normal_form_a[i];
        if (a == 0.0) continue;
        const auto& p = cs.points[i];
        const double ref = oracle_eps(1.0, a, sup.period);
        dev_oracle = std::max(dev_oracle, std::abs(p.eps - ref) / std::abs(ref));
        dev_square = std::max(dev_square, std::abs(p.eps - a * a) / (a * a));
        const auto& q = cb.points[i];
        const double ref_sub = oracle_eps(-1.0, a, sub.period);
        flipped = flipped && q.eps < 0.0;
        dev_oracle = std::max(dev_oracle, std::abs(q.eps - ref_sub) / std::abs(ref_sub));
    }
    const double secs = seconds_since(t0);
    ctx.artifact("normal_form", "csv", cs.to_csv());
    ctx.constant("normal_form_oracle_deviation", dev_oracle);
    ctx.constant("normal_form_square_deviation", dev_square);
    ctx.criterion(6, "Hopf normal-form oracle", dev_oracle <= 1e-3 && dev_square <= 1e-3 && flipped,
                  fmt::format("vs RK+Newton {:.3g}, vs a^2 {:.3g}, subcritical sign {}", dev_oracle,
                              dev_square, flipped ? "flipped" : "not flipped"),
                  "relative deviation <= 1e-3 for a in [0.01, 0.1], subcritical eps < 0, runtime < 10 s", secs, 10.0);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void hopf_orbits(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& hc = cfg.hopf;
    const auto flux = flux_by_name(cfg.exemplar);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid1D grid = main_grid(cfg);
    const auto ps = assemble_poincare(flux, returnmap_options(cfg, grid));
    const auto oo = orbit_options(cfg);

    std::vector<PeriodicOrbit> orbs;
    for (double a : hc.a_samples) orbs.push_back(find_periodic_orbit(ps, a, oo));
    const double tau0 = ps.context->at(0.0)->pair().tau;
    const double T_lin = 2 * std::numbers::pi / tau0;

    BifurcationCurve curve;
    curve.points.push_back({0.0, 0.0, T_lin, 0.0, 0.0, {}, 0});
    for (const auto& o : orbs) curve.points.push_back({o.a, o.eps, o.period, o.f_resid, o.g_resid, {}, 0});
    ctx.artifact("branch", "csv", curve.to_csv());
    ctx.artifact("branch", "svg", curve.to_svg());

    const auto it = std::find(hc.a_samples.begin(), hc.a_samples.end(), hc.orbit_a);
    const auto& main = orbs[static_cast<std::size_t>(it - hc.a_samples.begin())];
    ctx.artifact("orbit", "json", main.to_json());
    ctx.artifact("orbit", "csv", main.amplitude_csv());
    ctx.artifact("orbit", "svg", main.heatmap_svg());

    double worst_resid = 0.0;
    bool inactive = true;
    for (const auto& o : orbs) {
        worst_resid = std::max(worst_resid, o.periodicity_residual);
        inactive = inactive && !o.truncation_active;
        ctx.constant(fmt::format("epsilon_a{}", num(o.a)), o.eps);
        ctx.constant(fmt::format("period_a{}", num(o.a)), o.period);
        ctx.constant(fmt::format("periodicity_residual_a{}", num(o.a)), o.periodicity_residual);
    }

    // T*(a) → 2π/τ(0): least-squares quadratic in a
    const auto m = static_cast<Eigen::Index>(orbs.size());
    Mat A(m, 3);
    Vec y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = orbs[static_cast<std::size_t>(i)].a;
        A(i, 0) = 1.0;
        A(i, 1) = a;
        A(i, 2) = a * a;
        y[i] = orbs[static_cast<std::size_t>(i)].period;
    }
    const double T0 = A.colPivHouseholderQr().solve(y)[0];
    const double intercept_err = std::abs(T0 - T_lin) / T_lin;
    ctx.constant("period_intercept", T0);

    // amplitude ledger across every a-doubling in the samples
    double drift = 0.0;
    std::size_t doublings = 0;
    double spread = 1.0;
    for (const auto& o : orbs) {
        const auto [lo, hi] = std::minmax_element(o.amplitude.begin(), o.amplitude.end());
        spread = std::max(spread, *lo > 0 ? *hi / *lo : INFINITY);
    }
    for (std::size_t i = 0; i < orbs.size(); ++i)
        for (std::size_t j = 0; j < orbs.size(); ++j)
            if (std::abs(orbs[j].a - 2 * orbs[i].a) <= 1e-12 * orbs[j].a) {
                const double r1 = mean(orbs[i].amplitude) / orbs[i].a, r2 = mean(orbs[j].amplitude) / orbs[j].a;
                drift = std::max(drift, std::abs(r2 - r1) / r1);
                ++doublings;
            }
    ctx.constant("amplitude_ratio_drift", drift);

    double grid_change = 0.0;
    if (hc.grid_doubling) {
        const Grid1D fine(cfg.half_width, 2 * cfg.nodes - 1);
        const auto fps = assemble_poincare(flux, returnmap_options(cfg, fine));
        const auto fo = find_periodic_orbit(fps, hc.orbit_a, oo);
        grid_change = std::abs(fo.eps - main.eps) / std::abs(main.eps);
        ctx.constant("epsilon_fine_grid", fo.eps);
        ctx.constant("grid_doubling_change", grid_change);
    }
    const double secs = seconds_since(t0);
    const bool ok = worst_resid <= 1e-6 && intercept_err <= 1e-3 && doublings > 0 && drift <= 0.25 && inactive &&
                    hc.grid_doubling && grid_change < 0.05 && std::isfinite(spread);
    ctx.criterion(7, "end-to-end 1-D orbit", ok,
                  fmt::format("residual {:.3g}, intercept {:.3g} rel, drift {:.3g} over {} doublings, truncation {}, "
                              "grid doubling {:.3g}",
                              worst_resid, intercept_err, drift, doublings, inactive ? "inactive" : "ACTIVE",
                              grid_change),
                  "residual <= 1e-6, intercept <= 1e-3 rel, drift <= 25%, truncation inactive, grid change < 5%, "
                  "runtime < 10 min",
                  secs, 600.0);
}

void stage_hopf(StageContext& ctx) {
    hopf_normal_form(ctx);
    hopf_orbits(ctx);
}

FluxFamily scaled_flux(const FluxFamily& f, double s) {
    FluxFamily out = f;
    out.name = f.name + "_transverse";
    out.flux = [f, s](double eps, const Vec& u) { return Vec(s * f.flux(eps, u)); };
    out.jacobian = [f, s](double eps, const Vec& u) { return Mat(s * f.jacobian(eps, u)); };
    return out;
}

void stage_cylinder(StageContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& cc = cfg.cylinder;
    const auto flux = flux_by_name(cfg.exemplar);
    const auto t0 = std::chrono::steady_clock::now();
    const Grid1D grid = main_grid(cfg);

    // transverse gap on the galloping family
    const auto p = solve_profile(flux, 0.0, grid);
    const auto fam = assemble_mode_family(p, flux, {scaled_flux(flux, cc.transverse_scale)}, linop_options(cfg),
                                          cc.xi_max);
    CVec f(static_cast<Eigen::Index>(p.dim * grid.size()));
    f.setZero();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.x(i);
        f[static_cast<Eigen::Index>(p.dim * i)] = std::exp(-x * x);
        if (p.dim > 1) f[static_cast<Eigen::Index>(p.dim * i + 1)] = x * std::exp(-x * x);
    }
    std::string gap = "xi,rate,predicted\n";
    std::vector<svg::Series> curves;
    std::vector<GapFit> fits;
    for (int k : cc.gap_modes) fits.push_back(gap_decay(fam, {k, 0}, f, cc.gap_t0, cc.gap_t1, cc.gap_steps));
    const auto g0 = gap_decay(fam, {0, 0}, f, cc.gap_t0, cc.gap_t1, cc.gap_steps);
    bool gap_ok = true;
    double rate1 = 0.0;
    for (const auto& g : fits) {
        gap_ok = gap_ok && g.rate >= 0.5 * g.predicted && g.rate <= 2.0 * g.predicted;
        if (g.xi[0] == 1) rate1 = g.rate;
    }
    for (const auto* g : {&g0}) fits.insert(fits.begin(), *g);
    for (const auto& g : fits) {
        gap += fmt::format("{},{},{}\n", g.xi[0], num(g.rate), num(g.predicted));
        ctx.constant(fmt::format("gap_rate_xi{}", g.xi[0]), g.rate);
        curves.push_back({fmt::format("xi={}", g.xi[0]), g.t, g.norm, false});
    }
    const bool contrast = rate1 > 0.0 && std::abs(g0.rate) <= 0.1 * rate1;
    ctx.artifact("gap", "csv", gap);
    ctx.artifact("gap", "svg", svg::line_plot({"transverse mode decay", "t", "weighted sup norm", false, true}, curves));

    // cellular orbit in mode k*
    CylinderOptions co;
    co.grid = grid;
    co.xi_max = cc.xi_max;
    co.crossing_mode = cc.crossing_mode;
    co.order = cfg.operator_order;
    co.planted = cfg.planted;
    co.flow = flow_options(cfg);
    co.series = series_options(cfg);
    const auto ps = assemble_cylinder_poincare(flux, co);
    const auto orb = multid_orbit(ps, cc.a, orbit_options(cfg));
    auto j = json::parse(orb.to_json());
    j.erase("snapshots");
    ctx.artifact("cylinder", "json", j.dump());
    ctx.artifact("cylinder", "csv", orb.mode_energy_csv());
    const std::size_t frames = std::min(cc.frames, orb.orbit.snapshots.size());
    for (std::size_t k = 0; k < frames; ++k)
        ctx.artifact(fmt::format("cylinder_frame{}", k), "svg",
                     orb.frame_svg(k * orb.orbit.snapshots.size() / frames));
    const double secs = seconds_since(t0);
    ctx.constant("cylinder_epsilon", orb.orbit.eps);
    ctx.constant("cylinder_period", orb.orbit.period);
    ctx.constant("cylinder_periodicity_residual", orb.orbit.periodicity_residual);
    ctx.constant("cylinder_cosine_fit", orb.cosine_fit_residual);
    ctx.constant("cylinder_tail_max", orb.tail_max);

    std::string rates;
    for (const auto& g : fits) rates += fmt::format("{}xi={} {:.4f}/{:.4f}", rates.empty() ? "" : ", ", g.xi[0], g.rate, g.predicted);
    const bool ok = gap_ok && contrast && orb.orbit.periodicity_residual <= 1e-6 && orb.cosine_fit_residual <= 0.05;
    ctx.criterion(10, "multi-d gap and cylinder orbit", ok,
                  fmt::format("rates (fit/predicted) {}; orbit residual {:.3g}, cosine fit {:.3g}", rates,
                              orb.orbit.periodicity_residual, orb.cosine_fit_residual),
                  "rates within factor 2 of eta|xi|^2 for |xi| = 1, 2, |xi = 0 rate| <= 10% of |xi| = 1 rate, "
                  "residual <= 1e-6, cosine fit <= 5%, runtime < 20 min",
                  secs, 1200.0);
}

using StageFn = void (*)(StageContext&);

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
    static const std::vector<std::pair<std::string, StageFn>> t{
        {"profile", stage_profile}, {"spectrum", stage_spectrum}, {"kernels", stage_kernels},
        {"resum", stage_resum},     {"hopf", stage_hopf},         {"cylinder", stage_cylinder}};
    return t;
}

const std::vector<std::pair<int, std::pair<std::string, std::string>>>& criterion_table() {
    static const std::vector<std::pair<int, std::pair<std::string, std::string>>> t{
        {1, {"kernel decay laws", "kernels"}},
        {2, {"conditional vs absolute convergence", "resum"}},
        {3, {"cancellation identity", "resum"}},
        {4, {"Simpson continuization", "resum"}},
        {5, {"mass escape", "resum"}},
        {6, {"Hopf normal-form oracle", "hopf"}},
        {7, {"end-to-end 1-D orbit", "hopf"}},
        {8, {"zero eigenstructure", "spectrum"}},
        {9, {"Burgers profile", "profile"}},
        {10, {"multi-d gap and cylinder orbit", "cylinder"}},
        {11, {"determinism", "report"}},
    };
    return t;
}

// ------------------------------------------------------------------ json io

json criterion_json(const CriterionResult& c) {
    return {{"id", c.id},           {"name", c.name},         {"stage", c.stage},
            {"status", to_string(c.status)}, {"numeric_pass", c.numeric_pass}, {"runtime_pass", c.runtime_pass},
            {"measured", c.measured}, {"tolerance", c.tolerance}, {"seconds", c.seconds}};
}

CriterionResult criterion_from_json(const json& j) {
    CriterionResult c;
    c.id = j.at("id").get<int>();
    c.name = j.at("name").get<std::string>();
    c.stage = j.at("stage").get<std::string>();
    c.numeric_pass = j.at("numeric_pass").get<bool>();
    c.runtime_pass = j.at("runtime_pass").get<bool>();
    c.status = c.numeric_pass && c.runtime_pass ? CriterionStatus::Pass : CriterionStatus::Fail;
    c.measured = j.at("measured").get<std::string>();
    c.tolerance = j.at("tolerance").get<std::string>();
    c.seconds = j.at("seconds").get<double>();
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
    out << content;
    if (!out) fail(ErrorKind::Io, "write failed for " + p.string());
}

fs::path cache_dir(const RunConfig& c) {
    return c.cache_dir.empty() ? fs::path(c.output_dir) / ".cache" : fs::path(c.cache_dir);
}

std::string stage_key(const RunConfig& c, const std::string& stage) {
    return fnv1a(fmt::format("{}|{}|{}", kCacheSchema, stage, c.canonical_json()));
}

bool load_cached(const RunConfig& c, const std::string& stage, StageOutput& out) {
    const fs::path p = cache_dir(c) / (stage + "-" + stage_key(c, stage) + ".json");
    std::error_code ec;
    if (!fs::exists(p, ec)) return false;
    try {
        const auto j = json::parse(read_file(p));
        if (j.value("schema", -1) != kCacheSchema || j.value("stage", "") != stage ||
            j.value("config", "") != c.canonical_json())
            return false;
        StageOutput o;
        for (const auto& a : j.at("artifacts")) o.artifacts.push_back({a.at("name"), a.at("content")});
        for (const auto& cr : j.at("criteria")) o.criteria.push_back(criterion_from_json(cr));
        for (const auto& k : j.at("constants")) o.constants.push_back({stage, k.at("name"), k.at("value").get<double>()});
        out = std::move(o);
        return true;
    } catch (const json::exception&) {
        return false;  // unreadable entries are recomputed
    }
}

void store_cached(const RunConfig& c, const std::string& stage, const StageOutput& out) {
    json j;
    j["schema"] = kCacheSchema;
    j["stage"] = stage;
    j["config"] = c.canonical_json();
    j["artifacts"] = json::array();
    for (const auto& a : out.artifacts) j["artifacts"].push_back({{"name", a.name}, {"content", a.content}});
    j["criteria"] = json::array();
    for (const auto& cr : out.criteria) j["criteria"].push_back(criterion_json(cr));
    j["constants"] = json::array();
    for (const auto& k : out.constants) j["constants"].push_back({{"name", k.name}, {"value", k.value}});
    const fs::path dir = cache_dir(c);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create cache directory " + dir.string());
    // write then rename so a reader never sees half an entry
    const fs::path tmp = dir / (stage + "-" + stage_key(c, stage) + ".tmp");
    write_file(tmp, j.dump());
    fs::rename(tmp, dir / (stage + "-" + stage_key(c, stage) + ".json"));
}

}  // namespace

// ------------------------------------------------------------------- config

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Configuration, std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    {
        Reader r(j, "config");
        r.get("exemplar", c.exemplar);
        {
            auto g = r.child("grid");
            g.get("half_width", c.half_width);
            g.get("nodes", c.nodes);
        }
        r.get("operator_order", c.operator_order);
        {
            auto p = r.child("planted");
            p.get("tau0", c.planted.tau0);
            p.get("gamma_slope", c.planted.gamma_slope);
            p.get("width", c.planted.width);
            p.get("center", c.planted.center);
        }
        {
            auto t = r.child("tolerances");
            t.get("series", c.tol.series);
            t.get("series_verify", c.tol.series_verify);
            t.get("orbit", c.tol.orbit);
            t.get("reduction", c.tol.reduction);
            t.get("eigen", c.tol.eigen);
        }
        {
            auto t = r.child("truncation");
            std::string order = truncation_name(c.truncation.order);
            t.get("order", order);
            if (order == "linear") c.truncation.order = TruncationOrder::Linear;
            else if (order == "quadratic") c.truncation.order = TruncationOrder::Quadratic;
            else fail(ErrorKind::Configuration, "truncation.order must be linear or quadratic");
            t.get("C0", c.truncation.C0);
            t.get("steps_per_period", c.truncation.steps_per_period);
        }
        {
            auto s = r.child("spectrum");
            std::array<double, 2> range{c.spectrum.eps_min, c.spectrum.eps_max};
            s.get("eps_range", range);
            c.spectrum.eps_min = range[0];
            c.spectrum.eps_max = range[1];
            s.get("eps_samples", c.spectrum.eps_samples);
            s.get("projection_seed", c.spectrum.projection_seed);
        }
        {
            auto k = r.child("kernels");
            k.get("speed", c.kernels.speed);
            k.get("pairs", c.kernels.pairs);
            std::array<double, 2> range{c.kernels.t_min, c.kernels.t_max};
            k.get("t_range", range);
            c.kernels.t_min = range[0];
            c.kernels.t_max = range[1];
            k.get("t_samples", c.kernels.t_samples);
            k.get("half_width", c.kernels.half_width);
            k.get("nodes", c.kernels.nodes);
        }
        {
            auto s = r.child("resum");
            auto& rc = c.resum;
            s.get("speed", rc.speed);
            s.get("period", rc.period);
            s.get("naive_terms", rc.naive_terms);
            s.get("mass_half_width", rc.mass_half_width);
            s.get("spacing", rc.spacing);
            s.get("envelope_speed", rc.envelope_speed);
            s.get("envelope_half_width", rc.envelope_half_width);
            s.get("continuization_speed", rc.continuization_speed);
            s.get("continuization_half_width", rc.continuization_half_width);
            s.get("continuization_spacing", rc.continuization_spacing);
            s.get("continuization_n", rc.continuization_n);
            s.get("identity_samples", rc.identity_samples);
            s.get("identity_seed", rc.identity_seed);
        }
        {
            auto h = r.child("hopf");
            h.get("normal_form_a", c.hopf.normal_form_a);
            h.get("a_samples", c.hopf.a_samples);
            h.get("orbit_a", c.hopf.orbit_a);
            h.get("grid_doubling", c.hopf.grid_doubling);
            h.get("snapshots", c.hopf.snapshots);
        }
        {
            auto y = r.child("cylinder");
            auto& cc = c.cylinder;
            y.get("xi_max", cc.xi_max);
            y.get("crossing_mode", cc.crossing_mode);
            y.get("a", cc.a);
            y.get("transverse_scale", cc.transverse_scale);
            y.get("gap_modes", cc.gap_modes);
            std::array<double, 2> w{cc.gap_t0, cc.gap_t1};
            y.get("gap_window", w);
            cc.gap_t0 = w[0];
            cc.gap_t1 = w[1];
            y.get("gap_steps", cc.gap_steps);
            y.get("frames", cc.frames);
        }
        {
            auto o = r.child("output");
            o.get("dir", c.output_dir);
            o.get("cache", c.use_cache);
            o.get("cache_dir", c.cache_dir);
        }
        r.get("stages", c.stages);
        r.get("threads", c.threads);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Configuration, "cannot read config " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return from_json(s.str());
}

void RunConfig::validate() const {
    auto need = [](bool ok, const std::string& what) { require(ok, ErrorKind::Configuration, what); };
    try {
        flux_by_name(exemplar);
    } catch (const Error&) {
        fail(ErrorKind::Configuration, "unknown exemplar '" + exemplar + "'");
    }
    need(nodes >= 3 && nodes % 2 == 1, "grid.nodes must be odd and at least 3");
    need(half_width > 0, "grid.half_width must be positive");
    need(operator_order == 2 || operator_order == 6, "operator_order must be 2 or 6");
    need(planted.tau0 > 0 && planted.width > 0, "planted.tau0 and planted.width must be positive");
    for (double t : {tol.series, tol.series_verify, tol.orbit, tol.reduction, tol.eigen})
        need(t > 0, "all tolerances must be positive");
    need(truncation.C0 > 0 && truncation.steps_per_period >= 16, "truncation.C0 > 0 and steps_per_period >= 16");
    need(spectrum.eps_min <= spectrum.eps_max && spectrum.eps_samples >= 1, "spectrum.eps_range must be ordered");
    need(kernels.speed != 0.0, "kernels.speed must be nonzero");
    need(kernels.t_min > 0 && kernels.t_max > kernels.t_min && kernels.t_samples >= 2, "kernels.t_range invalid");
    need(kernels.nodes >= 3 && kernels.nodes % 2 == 1, "kernels.nodes must be odd");
    for (const auto& p : kernels.pairs)
        need(p[0] >= 0 && p[1] >= 0 && p[0] <= kMaxAlpha && p[1] <= kMaxBeta, "kernels.pairs out of range");
    need(resum.speed != 0.0 && resum.envelope_speed != 0.0 && resum.continuization_speed != 0.0,
         "resum speeds must be nonzero");
    need(resum.period > 0 && resum.spacing > 0 && resum.continuization_spacing > 0, "resum steps must be positive");
    need(resum.naive_terms >= 4 && resum.continuization_n.size() >= 2, "resum sample counts too small");
    need(!hopf.a_samples.empty(), "hopf.a_samples must not be empty");
    for (double a : hopf.a_samples) need(a > 0, "hopf.a_samples must be positive");
    need(std::find(hopf.a_samples.begin(), hopf.a_samples.end(), hopf.orbit_a) != hopf.a_samples.end(),
         "hopf.orbit_a must be one of hopf.a_samples");
    need(!hopf.normal_form_a.empty(), "hopf.normal_form_a must not be empty");
    need(cylinder.xi_max >= 1 && cylinder.crossing_mode >= 0 && cylinder.crossing_mode <= cylinder.xi_max / 2,
         "cylinder.crossing_mode must lie in [0, xi_max/2]");
    need(cylinder.a > 0 && cylinder.gap_t1 > cylinder.gap_t0 && cylinder.gap_t0 > 0, "cylinder settings invalid");
    for (int k : cylinder.gap_modes) need(k >= 1 && k <= cylinder.xi_max, "cylinder.gap_modes out of range");
    need(threads >= 1, "threads must be at least 1");
    need(!output_dir.empty(), "output.dir must not be empty");
    for (const auto& s : stages) {
        const auto& t = pipeline_stages();
        need(std::find(t.begin(), t.end(), s) != t.end(), "unknown stage '" + s + "'");
    }
}

std::string RunConfig::canonical_json() const {
    json j;
    j["exemplar"] = exemplar;
    j["grid"] = {{"half_width", half_width}, {"nodes", nodes}};
    j["operator_order"] = operator_order;
    j["planted"] = {{"tau0", planted.tau0}, {"gamma_slope", planted.gamma_slope}, {"width", planted.width},
                    {"center", planted.center}};
    j["tolerances"] = {{"series", tol.series}, {"series_verify", tol.series_verify}, {"orbit", tol.orbit},
                       {"reduction", tol.reduction}, {"eigen", tol.eigen}};
    j["truncation"] = {{"order", truncation_name(truncation.order)}, {"C0", truncation.C0},
                       {"steps_per_period", truncation.steps_per_period}};
    j["spectrum"] = {{"eps_range", {spectrum.eps_min, spectrum.eps_max}}, {"eps_samples", spectrum.eps_samples},
                     {"projection_seed", spectrum.projection_seed}};
    j["kernels"] = {{"speed", kernels.speed}, {"pairs", kernels.pairs}, {"t_range", {kernels.t_min, kernels.t_max}},
                    {"t_samples", kernels.t_samples}, {"half_width", kernels.half_width}, {"nodes", kernels.nodes}};
    j["resum"] = {{"speed", resum.speed},
                  {"period", resum.period},
                  {"naive_terms", resum.naive_terms},
                  {"mass_half_width", resum.mass_half_width},
                  {"spacing", resum.spacing},
                  {"envelope_speed", resum.envelope_speed},
                  {"envelope_half_width", resum.envelope_half_width},
                  {"continuization_speed", resum.continuization_speed},
                  {"continuization_half_width", resum.continuization_half_width},
                  {"continuization_spacing", resum.continuization_spacing},
                  {"continuization_n", resum.continuization_n},
                  {"identity_samples", resum.identity_samples},
                  {"identity_seed", resum.identity_seed}};
    j["hopf"] = {{"normal_form_a", hopf.normal_form_a}, {"a_samples", hopf.a_samples}, {"orbit_a", hopf.orbit_a},
                 {"grid_doubling", hopf.grid_doubling}, {"snapshots", hopf.snapshots}};
    j["cylinder"] = {{"xi_max", cylinder.xi_max},
                     {"crossing_mode", cylinder.crossing_mode},
                     {"a", cylinder.a},
                     {"transverse_scale", cylinder.transverse_scale},
                     {"gap_modes", cylinder.gap_modes},
                     {"gap_window", {cylinder.gap_t0, cylinder.gap_t1}},
                     {"gap_steps", cylinder.gap_steps},
                     {"frames", cylinder.frames}};
    return j.dump();
}

std::string RunConfig::hash() const { return fnv1a(canonical_json()); }

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [n, f] : stage_table()) v.push_back(n);
        return v;
    }();
    return names;
}

const char* to_string(CriterionStatus s) {
    switch (s) {
        case CriterionStatus::Pass: return "pass";
        case CriterionStatus::Fail: return "fail";
        case CriterionStatus::NotRun: return "not-run";
    }
    return "not-run";
}

// ------------------------------------------------------------------- report

bool RunReport::ok() const { return failed_stage() == nullptr; }

const StageReport* RunReport::failed_stage() const {
    for (const auto& s : stages)
        if (s.status == "failed") return &s;
    return nullptr;
}

const CriterionResult& RunReport::criterion(int id) const {
    for (const auto& c : criteria)
        if (c.id == id) return c;
    fail(ErrorKind::Argument, fmt::format("criterion {} not in report", id));
}

std::string RunReport::criteria_csv() const {
    // wall-clock dependent fields and the run-to-run comparison stay in the JSON
    std::string s = "id,name,stage,numeric_pass,measured,tolerance\n";
    auto quote = [](const std::string& v) {
        std::string q = "\"";
        for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    };
    for (const auto& c : criteria) {
        if (c.id == 11) continue;
        s += fmt::format("{},{},{},{},{},{}\n", c.id, quote(c.name), c.stage,
                         c.status == CriterionStatus::NotRun ? "" : (c.numeric_pass ? "true" : "false"), quote(c.measured),
                         quote(c.tolerance));
    }
    return s;
}

std::string RunReport::constants_csv() const {
    std::string s = "stage,name,value\n";
    for (const auto& c : constants) s += fmt::format("{},{},{}\n", c.stage, c.name, num(c.value));
    return s;
}

std::string RunReport::to_json() const {
    json j;
    j["schema"] = kCacheSchema;
    j["config_hash"] = config_hash;
    j["config"] = json::parse(config_json);
    j["stages"] = json::array();
    for (const auto& s : stages) {
        json e{{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}};
        if (!s.error.empty()) {
            e["error"] = s.error;
            e["exit_code"] = exit_code_for(s.error_kind);
        }
        j["stages"].push_back(e);
    }
    j["criteria"] = json::array();
    for (const auto& c : criteria) j["criteria"].push_back(criterion_json(c));
    j["constants"] = json::array();
    for (const auto& c : constants) j["constants"].push_back({{"stage", c.stage}, {"name", c.name}, {"value", c.value}});
    j["artifacts"] = json::array();
    for (const auto& a : artifacts) j["artifacts"].push_back(a.name);
    j["files"] = files;
    return j.dump(2);
}

int exit_code_for(int error_kind) {
    if (error_kind < 0) return 1;
    switch (static_cast<ErrorKind>(error_kind)) {
        case ErrorKind::Configuration:
        case ErrorKind::Argument: return 2;
        case ErrorKind::SpectralAssumption:
        case ErrorKind::ConditionDViolated:
        case ErrorKind::NoConnection:
        case ErrorKind::DomainTooSmall:
        case ErrorKind::Domain:
        case ErrorKind::SmallnessBox:
        case ErrorKind::TruncationConstant:
        case ErrorKind::Inconsistency:
        case ErrorKind::Conditioning: return 3;
        case ErrorKind::Nonconvergence:
        case ErrorKind::RootNotFound:
        case ErrorKind::Numerical: return 4;
        default: return 1;
    }
}

RunReport run_pipeline(const RunConfig& config) {
    config.validate();
    RunReport rep;
    rep.config_hash = config.hash();
    rep.config_json = config.canonical_json();

    bool stopped = false;
    std::string stop_reason;
    for (const auto& [name, fn] : stage_table()) {
        StageReport sr;
        sr.name = name;
        const bool selected = std::find(config.stages.begin(), config.stages.end(), name) != config.stages.end();
        if (!selected || stopped) {
            sr.status = "skipped";
            if (selected) sr.error = "skipped after " + stop_reason;
            rep.stages.push_back(sr);
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        StageContext ctx{config, rep.config_hash, {}, name};
        try {
            if (config.use_cache && load_cached(config, name, ctx.out)) {
                sr.status = "cached";
            } else {
                fn(ctx);
                sr.status = "ok";
                if (config.use_cache) store_cached(config, name, ctx.out);
            }
        } catch (const Error& e) {
            sr.status = "failed";
            sr.error = e.what();
            sr.error_kind = static_cast<int>(e.kind());
        } catch (const std::exception& e) {
            sr.status = "failed";
            sr.error = e.what();
        }
        sr.seconds = seconds_since(t0);
        if (sr.status == "failed") {
            stopped = true;
            stop_reason = "failure of stage " + name;
        } else {
            for (auto& a : ctx.out.artifacts) rep.artifacts.push_back(std::move(a));
            for (auto& c : ctx.out.criteria) rep.criteria.push_back(std::move(c));
            for (auto& c : ctx.out.constants) rep.constants.push_back(std::move(c));
        }
        rep.stages.push_back(sr);
    }

    // determinism: CSVs against an earlier run of the same config in the output directory
    std::size_t compared = 0, differ = 0;
    for (const auto& a : rep.artifacts) {
        if (a.name.size() < 4 || a.name.compare(a.name.size() - 4, 4, ".csv") != 0) continue;
        const fs::path p = fs::path(config.output_dir) / a.name;
        std::error_code ec;
        if (!fs::exists(p, ec)) continue;
        ++compared;
        if (read_file(p) != a.content) ++differ;
    }
    for (const auto& [id, info] : criterion_table()) {
        if (std::any_of(rep.criteria.begin(), rep.criteria.end(), [&](const auto& c) { return c.id == id; })) continue;
        CriterionResult c;
        c.id = id;
        c.name = info.first;
        c.stage = info.second;
        if (id == 11 && compared > 0) {
            c.numeric_pass = differ == 0;
            c.status = differ == 0 ? CriterionStatus::Pass : CriterionStatus::Fail;
            c.measured = fmt::format("{} of {} CSV files identical to the previous run", compared - differ, compared);
        } else if (id == 11) {
            c.measured = "no previous run of this config in the output directory";
        } else {
            const auto st = std::find_if(rep.stages.begin(), rep.stages.end(), [&](const auto& s) { return s.name == c.stage; });
            c.measured = st == rep.stages.end() ? "stage not run" : "stage " + st->status;
        }
        c.tolerance = id == 11 ? "bit-identical CSV outputs" : "";
        rep.criteria.push_back(std::move(c));
    }
    std::sort(rep.criteria.begin(), rep.criteria.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return rep;
}

std::vector<std::string> emit_report(RunReport& report, const std::string& dir, const std::vector<std::string>& formats) {
    require(!report.stages.empty() && !report.criteria.empty(), ErrorKind::Argument, "empty report");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir, ec)) fail(ErrorKind::Io, "cannot create output directory " + dir);
    auto wanted = [&](const std::string& name) {
        const auto dot = name.rfind('.');
        const std::string ext = dot == std::string::npos ? "" : name.substr(dot + 1);
        return std::find(formats.begin(), formats.end(), ext) != formats.end();
    };
    std::vector<std::string> files;
    auto put = [&](const std::string& name, const std::string& content) {
        if (!wanted(name)) return;
        const fs::path p = fs::path(dir) / name;
        write_file(p, content);
        files.push_back(p.string());
    };
    for (const auto& a : report.artifacts) put(a.name, a.content);
    put("report-" + report.config_hash + ".csv", report.criteria_csv());
    put("constants-" + report.config_hash + ".csv", report.constants_csv());
    const std::string json_name = "report-" + report.config_hash + ".json";
    if (wanted(json_name)) {
        const fs::path p = fs::path(dir) / json_name;
        files.push_back(p.string());
        report.files = files;
        write_file(p, report.to_json());
    }
    report.files = files;
    return files;
}

}  // namespace hopfshock
