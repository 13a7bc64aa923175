#include "hopfshock/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <fmt/format.h>

#include "hopfshock/error.hpp"
#include "hopfshock/svg.hpp"

namespace hopfshock {

ReductionResult reduce_B(const DiscreteSystem& sys, double eps, double a, const Vec& omega,
                         const ReductionOptions& opt) {
    require(omega.size() == static_cast<Eigen::Index>(sys.dim_b), ErrorKind::Dimension, "ω has the wrong size");
    require(opt.tol > 0, ErrorKind::Argument, "reduction tolerance must be positive");
    if (std::abs(eps) > opt.box.eps || std::abs(a) > opt.box.a)
        fail(ErrorKind::SmallnessBox, fmt::format("(ε,a) = ({}, {}) outside the smallness box", eps, a));

    ReductionResult res;
    Vec b = opt.initial.size() == omega.size() ? opt.initial : omega;
    for (std::size_t k = 0; k < opt.max_iter; ++k) {
        if (sys.strong_norm(b) > opt.box.b_strong)
            fail(ErrorKind::SmallnessBox,
                 fmt::format("reduction iterate {} left the X1 ball ({} > {})", k, sys.strong_norm(b), opt.box.b_strong));
        res.eval = sys.evaluate(eps, a, b);
        Vec next = omega + sys.right_inverse(eps, res.eval.N2);
        res.increment = sys.weak_norm(Vec(next - b));
        res.iterations = k + 1;
        const bool done = res.increment < opt.tol;
        if (!done) b = std::move(next);
        if (done) break;
    }
    if (!(res.increment < opt.tol))
        fail(ErrorKind::Nonconvergence, fmt::format("reduction did not contract: increment {} after {} iterations",
                                                    res.increment, res.iterations));
    if (sys.strong_norm(b) > opt.box.b_strong) fail(ErrorKind::SmallnessBox, "fixed point outside the X1 ball");
    res.b = b;
    const double scale = sys.weak_norm(omega) + a * a;
    res.bound_constant = scale > 0 ? sys.weak_norm(b) / scale : 0.0;
    return res;
}

IftResult brouwer_ift(const std::function<double(double, double)>& F, std::optional<double> dF0, double a,
                      const IftOptions& opt) {
    require(opt.tol > 0 && opt.radius > 0 && opt.damping > 0, ErrorKind::Argument, "bad implicit-function options");
    IftResult res;
    auto eval = [&](double d) {
        ++res.evaluations;
        return F(d, a);
    };
    const double f00 = F(0.0, 0.0);
    require(std::abs(f00) <= std::max(opt.tol, 1e-10), ErrorKind::Argument,
            fmt::format("F(0,0) = {} is not zero", f00));
    double slope = 0.0;
    if (dF0) {
        slope = *dF0;
    } else {
        const double s = 1e-4 * opt.radius;
        slope = (F(s, 0.0) - F(-s, 0.0)) / (2 * s);
    }
    require(std::isfinite(slope) && std::abs(slope) > 1e-14, ErrorKind::Conditioning, "∂_δF(0,0) vanishes");

    double d = 0.0;
    try {
        for (std::size_t k = 0; k < opt.max_iter; ++k) {
            const double f = eval(d);
            if (std::abs(f) <= opt.tol) {
                res.delta = d;
                res.residual = std::abs(f);
                return res;
            }
            d -= opt.damping * f / slope;
            if (!std::isfinite(d) || std::abs(d) > opt.radius) break;
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SmallnessBox) throw;
    }

    // bracketing fallback: the sign change nearest to δ = 0
    res.bracketed = true;
    const std::size_t m = std::max<std::size_t>(opt.bracket_samples, 2);
    std::vector<double> xs, fs;
    for (std::size_t i = 0; i <= m; ++i) {
        const double x = -opt.radius + 2 * opt.radius * static_cast<double>(i) / static_cast<double>(m);
        double f = NAN;
        try {
            f = eval(x);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SmallnessBox) throw;
        }
        xs.push_back(x);
        fs.push_back(f);
    }
    int best = -1;
    for (std::size_t i = 0; i < m; ++i) {
        if (!std::isfinite(fs[i]) || !std::isfinite(fs[i + 1])) continue;
        if (fs[i] == 0.0 || fs[i] * fs[i + 1] < 0) {
            if (best < 0 || std::abs(xs[i] + xs[i + 1]) < std::abs(xs[best] + xs[best + 1])) best = static_cast<int>(i);
        }
    }
    if (best < 0)
        fail(ErrorKind::RootNotFound, fmt::format("no root of F(·, {}) in |δ| ≤ {}", a, opt.radius));
    const auto bi = static_cast<std::size_t>(best);
    if (fs[bi] == 0.0) {
        res.delta = xs[bi];
        res.residual = 0.0;
        return res;
    }
    boost::uintmax_t iters = 200;
    const auto tol = boost::math::tools::eps_tolerance<double>(52);
    const auto r = boost::math::tools::toms748_solve([&](double x) { return eval(x); }, xs[bi], xs[bi + 1], fs[bi],
                                                     fs[bi + 1], tol, iters);
    const double dl = r.first, dr = r.second;
    const double fl = eval(dl), fr = eval(dr);
    res.delta = std::abs(fl) <= std::abs(fr) ? dl : dr;
    res.residual = std::min(std::abs(fl), std::abs(fr));
    if (!(res.residual <= opt.tol))
        fail(ErrorKind::RootNotFound, fmt::format("bracketed root of F(·, {}) has residual {}", a, res.residual));
    return res;
}

namespace {

BranchPoint solve_point(const DiscreteSystem& sys, double a, const OmegaRule& omega, const BranchOptions& opt,
                        double gamma) {
    BranchPoint pt;
    pt.a = a;
    const Vec zero = Vec::Zero(static_cast<Eigen::Index>(sys.dim_b));
    if (a == 0.0) {
        const auto ev = sys.evaluate(0.0, 0.0, zero);
        pt.period = ev.period;
        pt.b = zero;
        return pt;
    }
    if (std::abs(a) > opt.reduction.box.a)
        fail(ErrorKind::SmallnessBox, fmt::format("|a| = {} exceeds the smallness box", std::abs(a)));

    ReductionResult last;
    double last_eps = NAN;
    Vec warm;
    auto F = [&](double d, double aa) -> double {
        if (aa == 0.0) return (sys.R(d) - 1.0) / gamma;
        ReductionOptions ro = opt.reduction;
        if (warm.size() > 0) ro.initial = warm;
        const Vec w = omega ? omega(d, aa) : zero;
        last = reduce_B(sys, d, aa, w, ro);
        last_eps = d;
        warm = last.b;
        return (last.eval.R - 1.0 + last.eval.N1 / aa) / gamma;
    };
    IftOptions io = opt.ift;
    io.radius = std::min(io.radius, opt.reduction.box.eps);
    const auto r = brouwer_ift(F, 1.0, a, io);
    if (!(last_eps == r.delta)) F(r.delta, a);
    pt.eps = r.delta;
    pt.period = last.eval.period;
    pt.f_resid = std::abs((last.eval.R - 1.0) * a + last.eval.N1);
    pt.g_resid = last.increment;
    pt.b = last.b;
    pt.evaluations = r.evaluations;
    return pt;
}

}  // namespace

BifurcationCurve solve_branch(const DiscreteSystem& sys, const std::vector<double>& a_samples, const OmegaRule& omega,
                              const BranchOptions& opt) {
    double gamma = 0.0;
    if (sys.dR0) {
        gamma = *sys.dR0;
    } else {
        const double s = 1e-5;
        gamma = (sys.R(s) - sys.R(-s)) / (2 * s);
    }
    require(std::abs(sys.R(0.0) - 1.0) <= 1e-10, ErrorKind::SpectralAssumption, "R(0,0,0) must equal 1");
    require(std::isfinite(gamma) && std::abs(gamma) > 1e-12, ErrorKind::SpectralAssumption,
            "∂_ε R(0,0,0) vanishes: no transversal crossing");

    const std::size_t n = a_samples.size();
    std::vector<BranchPoint> pts(n);
    std::vector<std::exception_ptr> errs(n);
    auto work = [&](std::size_t t, std::size_t stride) {
        for (std::size_t i = t; i < n; i += stride) {
            try {
                pts[i] = solve_point(sys, a_samples[i], omega, opt, gamma);
            } catch (const Error& e) {
                errs[i] = std::make_exception_ptr(
                    Error(e.kind(), fmt::format("branch point a = {}: {}", a_samples[i], e.what())));
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(opt.threads, n));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);

    BifurcationCurve curve;
    curve.points = std::move(pts);
    std::vector<const BranchPoint*> nz;
    for (const auto& p : curve.points)
        if (p.a != 0.0) nz.push_back(&p);
    if (nz.size() >= 2) {
        Mat A(static_cast<Eigen::Index>(nz.size()), 2);
        Vec y(static_cast<Eigen::Index>(nz.size()));
        for (std::size_t i = 0; i < nz.size(); ++i) {
            const double a2 = nz[i]->a * nz[i]->a;
            A(static_cast<Eigen::Index>(i), 0) = a2;
            A(static_cast<Eigen::Index>(i), 1) = a2 * a2;
            y[static_cast<Eigen::Index>(i)] = nz[i]->eps;
        }
        const Vec c = A.colPivHouseholderQr().solve(y);
        curve.even_fit = {c[0], c[1]};
    } else if (nz.size() == 1) {
        curve.even_fit = {nz[0]->eps / (nz[0]->a * nz[0]->a), 0.0};
    }
    if (!nz.empty()) {
        const auto* small = *std::min_element(nz.begin(), nz.end(), [](auto* l, auto* r) {
            return std::abs(l->a) < std::abs(r->a);
        });
        curve.continuity_ratio = std::abs(small->eps) / std::abs(small->a);
    }
    return curve;
}

std::string BifurcationCurve::to_csv() const {
    std::string s = "a,epsilon,period,f_resid,g_resid\n";
    for (const auto& p : points)
        s += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", p.a, p.eps, p.period, p.f_resid, p.g_resid);
    return s;
}

std::string BifurcationCurve::to_svg() const {
    svg::Series s{"ε(a)", {}, {}, true};
    for (const auto& p : points) {
        s.x.push_back(p.a);
        s.y.push_back(p.eps);
    }
    std::vector<svg::Series> all{s};
    if (even_fit.size() == 2 && !points.empty()) {
        svg::Series fit{"even fit", {}, {}, false};
        double lo = points.front().a, hi = points.front().a;
        for (const auto& p : points) lo = std::min(lo, p.a), hi = std::max(hi, p.a);
        for (int k = 0; k <= 50; ++k) {
            const double a = lo + (hi - lo) * k / 50.0;
            fit.x.push_back(a);
            fit.y.push_back(even_fit[0] * a * a + even_fit[1] * a * a * a * a);
        }
        all.push_back(fit);
    }
    return svg::line_plot({"bifurcation branch", "a", "epsilon"}, all);
}

double normal_form_flow(double eps, double sigma, double a, double T) {
    // Bernoulli equation: 1/r² evolves linearly
    const double g = eps == 0.0 ? 2.0 * T : std::expm1(2.0 * eps * T) / eps;
    const double E = std::exp(2.0 * eps * T);
    const double denom = 1.0 + sigma * a * a * g;
    require(denom > 0.0, ErrorKind::Numerical, "normal-form flow blows up within one period");
    return std::copysign(std::abs(a) * std::sqrt(E / denom), a);
}

DiscreteSystem normal_form_system(const NormalFormParams& p) {
    DiscreteSystem sys;
    sys.name = p.sigma > 0 ? "normal_form_supercritical" : "normal_form_subcritical";
    sys.dim_b = p.dim_b;
    const auto m = static_cast<Eigen::Index>(p.dim_b);
    Vec s(m), c(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        s[k] = 0.2 + 0.6 * static_cast<double>(k) / static_cast<double>(std::max<Eigen::Index>(m - 1, 1));
        c[k] = 1.0 / static_cast<double>(k + 1);
    }
    const double T = p.period, sigma = p.sigma, q = p.q;
    sys.R = [T](double eps) { return std::exp(eps * T); };
    sys.dR0 = T;
    sys.evaluate = [=](double eps, double a, const Vec& b) {
        StepEval ev;
        ev.R = std::exp(eps * T);
        ev.N1 = normal_form_flow(eps, sigma, a, T) - ev.R * a;
        ev.N2 = a * a * c + q * b.cwiseProduct(b);
        ev.period = T;
        return ev;
    };
    sys.right_inverse = [s](double, const Vec& src) { return Vec(src.array() / (1.0 - s.array())); };
    sys.weak_norm = [](const Vec& v) { return v.norm(); };
    sys.strong_norm = [](const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };
    return sys;
}

GridFunction translate(const GridFunction& f, double c, const Vec* far_left, const Vec* far_right) {
    const Grid1D& g = f.grid;
    const std::size_t n = f.components;
    GridFunction out(g, n);
    for (std::size_t comp = 0; comp < n; ++comp) {
        std::vector<double> data(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) data[i] = f.at(i, comp);
        const double left = far_left ? (*far_left)[static_cast<Eigen::Index>(comp)] : 0.0;
        const double right = far_right ? (*far_right)[static_cast<Eigen::Index>(comp)] : 0.0;
        boost::math::interpolators::cardinal_cubic_b_spline<double> spline(data.begin(), data.end(), -g.half_width(),
                                                                           g.spacing(), 0.0, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = g.x(i) + c;
            double v;
            if (x < -g.half_width())
                v = left;
            else if (x > g.half_width())
                v = right;
            else
                v = spline(x);
            out.at(i, comp) = v;
        }
    }
    return out;
}

TranslateResult quotient_translate(double a, const GridFunction& b, const ShockProfile& profile, double cone_C,
                                   double bracket) {
    require(b.grid == profile.grid && b.components == profile.dim, ErrorKind::Dimension,
            "perturbation and profile live on different grids");
    require(bracket > 0 && cone_C > 0, ErrorKind::Argument, "bracket and cone constant must be positive");
    TranslateResult res{0.0, a, b, norm_x1(b), norm_x1(b), false};
    auto shifted = [&](double c) {
        GridFunction out = translate(b, c);
        const GridFunction ub = translate(profile.values, c, &profile.u_minus, &profile.u_plus);
        out.values += ub.values - profile.values.values;
        return out;
    };
    if (b.values.cwiseAbs().maxCoeff() == 0.0) {
        res.in_cone = true;
        return res;
    }
    double c = 0.0;
    bool found = false;
    for (int attempt = 0; attempt < 2 && !found; ++attempt) {
        const double br = bracket * (attempt == 0 ? 1.0 : 2.0);
        boost::uintmax_t iters = 200;
        const auto m = boost::math::tools::brent_find_minima([&](double cc) { return norm_b1(shifted(cc)); }, -br, br,
                                                             40, iters);
        c = m.first;
        found = std::abs(c) < br * (1.0 - 1e-3);
    }
    if (!found) fail(ErrorKind::Nonconvergence, "translation minimum stays on the bracket boundary");
    // prefer the identity when the objective cannot tell the difference
    if (norm_b1(shifted(0.0)) <= norm_b1(shifted(c))) c = 0.0;
    res.shift = c;
    res.b = shifted(c);
    res.norm_after = norm_x1(res.b);
    res.in_cone = res.norm_after <= cone_C * std::abs(a);
    return res;
}

}  // namespace hopfshock
