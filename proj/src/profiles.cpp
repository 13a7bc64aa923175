#include "hopfshock/profiles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "hopfshock/error.hpp"
#include "hopfshock/ode.hpp"

namespace hopfshock {

double FluxFamily::rh_residual(double eps) const {
    return (flux(eps, u_plus(eps)) - flux(eps, u_minus(eps))).norm();
}

FluxFamily burgers(double um, double up) {
    FluxFamily f;
    f.name = "burgers";
    f.dim = 1;
    f.flux = [](double, const Vec& u) { return Vec::Constant(1, 0.5 * u[0] * u[0]); };
    f.jacobian = [](double, const Vec& u) { return Mat::Constant(1, 1, u[0]); };
    f.u_minus = [um](double) { return Vec::Constant(1, um); };
    f.u_plus = [up](double) { return Vec::Constant(1, up); };
    return f;
}

FluxFamily burgers_shifted() {
    FluxFamily f;
    f.name = "burgers_shifted";
    f.dim = 1;
    f.flux = [](double eps, const Vec& u) { return Vec::Constant(1, 0.5 * u[0] * u[0] - eps * u[0]); };
    f.jacobian = [](double eps, const Vec& u) { return Mat::Constant(1, 1, u[0] - eps); };
    f.u_minus = [](double eps) { return Vec::Constant(1, 1.0 + eps); };
    f.u_plus = [](double eps) { return Vec::Constant(1, -1.0 + eps); };
    return f;
}

FluxFamily exemplar_2x2(const ExemplarParams& p) {
    FluxFamily f;
    f.name = "exemplar_2x2";
    f.dim = 2;
    f.flux = [p](double, const Vec& u) {
        Vec out(2);
        out << 0.5 * u[0] * u[0] + p.mu * u[1], p.c * u[1] + p.beta * u[0] * u[0];
        return out;
    };
    f.jacobian = [p](double, const Vec& u) {
        Mat a(2, 2);
        a << u[0], p.mu, 2.0 * p.beta * u[0], p.c;
        return a;
    };
    f.u_minus = [](double) { return Vec{{1.0, 0.0}}; };
    f.u_plus = [](double) { return Vec{{-1.0, 0.0}}; };
    return f;
}

FluxFamily flux_by_name(const std::string& name) {
    if (name == "burgers") return burgers();
    if (name == "burgers_shifted") return burgers_shifted();
    if (name == "exemplar_2x2") return exemplar_2x2();
    fail(ErrorKind::Configuration, "unknown flux '" + name + "'");
}

namespace {

struct EigenData {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd vectors;
};

EigenData eig(const Mat& a) {
    Eigen::EigenSolver<Mat> es(a);
    require(es.info() == Eigen::Success, ErrorKind::Numerical, "endstate eigen-decomposition failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

Vec sorted_real(const Eigen::VectorXcd& v) {
    Vec out = v.real();
    std::sort(out.data(), out.data() + out.size());
    return out;
}

}  // namespace

LaxReport classify_lax(const FluxFamily& flux, double eps) {
    LaxReport r;
    const auto em = eig(flux.jacobian(eps, flux.u_minus(eps)));
    const auto ep = eig(flux.jacobian(eps, flux.u_plus(eps)));
    r.eig_minus = sorted_real(em.values);
    r.eig_plus = sorted_real(ep.values);
    r.rh_residual = flux.rh_residual(eps);
    const std::size_t n = flux.dim;

    auto check = [&](const Eigen::VectorXcd& v, const Vec& sorted, const char* side) -> bool {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (std::abs(v[i].imag()) > 1e-12 * (1.0 + std::abs(v[i]))) {
                r.reason = std::string("complex eigenvalue at ") + side;
                return false;
            }
            if (std::abs(v[i].real()) < 1e-12) {
                r.reason = std::string("zero eigenvalue at ") + side + " (characteristic shock)";
                return false;
            }
        }
        for (Eigen::Index i = 1; i < sorted.size(); ++i) {
            if (std::abs(sorted[i] - sorted[i - 1]) < 1e-12) {
                r.reason = std::string("repeated eigenvalue at ") + side;
                return false;
            }
        }
        return true;
    };
    const bool ok_m = check(em.values, r.eig_minus, "u_-");
    const bool ok_p = ok_m && check(ep.values, r.eig_plus, "u_+");
    for (Eigen::Index i = 0; i < r.eig_plus.size(); ++i)
        if (r.eig_plus[i] < 0) ++r.dim_stable_plus;
    for (Eigen::Index i = 0; i < r.eig_minus.size(); ++i)
        if (r.eig_minus[i] > 0) ++r.dim_unstable_minus;
    if (!ok_p) return r;
    if (r.dim_stable_plus + r.dim_unstable_minus != n + 1) {
        r.reason = "dim S(A_+) + dim U(A_-) != n+1";
        return r;
    }
    r.family = r.dim_stable_plus;
    r.lax_ok = true;
    return r;
}

ShockProfile::ShockProfile(Grid1D g, std::size_t n)
    : grid(g), dim(n), u_minus(Vec::Zero(static_cast<Eigen::Index>(n))),
      u_plus(Vec::Zero(static_cast<Eigen::Index>(n))), values(g, n), derivative(g, n) {}

Vec ShockProfile::state(std::size_t node) const {
    return values.values.segment(static_cast<Eigen::Index>(node * dim), static_cast<Eigen::Index>(dim));
}

namespace {

// Real eigenvector for a real eigenvalue selected by `pick`.
std::pair<double, Vec> real_mode(const Mat& a, bool want_negative) {
    const auto e = eig(a);
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < e.values.size(); ++i) {
        const double re = e.values[i].real();
        if ((want_negative && re < 0) || (!want_negative && re > 0)) {
            require(best < 0, ErrorKind::Argument, "manifold is not one-dimensional");
            best = i;
        }
    }
    require(best >= 0, ErrorKind::NoConnection, "no eigendirection for the connecting manifold");
    Vec v = e.vectors.col(best).real();
    return {e.values[best].real(), v / v.norm()};
}

void fill_derivative(const FluxFamily& flux, ShockProfile& p) {
    const Vec fm = flux.flux(p.eps, p.u_minus);
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
        const Vec d = flux.flux(p.eps, p.state(i)) - fm;
        for (std::size_t c = 0; c < p.dim; ++c) p.derivative.at(i, c) = d[static_cast<Eigen::Index>(c)];
    }
}

double one_step_defect(const FluxFamily& flux, const ShockProfile& p) {
    const Vec fm = flux.flux(p.eps, p.u_minus);
    ode::Rhs rhs = [&](double, const Vec& u) { return Vec(flux.flux(p.eps, u) - fm); };
    ode::Tolerances tol;
    tol.rtol = 1e-13;
    tol.atol = 1e-15;
    tol.h_init = p.grid.spacing() / 4;
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < p.grid.size(); ++i) {
        const Vec next = ode::integrate(rhs, 0.0, p.state(i), p.grid.spacing(), tol);
        worst = std::max(worst, (next - p.state(i + 1)).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

// Shoot along a 1-D manifold: from u_+ backwards when the stable manifold at
// u_+ is a line, otherwise forwards from u_-.
bool shoot(const FluxFamily& flux, ShockProfile& p, const LaxReport& lax, const ProfileOptions& opt) {
    const double eps = p.eps;
    const Vec fm = flux.flux(eps, p.u_minus);
    const bool backward = lax.dim_stable_plus == 1;
    if (!backward && lax.dim_unstable_minus != 1) return false;

    const Vec& rest = backward ? p.u_plus : p.u_minus;
    const Vec& target = backward ? p.u_minus : p.u_plus;
    auto [lambda, r] = real_mode(flux.jacobian(eps, rest), backward);
    // orient the seed towards the other endstate along the phase component
    const auto k = static_cast<Eigen::Index>(opt.phase_component);
    if ((target[k] - rest[k]) * r[k] < 0) r = -r;
    const double sgn = backward ? -1.0 : 1.0;
    // s runs away from the rest point: x = x_c + sgn * s
    ode::Rhs rhs = [&, sgn](double, const Vec& u) { return Vec(sgn * (flux.flux(eps, u) - fm)); };
    const Vec y0 = rest + opt.seed * r;
    ode::Tolerances tol;
    tol.rtol = opt.rtol;
    tol.atol = opt.atol;
    tol.h_max = 0.25;
    const double phase = p.phase;
    const double span = 4.0 * p.grid.half_width() + 200.0;
    auto ev = ode::integrate_until(rhs, 0.0, y0, span, [&](double, const Vec& u) { return u[k] - phase; }, tol);
    if (!ev.found) return false;
    const double s_c = ev.t;

    // nodes as s values, in increasing s
    const std::size_t n = p.grid.size();
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = sgn * (p.grid.x(i)) + s_c;  // x = sgn*(s - s_c)  =>  s = s_c + sgn*x
        order.emplace_back(s, i);
    }
    std::sort(order.begin(), order.end());
    std::vector<double> times;
    std::vector<std::size_t> idx;
    for (auto [s, i] : order) {
        if (s <= 0.0) {
            const Vec u = rest + opt.seed * std::exp(std::abs(lambda) * s) * r;
            for (std::size_t c = 0; c < p.dim; ++c) p.values.at(i, c) = u[static_cast<Eigen::Index>(c)];
        } else {
            times.push_back(s);
            idx.push_back(i);
        }
    }
    const auto states = ode::integrate_to(rhs, 0.0, y0, times, tol);
    for (std::size_t j = 0; j < states.size(); ++j)
        for (std::size_t c = 0; c < p.dim; ++c) p.values.at(idx[j], c) = states[j][static_cast<Eigen::Index>(c)];
    const Vec last = p.state(backward ? 0 : n - 1);
    return (last - target).norm() < 1e-2 * (p.u_plus - p.u_minus).norm();
}

// Damped Newton on the trapezoid-collocated boundary value problem.
bool collocate(const FluxFamily& flux, ShockProfile& p, const LaxReport& lax, const ProfileOptions& opt) {
    const double eps = p.eps;
    const std::size_t n = p.dim, N = p.grid.size();
    const double h = p.grid.spacing();
    const Vec fm = flux.flux(eps, p.u_minus);
    const auto em = eig(flux.jacobian(eps, p.u_minus));
    const auto ep = eig(flux.jacobian(eps, p.u_plus));
    // boundary rows: left eigen-coordinates of non-decaying modes must vanish
    auto left_rows = [](const EigenData& e, bool keep_positive) {
        const Eigen::MatrixXcd inv = e.vectors.inverse();
        std::vector<Vec> rows;
        for (Eigen::Index i = 0; i < e.values.size(); ++i)
            if ((e.values[i].real() > 0) != keep_positive) rows.push_back(inv.row(i).real().transpose());
        return rows;
    };
    const auto rows_m = left_rows(em, true);   // at -L kill non-unstable directions
    const auto rows_p = left_rows(ep, false);  // at +L kill non-stable directions
    (void)lax;
    if (rows_m.size() + rows_p.size() != n - 1) return false;  // square only for Lax counts

    Vec U(static_cast<Eigen::Index>(n * N));
    for (std::size_t i = 0; i < N; ++i) {
        const double w = 0.5 * (1.0 + std::tanh(p.grid.x(i)));
        U.segment(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n)) =
            (1.0 - w) * p.u_minus + w * p.u_plus;
    }
    const auto k = static_cast<Eigen::Index>(opt.phase_component);
    const std::size_t c0 = p.grid.center_index();
    auto residual = [&](const Vec& u) {
        Vec r(static_cast<Eigen::Index>(n * N));
        Eigen::Index row = 0;
        for (std::size_t i = 0; i + 1 < N; ++i) {
            const Vec a = u.segment(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n));
            const Vec b = u.segment(static_cast<Eigen::Index>((i + 1) * n), static_cast<Eigen::Index>(n));
            r.segment(row, static_cast<Eigen::Index>(n)) =
                (b - a) / h - 0.5 * (flux.flux(eps, a) + flux.flux(eps, b) - 2.0 * fm);
            row += static_cast<Eigen::Index>(n);
        }
        const Vec ul = u.head(static_cast<Eigen::Index>(n)) - p.u_minus;
        const Vec ur = u.tail(static_cast<Eigen::Index>(n)) - p.u_plus;
        for (const auto& l : rows_m) r[row++] = l.dot(ul);
        for (const auto& l : rows_p) r[row++] = l.dot(ur);
        r[row++] = u[static_cast<Eigen::Index>(c0 * n) + k] - p.phase;
        return r;
    };
    for (int it = 0; it < 60; ++it) {
        const Vec r = residual(U);
        const double rn = r.lpNorm<Eigen::Infinity>();
        if (rn < 1e-12) break;
        std::vector<Eigen::Triplet<double>> trip;
        Eigen::Index row = 0;
        for (std::size_t i = 0; i + 1 < N; ++i) {
            const Mat ja = flux.jacobian(eps, U.segment(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n)));
            const Mat jb =
                flux.jacobian(eps, U.segment(static_cast<Eigen::Index>((i + 1) * n), static_cast<Eigen::Index>(n)));
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) {
                    const double d = a == b ? 1.0 / h : 0.0;
                    const auto ai = static_cast<Eigen::Index>(a), bi = static_cast<Eigen::Index>(b);
                    trip.emplace_back(row + ai, static_cast<Eigen::Index>(i * n + b), -d - 0.5 * ja(ai, bi));
                    trip.emplace_back(row + ai, static_cast<Eigen::Index>((i + 1) * n + b), d - 0.5 * jb(ai, bi));
                }
            row += static_cast<Eigen::Index>(n);
        }
        for (const auto& l : rows_m) {
            for (std::size_t b = 0; b < n; ++b) trip.emplace_back(row, static_cast<Eigen::Index>(b), l[static_cast<Eigen::Index>(b)]);
            ++row;
        }
        for (const auto& l : rows_p) {
            for (std::size_t b = 0; b < n; ++b)
                trip.emplace_back(row, static_cast<Eigen::Index>((N - 1) * n + b), l[static_cast<Eigen::Index>(b)]);
            ++row;
        }
        trip.emplace_back(row, static_cast<Eigen::Index>(c0 * n) + k, 1.0);
        Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(n * N), static_cast<Eigen::Index>(n * N));
        J.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success) return false;
        const Vec du = lu.solve(r);
        double damp = 1.0;
        while (damp > 1e-4) {
            const Vec trial = U - damp * du;
            if (residual(trial).lpNorm<Eigen::Infinity>() < rn) {
                U = trial;
                break;
            }
            damp *= 0.5;
        }
        if (damp <= 1e-4) return false;
    }
    if (residual(U).lpNorm<Eigen::Infinity>() > 1e-9) return false;
    p.values.values = U;
    return true;
}

}  // namespace

ShockProfile solve_profile(const FluxFamily& flux, double eps, const Grid1D& grid, const ProfileOptions& opt) {
    require(opt.phase_component < flux.dim, ErrorKind::Argument, "phase component out of range");
    ShockProfile p(grid, flux.dim);
    p.eps = eps;
    p.flux_name = flux.name;
    p.u_minus = flux.u_minus(eps);
    p.u_plus = flux.u_plus(eps);
    const auto k = static_cast<Eigen::Index>(opt.phase_component);
    p.phase = opt.phase.value_or(0.5 * (p.u_minus[k] + p.u_plus[k]));

    if ((p.u_plus - p.u_minus).norm() < 1e-14) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (std::size_t c = 0; c < p.dim; ++c) p.values.at(i, c) = p.u_minus[static_cast<Eigen::Index>(c)];
        fill_derivative(flux, p);
        return p;
    }

    for (const Vec* u : {&p.u_minus, &p.u_plus}) {
        const auto e = eig(flux.jacobian(eps, *u));
        for (Eigen::Index i = 0; i < e.values.size(); ++i)
            require(std::abs(e.values[i].real()) > 1e-12, ErrorKind::SpectralAssumption,
                    "non-hyperbolic endstate of the profile ODE");
    }
    const auto lax = classify_lax(flux, eps);
    require(lax.dim_stable_plus + lax.dim_unstable_minus >= flux.dim + 1, ErrorKind::NoConnection,
            "manifold dimensions admit no transversal connection");

    bool ok = false;
    if (!opt.force_collocation) ok = shoot(flux, p, lax, opt);
    if (!ok) ok = collocate(flux, p, lax, opt);
    require(ok, ErrorKind::NoConnection, "no connecting orbit found by shooting or collocation");
    fill_derivative(flux, p);
    p.ode_residual = one_step_defect(flux, p);
    try {
        p.eta = decay_rate(p);
    } catch (const Error&) {
        p.eta = 0.0;
    }
    return p;
}

double decay_rate(const ShockProfile& p) {
    const double jump = (p.u_plus - p.u_minus).norm();
    require(jump > 0, ErrorKind::DomainTooSmall, "constant profile has no decaying tail");
    const double L = p.grid.half_width();
    double rate = std::numeric_limits<double>::infinity();
    for (int side : {-1, 1}) {
        const Vec& end = side < 0 ? p.u_minus : p.u_plus;
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < p.grid.size(); ++i) {
            const double x = p.grid.x(i);
            if (side * x < 0.5 * L) continue;
            const double d = (p.state(i) - end).norm();
            if (d > 1e-2 * jump || d < 1e-12 * jump) continue;
            xs.push_back(std::abs(x));
            ys.push_back(std::log(d));
        }
        require(xs.size() >= 3, ErrorKind::DomainTooSmall, "too few tail samples for a decay fit");
        const auto fit = fit_line(xs, ys);
        require(fit.residual <= 0.1, ErrorKind::DomainTooSmall, "profile tail is not yet exponential");
        rate = std::min(rate, -fit.slope);
    }
    return rate;
}

std::string profile_to_json(const ShockProfile& p) {
    nlohmann::json j;
    j["schema"] = kProfileSchema;
    j["kind"] = "shock_profile";
    j["flux"] = p.flux_name;
    j["epsilon"] = p.eps;
    j["grid"] = {{"half_width", p.grid.half_width()}, {"points", p.grid.size()}};
    j["components"] = p.dim;
    j["phase"] = p.phase;
    j["eta"] = p.eta;
    j["tolerances"] = {{"ode_residual", p.ode_residual}};
    j["u_minus"] = std::vector<double>(p.u_minus.data(), p.u_minus.data() + p.u_minus.size());
    j["u_plus"] = std::vector<double>(p.u_plus.data(), p.u_plus.data() + p.u_plus.size());
    const auto& v = p.values.values;
    const auto& d = p.derivative.values;
    j["values"] = std::vector<double>(v.data(), v.data() + v.size());
    j["derivative"] = std::vector<double>(d.data(), d.data() + d.size());
    return j.dump();
}

ShockProfile profile_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        fail(ErrorKind::Io, std::string("bad profile file: ") + e.what());
    }
    require(j.value("schema", -1) == kProfileSchema, ErrorKind::Io, "profile schema version mismatch");
    const Grid1D g(j["grid"]["half_width"].get<double>(), j["grid"]["points"].get<std::size_t>());
    ShockProfile p(g, j["components"].get<std::size_t>());
    p.flux_name = j["flux"].get<std::string>();
    p.eps = j["epsilon"].get<double>();
    p.phase = j["phase"].get<double>();
    p.eta = j["eta"].get<double>();
    p.ode_residual = j["tolerances"]["ode_residual"].get<double>();
    auto load = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    p.u_minus = load(j["u_minus"]);
    p.u_plus = load(j["u_plus"]);
    p.values = GridFunction(g, p.dim, load(j["values"]));
    p.derivative = GridFunction(g, p.dim, load(j["derivative"]));
    return p;
}

}  // namespace hopfshock
