#include <doctest.h>

#include <cmath>
#include <random>

#include "hopfshock/error.hpp"
#include "hopfshock/linops.hpp"

using namespace hopfshock;

namespace {

struct Setup {
    FluxFamily flux = exemplar_2x2();
    ShockProfile profile;
    DiscreteLinearOperator L;
    explicit Setup(double eps, double half_width = 30.0, double h = 0.1, bool planted = true)
        : profile(solve_profile(flux, eps, Grid1D::with_spacing(half_width, h))) {
        LinopOptions o;
        if (planted) o.planted = PlantedPair{};
        L = assemble_L(profile, flux, o);
    }
};

double l2(const Grid1D& g, const Vec& v) { return std::sqrt(g.spacing()) * v.norm(); }

}  // namespace

TEST_SUITE("linops") {

TEST_CASE("constant coefficients reproduce the Fourier symbol") {
    const double a = 0.7, xi = 1.0;
    const Grid1D g = Grid1D::with_spacing(20.0, 0.1);
    const auto flux = burgers(a, a);
    const auto profile = solve_profile(flux, 0.0, g);
    for (int order : {2, 6}) {
        LinopOptions o;
        o.order = order;
        const auto L = assemble_L(profile, flux, o);
        const Vec c = GridFunction::sample(g, [&](double x) { return std::cos(xi * x); }).values;
        const Vec s = GridFunction::sample(g, [&](double x) { return std::sin(xi * x); }).values;
        const Vec Lc = L.apply(c), Ls = L.apply(s);
        const Complex sym(-xi * xi, -a * xi);
        double err = 0.0;
        for (std::size_t i = 10; i + 10 < g.size(); ++i) {
            const Complex f(c[static_cast<Eigen::Index>(i)], s[static_cast<Eigen::Index>(i)]);
            const Complex Lf(Lc[static_cast<Eigen::Index>(i)], Ls[static_cast<Eigen::Index>(i)]);
            err = std::max(err, std::abs(Lf - sym * f));
        }
        const double h = g.spacing();
        CHECK(err <= h * h * xi * xi * xi);
        if (order == 6) CHECK(err <= 1e-6);
    }
}

TEST_CASE("translation mode is in the kernel") {
    Setup s(0.0);
    CHECK(l2(s.L.grid, s.L.apply(s.profile.derivative.values)) <= 1e-6);
    const auto flux = burgers();
    const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(30.0, 0.1));
    const auto L = assemble_L(p, flux);
    CHECK(l2(p.grid, L.apply(p.derivative.values)) <= 1e-6);
}

TEST_CASE("discrete conservation for compactly supported input") {
    Setup s(0.03);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec f = Vec::Zero(static_cast<Eigen::Index>(s.L.size()));
    for (std::size_t i = 0; i < s.L.grid.size(); ++i)
        if (std::abs(s.L.grid.x(i)) < 10.0)
            for (int c = 0; c < 2; ++c) f[static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(c))] = U(rng);
    const Vec Lf = s.L.apply(f);
    for (int c = 0; c < 2; ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < s.L.grid.size(); ++i) m += Lf[static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(c))];
        CHECK(std::abs(m * s.L.grid.spacing()) <= 1e-10);
    }
}

TEST_CASE("planted pair sits at the prescribed eigenvalues") {
    Setup s0(0.0);
    const auto p0 = crossing_pair(s0.L);
    CHECK(std::abs(p0.gamma) <= 1e-4);
    CHECK(p0.tau == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(p0.residual <= 1e-8);
    CHECK(p0.mass <= 1e-8);
    CHECK(std::abs(inner(s0.L.grid, p0.phi_left, p0.phi) - Complex(1.0)) <= 1e-12);

    const double d = 0.02;
    Setup sp(d), sm(-d);
    const auto pp = crossing_pair(sp.L);
    const auto pm = crossing_pair(sm.L);
    CHECK(pp.gamma > 0.0);
    CHECK(pm.gamma < 0.0);
    const double slope = (pp.gamma - pm.gamma) / (2 * d);
    CHECK(slope > 0.0);
    CHECK(slope == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Burgers has no crossing pair") {
    const auto flux = burgers();
    const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(30.0, 0.1));
    const auto L = assemble_L(p, flux);
    try {
        crossing_pair(L);
        FAIL("expected a spectral-assumption error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpectralAssumption);
    }
}

TEST_CASE("extra unstable spectrum violates the spectral condition") {
    Setup s(0.0);
    auto L = s.L;
    for (Eigen::Index k = 0; k < L.band.outerSize(); ++k) L.band.coeffRef(k, k) += 0.3;
    try {
        crossing_pair(L);
        FAIL("expected a condition violation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConditionDViolated);
    }
}

TEST_CASE("shift-invert agrees with a dense eigensolve on a small grid") {
    Setup s(0.01, 16.0, 0.2);
    REQUIRE(s.L.size() <= 400);
    const auto dense = dense_spectrum(s.L);
    const auto pair = crossing_pair(s.L);
    double best = 1e9;
    for (auto z : dense) best = std::min(best, std::abs(z - pair.lambda));
    CHECK(best <= 1e-9);
    // every dense eigenvalue with Re > -0.05 was seen by the scan
    for (auto z : dense) {
        if (z.real() < -0.05) continue;
        double d = 1e9;
        for (auto f : pair.found) d = std::min(d, std::abs(f - z));
        CHECK(d <= 1e-6);
    }
}

TEST_CASE("dense solve is refused for large operators") {
    Setup s(0.0);
    CHECK_THROWS_AS(dense_spectrum(s.L), Error);
}

TEST_CASE("essential spectrum envelope") {
    const auto burg = burgers(1.0, -1.0);
    Vec xi(3);
    xi << 0.0, 1.0, 2.0;
    const auto env = essential_envelope(burg, 0.0, xi);
    // speeds: a_- = 1, a_+ = -1
    bool hit = false;
    for (const auto& c : env.curves) {
        CHECK(std::abs(c[0]) == 0.0);
        if (std::abs(c[1] - Complex(-1.0, -1.0)) < 1e-15) hit = true;
    }
    CHECK(hit);
    CHECK(env.max_real_nonzero_xi < 0.0);
    CHECK(env.margin(Complex(0.0, 0.5)) > 0.0);

    FluxFamily rot = burg;
    rot.dim = 2;
    rot.jacobian = [](double, const Vec&) {
        Mat a(2, 2);
        a << 0, 1, -1, 0;
        return a;
    };
    rot.u_minus = [](double) { return Vec{{1.0, 0.0}}; };
    rot.u_plus = [](double) { return Vec{{-1.0, 0.0}}; };
    try {
        essential_envelope(rot, 0.0, xi);
        FAIL("expected a spectral-assumption error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpectralAssumption);
    }
}

TEST_CASE("spectral projections") {
    Setup s(0.0);
    const auto pair = crossing_pair(s.L);
    const auto P = projections(s.L, &pair, s.profile, s.flux);
    const Grid1D& g = s.L.grid;
    const Vec re = pair.phi.real(), im = pair.phi.imag();
    CHECK(l2(g, P.pi(re) - re) <= 1e-10);
    CHECK(l2(g, P.pi(im) - im) <= 1e-10);
    CHECK(l2(g, P.pi_tilde(re)) <= 1e-10);

    std::mt19937 rng(3);
    std::normal_distribution<double> N01;
    Vec f(static_cast<Eigen::Index>(s.L.size()));
    for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = N01(rng);
    const Vec pf = P.pi(f);
    CHECK(l2(g, P.pi(pf) - pf) <= 1e-10 * l2(g, f));
    for (int c = 0; c < 2; ++c) {
        double m = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) m += pf[static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(c))];
        CHECK(std::abs(m * g.spacing()) <= 1e-8);
    }
    // zero mode
    const Vec& up = s.profile.derivative.values;
    CHECK(l2(g, P.pi_zero(up) - up) <= 1e-12);
    const Vec p0f = P.pi_zero(f);
    CHECK(l2(g, P.pi_zero(p0f) - p0f) <= 1e-10 * l2(g, p0f));
    // the discrete left null vector is the constant ℓ away from the boundaries
    for (double x : {-15.0, 0.0, 15.0}) {
        const auto i = static_cast<std::size_t>(std::lround((x + g.half_width()) / g.spacing()));
        for (int c = 0; c < 2; ++c)
            CHECK(P.zero_left[static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(c))] ==
                  doctest::Approx(P.ell[c]).epsilon(1e-3));
    }
    CHECK(P.ell.dot(s.profile.u_plus - s.profile.u_minus) == doctest::Approx(1.0));
    // antiderivative of φ has zero end value
    const auto n = static_cast<Eigen::Index>(pair.Phi.size());
    CHECK(std::abs(pair.Phi[n - 1]) <= 1e-8);
    CHECK(std::abs(pair.Phi[n - 2]) <= 1e-8);
}

TEST_CASE("semigroup leaves the translation mode fixed") {
    Setup s(0.0);
    const auto out = semigroup_step(s.L, s.profile.derivative, 2.0, 80);
    CHECK(l2(s.L.grid, out.values - s.profile.derivative.values) <= 1e-6);
}

TEST_CASE("constant-coefficient semigroup matches the moving heat kernel") {
    const double a = 0.7, t0 = 1.0, t = 2.0;
    const Grid1D g = Grid1D::with_spacing(30.0, 0.1);
    const auto flux = burgers(a, a);
    const auto L = assemble_L(solve_profile(flux, 0.0, g), flux);
    auto heat = [&](double tt) {
        return GridFunction::sample(g, [&](double x) {
            return std::exp(-(x - a * (tt - t0)) * (x - a * (tt - t0)) / (4 * tt)) / std::sqrt(4 * M_PI * tt);
        });
    };
    const auto exact = heat(t0 + t);
    double prev = 0.0;
    for (std::size_t steps : {20, 40, 80}) {
        const auto out = semigroup_step(L, heat(t0), t, steps);
        const double err = l2(g, out.values - exact.values);
        CHECK(err <= 1e-3);
        if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.15));
        prev = err;
    }
}

TEST_CASE("projected semigroup smoothing, conservation and invariance") {
    Setup s(0.0);
    const auto pair = crossing_pair(s.L);
    const auto P = projections(s.L, &pair, s.profile, s.flux);
    const Grid1D& g = s.L.grid;
    Vec f = Vec::Zero(static_cast<Eigen::Index>(s.L.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        f[static_cast<Eigen::Index>(2 * i)] = std::tanh((g.x(i) - 1.0) / g.spacing()) - std::tanh((g.x(i) + 1.0) / g.spacing());
        f[static_cast<Eigen::Index>(2 * i + 1)] = 0.5 * std::exp(-g.x(i) * g.x(i));
    }
    const Vec df = apply_dx(g, 2, f, 6);
    // for each t the worst input oscillates at frequency 1/sqrt(2t)
    std::vector<double> ts, ratios;
    for (double t : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0}) {
        const double k = 1.0 / std::sqrt(2 * t);
        Vec ft = Vec::Zero(f.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = g.x(i), env = std::exp(-x * x / 200.0);
            ft[static_cast<Eigen::Index>(2 * i)] = env * std::sin(k * x);
            ft[static_cast<Eigen::Index>(2 * i + 1)] = env * std::cos(k * x);
        }
        const Vec dft = apply_dx(g, 2, ft, 6);
        const auto out = semigroup_step(s.L, GridFunction(g, 2, dft), t, 64, &P);
        ts.push_back(t);
        ratios.push_back(l2(g, out.values) / l2(g, ft));
        CHECK(l2(g, P.pi(out.values)) <= 1e-8);
    }
    CHECK(fit_power_law(ts, ratios).exponent >= -0.55);

    // total integral of e^{Lt}∂_x f stays put while the signal is inside the grid
    for (double t : {0.5, 2.0, 5.0}) {
        const auto out = semigroup_step(s.L, GridFunction(g, 2, df), t, 100);
        for (int c = 0; c < 2; ++c) {
            double m = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) m += out.values[static_cast<Eigen::Index>(2 * i + static_cast<std::size_t>(c))];
            CHECK(std::abs(m * g.spacing()) <= 1e-8);
        }
    }
}

}  // TEST_SUITE
