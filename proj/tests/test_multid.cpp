#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/SparseLU>

#include "hopfshock/error.hpp"
#include "hopfshock/multid.hpp"

using namespace hopfshock;

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

// F² = s·F¹: every direction keeps the real semisimple spectrum of A¹.
FluxFamily scaled(const FluxFamily& f, double s) {
    FluxFamily out = f;
    out.name = f.name + "_transverse";
    out.flux = [f, s](double eps, const Vec& u) { return Vec(s * f.flux(eps, u)); };
    out.jacobian = [f, s](double eps, const Vec& u) { return Mat(s * f.jacobian(eps, u)); };
    return out;
}

FluxFamily zero_flux(std::size_t n) {
    FluxFamily out;
    out.name = "zero";
    out.dim = n;
    out.flux = [n](double, const Vec&) { return Vec(Vec::Zero(ix(n))); };
    out.jacobian = [n](double, const Vec&) { return Mat(Mat::Zero(ix(n), ix(n))); };
    return out;
}

const TransverseModeFamily& galloping() {
    static const auto fam = [] {
        const auto flux = exemplar_2x2();
        const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(30.0, 0.1));
        return std::make_unique<TransverseModeFamily>(
            assemble_mode_family(p, flux, {scaled(flux, 0.5)}, LinopOptions{6, PlantedPair{}}, 16));
    }();
    return *fam;
}

CVec bump(const Grid1D& g, double shift = 0.0) {
    CVec f(ix(2 * g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.x(i) - shift;
        f[ix(2 * i)] = std::exp(-x * x);
        f[ix(2 * i + 1)] = x * std::exp(-x * x);
    }
    return f;
}

double rel(const CVec& a, const CVec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST_SUITE("multid") {

TEST_CASE("zero mode is the one-dimensional operator") {
    const auto& fam = galloping();
    const auto L = assemble_L(fam.profile, fam.flux, LinopOptions{6, PlantedPair{}});
    const auto M = fam.mode({0, 0});
    CHECK(Mat(L.band).cwiseEqual(Mat(fam.L0.band)).all());
    CHECK(L.U.cwiseEqual(fam.L0.U).all());
    CHECK(L.V.cwiseEqual(fam.L0.V).all());
    const Eigen::MatrixXcd diff = Eigen::MatrixXcd(M.band) - Eigen::MatrixXcd(L.band.cast<Complex>());
    CHECK(diff.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fam.real_mode({0, 0}).band.nonZeros() == L.band.nonZeros());
}

TEST_CASE("constant coefficients reproduce the transverse symbol") {
    const double a = 0.7, b = 0.4;
    const auto flux = burgers(a, a);
    FluxFamily F2 = scaled(flux, b);
    for (int order : {2, 6}) {
        double err[2];
        int r = 0;
        for (double h : {0.1, 0.05}) {
            const Grid1D g = Grid1D::with_spacing(20.0, h);
            const auto fam = assemble_mode_family(solve_profile(flux, 0.0, g), flux, {F2}, LinopOptions{order, {}}, 4);
            const double zeta = 1.0;
            const int xi = 2;
            const auto L = fam.mode({xi, 0});
            CVec e(ix(g.size()));
            for (std::size_t i = 0; i < g.size(); ++i) e[ix(i)] = std::exp(Complex(0, zeta * g.x(i)));
            const CVec Le = L.apply(e);
            const Complex sym = Complex(0, -a * zeta) - Complex(0, xi * b * a) - zeta * zeta - double(xi * xi);
            double m = 0.0;
            for (std::size_t i = 10; i + 10 < g.size(); ++i) m = std::max(m, std::abs(Le[ix(i)] - sym * e[ix(i)]));
            err[r++] = m;
        }
        if (order == 2) {
            CHECK(err[0] <= 0.1 * 0.1);
            CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.05));
        } else {
            CHECK(err[0] <= 1e-6);
        }
    }
}

TEST_CASE("scalar transverse shift moves the spectrum exactly") {
    // A² = c I: L_ξ = L₀ - icξ - ξ², so the planted eigenvalue iτ moves to iτ - icξ - ξ²
    const auto flux = exemplar_2x2();
    const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(30.0, 0.1));
    const double c = 0.3;
    FluxFamily lin = zero_flux(2);
    lin.flux = [c](double, const Vec& u) { return Vec(c * u); };
    lin.jacobian = [c](double, const Vec&) { return Mat(c * Mat::Identity(2, 2)); };
    const auto fam = assemble_mode_family(p, flux, {lin}, LinopOptions{6, PlantedPair{}}, 4);
    for (int xi : {1, 2}) {
        const Complex expect = Complex(0, 0.5) - Complex(0, c * xi) - double(xi * xi);
        const auto ev = eigs_near(fam.mode({xi, 0}), expect + Complex(0.01, 0.01), 2);
        REQUIRE(!ev.empty());
        CHECK(std::abs(ev.front().lambda - expect) <= 1e-8);
    }
}

TEST_CASE("non-hyperbolic transverse flux is rejected") {
    const auto flux = exemplar_2x2();
    const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(20.0, 0.1));
    FluxFamily F2 = zero_flux(2);
    F2.flux = [](double, const Vec& u) { return Vec(Vec::Unit(2, 0) * 0.25 * u[0] * u[0]); };
    F2.jacobian = [](double, const Vec& u) {
        Mat J = Mat::Zero(2, 2);
        J(0, 0) = 0.5 * u[0];
        return J;
    };
    try {
        assemble_mode_family(p, flux, {F2});
        FAIL("expected a spectral-assumption error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpectralAssumption);
    }
    CHECK_THROWS_AS(assemble_mode_family(p, flux, {}), Error);
}

TEST_CASE("scalar Burgers mode one sits left of the gap") {
    const auto flux = burgers();
    const auto p = solve_profile(flux, 0.0, Grid1D::with_spacing(15.0, 0.1));
    const auto fam = assemble_mode_family(p, flux, {flux}, {}, 4);
    // endstate dispersion: Re(-iζa - iξa - ζ² - ξ²) = -ζ² - ξ², so η = 1
    CHECK(fam.eta == doctest::Approx(1.0).epsilon(1e-12));
    for (int xi : {1, 2}) {
        double right = -1e300;
        for (const auto& z : dense_spectrum(fam.mode({xi, 0}), 1000)) right = std::max(right, z.real());
        MESSAGE("ξ = " << xi << ": rightmost eigenvalue " << right);
        CHECK(right <= -fam.eta * xi * xi);
    }
}

TEST_CASE("gap decay for nonzero modes, none at zero") {
    const auto& fam = galloping();
    CHECK(fam.eta == doctest::Approx(1.0).epsilon(1e-9));
    const CVec f = bump(fam.profile.grid);
    const auto g1 = gap_decay(fam, {1, 0}, f, 5.0, 20.0);
    const auto g2 = gap_decay(fam, {2, 0}, f, 5.0, 20.0);
    const auto g0 = gap_decay(fam, {0, 0}, f, 5.0, 20.0);
    MESSAGE("rates " << g1.rate << ", " << g2.rate << ", zero mode " << g0.rate);
    CHECK(g1.rate >= 0.5 * g1.predicted);
    CHECK(g1.rate <= 2.0 * g1.predicted);
    CHECK(g2.rate >= 0.5 * 4.0 * fam.eta);
    CHECK(g2.rate <= 2.0 * 4.0 * fam.eta);
    CHECK(g0.rate <= 0.1 * g1.rate);
    CHECK_THROWS_AS(gap_decay(fam, {17, 0}, f, 1.0, 2.0), Error);
}

TEST_CASE("transverse transforms") {
    const Grid1D g = Grid1D::with_spacing(5.0, 0.5);
    std::mt19937 rng(7);
    std::normal_distribution<double> nd;
    for (std::size_t dims : {1u, 2u}) {
        const int K = 3;
        CylinderField f(g, 2, dims, K);
        for (std::size_t k = 0; k < f.modes(); ++k) {
            const Mode xi = f.mode_at(k);
            CHECK(f.index(xi) == k);
            for (Eigen::Index m = 0; m < f.at(k).size(); ++m) f.at(k)[m] = Complex(nd(rng), nd(rng));
        }
        // enforce û(-ξ) = conj(û(ξ))
        for (std::size_t k = 0; k < f.modes(); ++k) {
            const Mode xi = f.mode_at(k);
            const std::size_t km = f.index({-xi[0], -xi[1]});
            if (km < k) f.at(k) = f.at(km).conjugate();
            if (km == k) f.at(k) = f.at(k).real().cast<Complex>();
        }
        CHECK(f.hermitian_defect() == 0.0);
        const std::size_t P = 9;
        const auto phys = f.to_physical(P);
        double imag = 0.0, direct = 0.0;
        for (std::size_t t = 0; t < phys.size(); ++t) {
            imag = std::max(imag, phys[t].imag().cwiseAbs().maxCoeff());
            // direct synthesis at this transverse point
            const double x2 = 2 * M_PI * static_cast<double>(dims == 1 ? t : t / P) / P;
            const double x3 = dims == 1 ? 0.0 : 2 * M_PI * static_cast<double>(t % P) / P;
            CVec s = CVec::Zero(phys[t].size());
            for (std::size_t k = 0; k < f.modes(); ++k) {
                const Mode xi = f.mode_at(k);
                s += std::exp(Complex(0, xi[0] * x2 + xi[1] * x3)) * f.at(k);
            }
            direct = std::max(direct, (s - phys[t]).cwiseAbs().maxCoeff());
        }
        CHECK(imag <= 1e-12);
        CHECK(direct <= 1e-12);
        const auto back = CylinderField::from_physical(phys, P, g, 2, dims, K);
        double rt = 0.0;
        for (std::size_t k = 0; k < f.modes(); ++k) rt = std::max(rt, (back.at(k) - f.at(k)).cwiseAbs().maxCoeff());
        CHECK(rt <= 1e-13);
    }
    CylinderField f(g, 1, 1, 4);
    CHECK_THROWS_AS(f.to_physical(8), Error);
    CHECK_THROWS_AS(CylinderField(g, 1, 3, 2), Error);
}

TEST_CASE("mode-wise right inverse") {
    const auto& fam = galloping();
    const Grid1D& g = fam.profile.grid;
    const double T = 4 * M_PI;
    const int K = 2;
    InverseOptions zo{1e-12, 1e-8, 4000, false, ContinuizationOrder::Trapezoid};

    // zero mode alone: the 1-D series on an independently built S₀
    CylinderField n0(g, 2, 1, K);
    const CVec dens = bump(g, 1.0).cwiseProduct(bump(g, 1.0));
    n0[{0, 0}] = dens.real().cast<Complex>();
    const auto r0 = multid_right_inverse(fam, n0, T, 1e-14, zo);
    {
        const auto pair = crossing_pair(fam.L0);
        const auto proj = projections(fam.L0, &pair, fam.profile, fam.flux);
        TransverseOperator op;
        op.grid = g;
        op.components = 2;
        op.period = T;
        op.apply = [&](const GridFunction& f) {
            Vec x = proj.pi_tilde(f.values) - proj.pi_zero(f.values);
            const SemigroupStepper st(fam.L0, T / 256.0);
            for (int k = 0; k < 256; ++k) x = proj.pi_tilde(st.cn_step(x, Vec()));
            return GridFunction(g, 2, x);
        };
        op.dx = central_dx;
        op.requires_projection = true;
        op.has_projection = true;
        const auto b1 = apply_right_inverse(op, GridFunction(g, 2, Vec(dens.real())), zo).b.values;
        CHECK(rel(r0.b[{0, 0}], b1.cast<Complex>()) <= 1e-12);
        for (int k : {-2, -1, 1, 2}) CHECK(r0.b[{k, 0}].cwiseAbs().maxCoeff() == 0.0);
        CHECK(!r0.zero_ledger.records.empty());
    }

    // |ξ| = 1 alone: geometric oracle from an independent sparse-LU Crank-Nicolson
    CylinderField n1(g, 2, 1, K);
    n1[{1, 0}] = dens * Complex(0.6, 0.8);
    n1[{-1, 0}] = n1[{1, 0}].conjugate();
    const auto r1 = multid_right_inverse(fam, n1, T, 1e-14, zo);
    {
        const auto L = fam.mode({1, 0});
        const double dt = T / 256.0;
        Eigen::SparseMatrix<Complex> I(ix(L.size()), ix(L.size()));
        I.setIdentity();
        Eigen::SparseMatrix<Complex> Dense = L.band;
        const Eigen::MatrixXcd UV = L.U * L.V.transpose();
        Eigen::SparseMatrix<Complex> lowrank = UV.sparseView(1e-300);
        const Eigen::SparseMatrix<Complex> A = I - 0.5 * dt * (Dense + lowrank);
        Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu(A);
        auto S = [&](CVec y) {
            for (int k = 0; k < 256; ++k) y = lu.solve(CVec(y + 0.5 * dt * L.apply(y)));
            return y;
        };
        const Vec dr = central_dx(GridFunction(g, 2, Vec(n1[{1, 0}].real()))).values;
        const Vec di = central_dx(GridFunction(g, 2, Vec(n1[{1, 0}].imag()))).values;
        const CVec s0 = dr.cast<Complex>() + Complex(0, 1) * di.cast<Complex>();
        const CVec s1 = S(s0), s2 = S(s1);
        const Complex mu = s1.dot(s2) / s1.dot(s1);
        const CVec oracle = s0 + s1 / (1.0 - mu);
        MESSAGE("contraction " << std::abs(mu));
        CHECK(rel(r1.b[{1, 0}], oracle) <= 1e-6);
        CHECK(rel(r1.b[{-1, 0}], oracle.conjugate()) <= 1e-6);
        CHECK(r1.b[{0, 0}].cwiseAbs().maxCoeff() == 0.0);
        CHECK(std::abs(mu) < 1.0);
    }
    bool found = false;
    for (const auto& led : r1.ledgers)
        if (led.xi[0] == 1) {
            found = true;
            CHECK(led.terms >= 2);
            CHECK(led.contraction < 1.0);
            CHECK(led.tail_norm > 0.0);
        }
    CHECK(found);
    CHECK(r1.tail_constant > 0.0);
    CHECK(std::isfinite(r1.tail_constant));

    // mixed density: sum of the separate results
    CylinderField n2(g, 2, 1, K);
    n2[{2, 0}] = bump(g, -2.0) * Complex(0.0, 0.3);
    n2[{-2, 0}] = n2[{2, 0}].conjugate();
    const auto r2 = multid_right_inverse(fam, n2, T, 1e-14, zo);
    CylinderField mix(g, 2, 1, K);
    for (std::size_t k = 0; k < mix.modes(); ++k) mix.at(k) = n0.at(k) + n1.at(k) + n2.at(k);
    const auto rm = multid_right_inverse(fam, mix, T, 1e-14, zo);
    double lin = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < mix.modes(); ++k) {
        lin = std::max(lin, (rm.b.at(k) - r0.b.at(k) - r1.b.at(k) - r2.b.at(k)).cwiseAbs().maxCoeff());
        scale = std::max(scale, rm.b.at(k).cwiseAbs().maxCoeff());
    }
    CHECK(lin <= 1e-10 * scale);
    CHECK(rm.b.hermitian_defect() <= 1e-12 * scale);
    double imag = 0.0;
    for (const auto& v : rm.b.to_physical(8)) imag = std::max(imag, v.imag().cwiseAbs().maxCoeff());
    CHECK(imag <= 1e-12);
}

TEST_CASE("cosine collocation of the nonlinearity") {
    CylinderOptions o;
    o.grid = Grid1D::with_spacing(10.0, 0.1);
    o.xi_max = 4;
    o.crossing_mode = 1;
    const auto flux = exemplar_2x2();
    const CylinderSystem s(flux, solve_profile(flux, 0.0, o.grid), o);
    CHECK(s.pair().lambda.imag() == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::abs(s.pair().lambda.real()) <= 1e-9);
    std::mt19937 rng(3);
    std::normal_distribution<double> nd;
    Vec u(ix(s.size()));
    for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = 0.1 * nd(rng);
    CHECK((s.analyze(s.synthesize(u)) - u).cwiseAbs().maxCoeff() <= 1e-14);

    // Galerkin projection of Q(Σ û_k cos kx₂) by a fine trapezoid rule in x₂
    const Vec got = s.forcing(u);
    const std::size_t n = 2, C = s.components(), N = o.grid.size();
    const int M = 64;
    Vec Qhat = Vec::Zero(ix(N * C));
    for (int j = 0; j < M; ++j) {
        const double x2 = 2 * M_PI * j / M;
        for (std::size_t i = 0; i < N; ++i) {
            Vec loc = Vec::Zero(2);
            for (int k = 0; k <= o.xi_max; ++k)
                loc += std::cos(k * x2) * u.segment(ix(i * C + static_cast<std::size_t>(k) * n), 2);
            const Vec full = s.profile.state(i) + loc;
            const Vec q = -flux.flux(0.0, full) + flux.flux(0.0, s.profile.state(i)) +
                          flux.jacobian(0.0, s.profile.state(i)) * loc;
            for (int k = 0; k <= o.xi_max; ++k)
                Qhat.segment(ix(i * C + static_cast<std::size_t>(k) * n), 2) +=
                    (k == 0 ? 1.0 : 2.0) / M * std::cos(k * x2) * q;
        }
    }
    const Vec want = apply_dx(o.grid, C, Qhat, 6);
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("galloping cylinder orbit reduces to the planar one") {
    CylinderOptions o;
    o.xi_max = 2;
    o.crossing_mode = 0;
    const auto ps = assemble_cylinder_poincare(exemplar_2x2(), o);
    const auto co = multid_orbit(ps, 0.05);
    const auto planar = find_periodic_orbit(assemble_poincare(exemplar_2x2()), 0.05);
    const auto s = std::dynamic_pointer_cast<const CylinderSystem>(ps.context->at(co.orbit.eps));
    REQUIRE(s);
    CHECK(std::abs(co.orbit.eps - planar.eps) <= 1e-8 * std::abs(planar.eps));
    CHECK(std::abs(co.orbit.period - planar.period) <= 1e-8);
    CHECK((s->block(co.orbit.u0, 0) - planar.u0).cwiseAbs().maxCoeff() <= 1e-8);
    for (int k : {1, 2}) CHECK(s->block(co.orbit.u0, k).cwiseAbs().maxCoeff() == 0.0);
    CHECK(co.cosine_fit_residual <= 1e-12);
}

TEST_CASE("cellular cylinder orbit") {
    CylinderOptions o;
    o.xi_max = 4;
    o.crossing_mode = 1;
    const auto ps = assemble_cylinder_poincare(exemplar_2x2(), o);
    const auto co = multid_orbit(ps, 0.05);
    const auto& orb = co.orbit;
    MESSAGE("ε = " << orb.eps << ", T = " << orb.period << ", residual " << orb.periodicity_residual
                   << ", cosine fit " << co.cosine_fit_residual);
    CHECK(orb.periodicity_residual <= 1e-6);
    CHECK_FALSE(orb.truncation_active);
    CHECK(co.cosine_fit_residual <= 0.05);
    CHECK(std::abs(orb.period - 4 * M_PI) <= 0.01 * 4 * M_PI);
    CHECK(orb.mass_drift <= 1e-8);
    // mode 1 carries the orbit; the others are driven at higher order
    for (int k = 0; k <= 4; ++k)
        if (k != 1) CHECK(co.mode_energy[static_cast<std::size_t>(k)] <= 0.01 * co.mode_energy[1]);
    CHECK(co.mode_energy[3] <= co.mode_energy[2]);
    CHECK(co.mode_energy[4] <= co.mode_energy[3]);
    CHECK(co.to_json().find("\"cosine_fit_residual\"") != std::string::npos);
    CHECK(co.mode_energy_csv().rfind("k,energy\n", 0) == 0);
    CHECK(co.frame_svg(0).find("<svg") == 0);
}

}  // TEST_SUITE
