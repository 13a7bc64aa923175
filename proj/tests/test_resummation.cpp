#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "hopfshock/resummation.hpp"

using namespace hopfshock;

namespace {

GridFunction gaussian_squared(const Grid1D& g) {
    return GridFunction::sample(g, [](double x) { return std::exp(-x * x); });
}

double mass(const GridFunction& f) { return integral(f, 0); }

}  // namespace

TEST_SUITE("resummation") {

TEST_CASE("zero density gives zero in one term") {
    const Grid1D g = Grid1D::with_spacing(40.0, 0.1);
    const auto op = heat_model_operator(g, -1.0, 1.0);
    const auto res = apply_right_inverse(op, GridFunction(g));
    CHECK(res.ledger.records.size() == 1);
    CHECK(res.b.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(res.ledger.residual == 0.0);
}

TEST_CASE("model operator is a semigroup and conserves interior mass") {
    const Grid1D g = Grid1D::with_spacing(60.0, 0.1);
    const auto s1 = heat_model_operator(g, -1.0, 1.0);
    const auto s2 = heat_model_operator(g, -1.0, 2.0);
    const auto f = gaussian_squared(g);
    const auto twice = s1.apply(s1.apply(f));
    const auto once = s2.apply(f);
    CHECK((twice.values - once.values).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(mass(once) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("right inverse satisfies its defining equation and lets mass escape") {
    const Grid1D g = Grid1D::with_spacing(170.0, 0.1);
    const auto op = heat_model_operator(g, -1.0, 1.0);
    const auto n = gaussian_squared(g);
    const double n_l1 = norm_l1(n);
    const auto res = apply_right_inverse(op, n);
    CHECK(res.ledger.residual <= 1e-6);

    // every finite partial sum through j = 64 has zero mass
    for (const auto& r : res.ledger.records)
        if (r.j <= 64) CHECK(std::abs(r.mass) <= 1e-8 * n_l1);
    CHECK(std::abs(mass(res.b)) > 100 * 1e-8 * n_l1);
    // the escaped mass is ∫n/(aT)
    CHECK(mass(res.b) == doctest::Approx(-std::sqrt(std::numbers::pi)).epsilon(1e-6));
}

TEST_CASE("resummed partial sums follow the (NT)^{-1/4} Cauchy envelope") {
    // at |a| = 3 the drift separates successive columns early, so dyadic blocks are asymptotic
    const Grid1D g = Grid1D::with_spacing(600.0, 0.1);
    const auto res = apply_right_inverse(heat_model_operator(g, -3.0, 1.0), gaussian_squared(g));
    CHECK(res.ledger.residual <= 1e-6);
    CHECK(std::abs(res.ledger.envelope_exponent + 0.25) <= 0.05);
    CHECK(res.ledger.envelope_constant > 0.0);
    CHECK(integral(res.b, 0) == doctest::Approx(-std::sqrt(std::numbers::pi) / 3.0).epsilon(1e-6));
}

TEST_CASE("ledger exports csv") {
    const Grid1D g = Grid1D::with_spacing(80.0, 0.2);
    const auto res = apply_right_inverse(heat_model_operator(g, -1.0, 1.0), gaussian_squared(g));
    const auto csv = res.ledger.to_csv();
    CHECK(csv.rfind("j,increment_norm,mass\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == res.ledger.records.size() + 1);
}

TEST_CASE("nonconvergence carries the ledger") {
    const Grid1D g = Grid1D::with_spacing(170.0, 0.2);
    InverseOptions opt;
    opt.max_terms = 20;
    try {
        apply_right_inverse(heat_model_operator(g, -1.0, 1.0), gaussian_squared(g), opt);
        FAIL("expected a nonconvergence error");
    } catch (const SeriesError& e) {
        CHECK(e.kind() == ErrorKind::Nonconvergence);
        CHECK(e.ledger().records.size() == 20);
    }
}

TEST_CASE("operator with an unprojected crossing pair is refused") {
    const Grid1D g = Grid1D::with_spacing(20.0, 0.2);
    auto op = heat_model_operator(g, -1.0, 1.0);
    op.requires_projection = true;
    try {
        apply_right_inverse(op, gaussian_squared(g));
        FAIL("expected a configuration error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Configuration);
    }
    op.has_projection = true;
    CHECK_NOTHROW(apply_right_inverse(op, gaussian_squared(g)));
}

TEST_CASE("naive norm sums grow with the p-series exponent") {
    const Grid1D wide(250.0, 2001);
    const double T = 1.0;
    SUBCASE("K_y") {
        const auto s = naive_sum_norms(ModelKernel::gaussian(-1.0), 1, T, 1024, wide);
        CHECK(std::abs(s.growth_exponent - 0.25) <= 0.05);
    }
    SUBCASE("K") {
        const auto s = naive_sum_norms(ModelKernel::gaussian(-1.0), 0, T, 1024, wide);
        CHECK(s.growth_exponent == doctest::Approx(0.75).epsilon(0.066));
    }
    SUBCASE("J_y") {
        const Grid1D xg(40.0, 801);
        const auto k = ModelKernel::excited(-1.0, [](double x) {
            const double c = std::cosh(0.5 * x);
            return -0.5 / (c * c);
        });
        const auto s = naive_sum_norms(k, 1, T, 1024, xg);
        CHECK(s.growth_exponent == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("cancelled and raw tails agree on finite intervals") {
    const Grid1D g = Grid1D::with_spacing(120.0, 0.1);
    const auto k = ModelKernel::gaussian(-1.0);
    for (double y : {0.0, 3.5}) {
        for (double upper : {4.0, 60.0}) {
            const auto raw = resummed_tail(k, 1.0, upper, TailMode::Raw, y, g);
            const auto canc = resummed_tail(k, 1.0, upper, TailMode::Cancelled, y, g);
            CHECK(l2_norm(g, 1, Vec(raw.column.values - canc.column.values)) <= 1e-6);
        }
    }
}

TEST_CASE("raw tail to infinity is refused") {
    const Grid1D g = Grid1D::with_spacing(20.0, 0.2);
    try {
        resummed_tail(ModelKernel::gaussian(-1.0), 1.0, std::numeric_limits<double>::infinity(), TailMode::Raw, 0.0,
                      g);
        FAIL("expected an argument error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Argument);
    }
}

TEST_CASE("cancelled tail to infinity obeys the T^{-1/4} bound") {
    const Grid1D g = Grid1D::with_spacing(80.0, 0.1);
    const auto k = ModelKernel::gaussian(-1.0);
    const Grid1D comoving(60.0, 4001);
    for (double T : {1.0, 4.0, 16.0}) {
        const auto tail = resummed_tail(k, T, std::numeric_limits<double>::infinity(), TailMode::Cancelled, 0.0, g);
        const double head = kernel_norm(k, 0, 0, NormKind::B1, T, comoving) / std::abs(k.a);
        // ∫_T^∞ c t^{-5/4} dt = 4c T^{-1/4}, with c read off at T
        const double c = kernel_norm(k, 2, 0, NormKind::B1, T, comoving) * std::pow(T, 1.25);
        CHECK(norm_b1(tail.column) <= head + 4.0 * c * std::pow(T, -0.25) / std::abs(k.a));
        CHECK(std::isfinite(tail.tail_estimate));
    }
}

TEST_CASE("J tail to infinity is bounded uniformly in y and grid-stable") {
    auto up = [](double x) {
        const double c = std::cosh(0.5 * x);
        return -0.5 / (c * c);
    };
    const auto k = ModelKernel::excited(-1.0, up);
    const Grid1D coarse = Grid1D::with_spacing(30.0, 0.2);
    const Grid1D fine = Grid1D::with_spacing(30.0, 0.1);
    double sup_c = 0.0, sup_f = 0.0;
    for (double y : {-20.0, -5.0, 0.0, 5.0, 20.0}) {
        const double inf = std::numeric_limits<double>::infinity();
        sup_c = std::max(sup_c, norm_b1(resummed_tail(k, 1.0, inf, TailMode::Cancelled, y, coarse).column));
        sup_f = std::max(sup_f, norm_b1(resummed_tail(k, 1.0, inf, TailMode::Cancelled, y, fine).column));
    }
    CHECK(std::isfinite(sup_f));
    CHECK(sup_f > 0.0);
    CHECK(std::abs(sup_c - sup_f) <= 0.02 * sup_f);
}

TEST_CASE("continuization remainders") {
    const auto k = ModelKernel::gaussian(-3.0);
    const std::vector<std::size_t> ns{8, 16, 32, 64};
    const Grid1D g = Grid1D::with_spacing(1800.0, 0.25);
    SUBCASE("trapezoid integrand decays like t^{-7/4}") {
        const auto r = continuization_error(k, 1.0, ns, ContinuizationOrder::Trapezoid, g);
        CHECK(r.integrand_exponent == doctest::Approx(-1.75).epsilon(0.05 / 1.75));
    }
    SUBCASE("simpson tail decays like (NT)^{-7/4}") {
        // at |a| = 3 the rule resolves the kernel only for t >> a²T², so use a = -1 and larger N
        const auto r = continuization_error(ModelKernel::gaussian(-1.0), 1.0, {16, 32, 64, 128},
                                            ContinuizationOrder::Simpson, Grid1D::with_spacing(1800.0, 0.5));
        CHECK(std::abs(r.tail_exponent + 1.75) <= 0.1);
    }
    SUBCASE("no correction gives no improvement under N -> 2N") {
        const auto r = continuization_error(k, 1.0, ns, ContinuizationOrder::None, g);
        for (std::size_t i = 0; i + 1 < r.theta_norms.size(); ++i)
            CHECK(r.theta_norms[i + 1] / r.theta_norms[i] == doctest::Approx(1.0).epsilon(0.1));
    }
}

TEST_CASE("continuization preconditions") {
    const Grid1D g = Grid1D::with_spacing(100.0, 0.5);
    const auto k = ModelKernel::gaussian(-1.0);
    CHECK_THROWS_AS(continuization_error(k, 1.0, {4}, ContinuizationOrder::Trapezoid, g), Error);
    CHECK_THROWS_AS(continuization_error(k, 1.0, {9}, ContinuizationOrder::Simpson, g), Error);
    try {
        continuization_error(k, 1.0, {64}, ContinuizationOrder::Trapezoid, g);
        FAIL("expected a domain error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DomainTooSmall);
    }
}

TEST_CASE("Lipschitz quotients in the parameter") {
    const Grid1D g = Grid1D::with_spacing(170.0, 0.2);
    const auto n = gaussian_squared(g);
    SUBCASE("constant family") {
        const auto rep = lipschitz_in_parameter([&](double) { return heat_model_operator(g, -1.0, 1.0); }, n, 0.0,
                                                {1e-2, 1e-3});
        for (double q : rep.b_quotients) CHECK(q == 0.0);
        for (double q : rep.kernel_quotients) CHECK(q == 0.0);
    }
    SUBCASE("speed a(eps) = -1 + eps") {
        const auto rep = lipschitz_in_parameter([&](double e) { return heat_model_operator(g, -1.0 + e, 1.0); }, n,
                                                0.0, {1e-2, 1e-3, 1e-4});
        const auto [lo, hi] = std::minmax_element(rep.b_quotients.begin(), rep.b_quotients.end());
        CHECK(*hi <= 1.2 * *lo);
        const auto [klo, khi] = std::minmax_element(rep.kernel_quotients.begin(), rep.kernel_quotients.end());
        CHECK(*khi <= 1.2 * *klo);
    }
    SUBCASE("period T(eps) = 1 + eps") {
        const auto rep = lipschitz_in_parameter([&](double e) { return heat_model_operator(g, -1.0, 1.0 + e); }, n,
                                                0.0, {1e-2, 1e-3, 1e-4});
        const auto [lo, hi] = std::minmax_element(rep.b_quotients.begin(), rep.b_quotients.end());
        CHECK(std::isfinite(*hi));
        CHECK(*hi <= 1.2 * *lo);
    }
}

}  // TEST_SUITE
