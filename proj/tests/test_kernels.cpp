#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hopfshock/error.hpp"
#include "hopfshock/kernels.hpp"

using namespace hopfshock;

namespace {
const double kPi = std::numbers::pi;
double sech2(double x) {
    const double c = std::cosh(x);
    return 1.0 / (c * c);
}
}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("errfn limits and midpoint") {
    CHECK(errfn(-10.0) <= 1e-12);
    CHECK(errfn(0.0) == doctest::Approx(std::sqrt(kPi) / (4 * kPi)).epsilon(1e-14));
    CHECK(errfn(0.0) == doctest::Approx(0.1410473959).epsilon(1e-9));
    CHECK(errfn(10.0) == doctest::Approx(0.2820947918).epsilon(1e-9));
    double prev = errfn(-8.0);
    for (double z = -8.0; z <= 8.0; z += 0.01) {
        CHECK(errfn(z) >= prev);
        prev = errfn(z);
    }
}

TEST_CASE("K at its moving peak") {
    const auto k = ModelKernel::gaussian(-1.0);
    for (double t : {0.3, 1.0, 7.0, 120.0}) {
        const double y = 0.7;
        const double x = y + k.a * t;
        CHECK(kernel_derivative(k, 0, 0, x, t, y) == doctest::Approx(1.0 / std::sqrt(t)).epsilon(1e-14));
        CHECK(std::abs(kernel_derivative(k, 1, 0, x, t, y)) <= 1e-15);
    }
}

TEST_CASE("closed-form derivatives agree with finite differences") {
    const auto k = ModelKernel::gaussian(-1.0);
    // spec example: α=2, β=0 at (0,1,0)
    const double h = 1e-3;
    const auto K = [&](double y) { return kernel_derivative(k, 0, 0, 0.0, 1.0, y); };
    const double fd = (K(h) - 2 * K(0) + K(-h)) / (h * h);
    CHECK(kernel_derivative(k, 2, 0, 0.0, 1.0, 0.0) == doctest::Approx(fd).epsilon(1e-6));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(-4, 4), ut(0.5, 4);
    const auto j = ModelKernel::excited(1.3, [](double x) { return -0.5 * sech2(x / 2); });
    for (const auto& kern : {k, ModelKernel::gaussian(2.0), j}) {
        for (int trial = 0; trial < 10; ++trial) {
            const double x = ux(rng), y = ux(rng), t = ut(rng);
            for (int a = 0; a <= kMaxAlpha; ++a)
                for (int b = 0; b <= kMaxBeta; ++b) {
                    const double d = 1e-5;
                    if (a > 0) {
                        const double fdy = (kernel_derivative(kern, a - 1, b, x, t, y + d) -
                                            kernel_derivative(kern, a - 1, b, x, t, y - d)) /
                                           (2 * d);
                        const double v = kernel_derivative(kern, a, b, x, t, y);
                        CHECK(std::abs(v - fdy) <= 1e-5 * (1.0 + std::abs(v)));
                    }
                    if (b > 0) {
                        const double fdt = (kernel_derivative(kern, a, b - 1, x, t + d, y) -
                                            kernel_derivative(kern, a, b - 1, x, t - d, y)) /
                                           (2 * d);
                        const double v = kernel_derivative(kern, a, b, x, t, y);
                        CHECK(std::abs(v - fdt) <= 1e-5 * (1.0 + std::abs(v)));
                    }
                }
        }
    }
}

TEST_CASE("kernel derivative preconditions") {
    const auto k = ModelKernel::gaussian(-1.0);
    try {
        kernel_derivative(k, 0, 0, 0.0, 0.0, 0.0);
        FAIL("expected a domain error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Domain);
    }
    try {
        kernel_derivative(k, 5, 0, 0.0, 1.0, 0.0);
        FAIL("expected an argument error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Argument);
    }
    CHECK_THROWS_AS(ModelKernel::gaussian(0.0), Error);
}

TEST_CASE("cancellation identity holds pointwise") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(-30, 30), ult(std::log(0.5), std::log(100.0));
    for (double a : {-1.0, -3.0, 2.0}) {
        const auto k = ModelKernel::gaussian(a);
        for (int i = 0; i < 2000; ++i) {
            const double x = ux(rng), y = ux(rng), t = std::exp(ult(rng));
            const double lhs = kernel_derivative(k, 1, 0, x, t, y);
            const double rhs = (kernel_derivative(k, 0, 1, x, t, y) - kernel_derivative(k, 2, 0, x, t, y)) / a;
            CHECK(std::abs(lhs - rhs) <= 1e-10);
        }
    }
}

TEST_CASE("scalar Green data reduces to the normalized moving heat kernel") {
    const auto g = GreensModel::scalar(-1.0, -1.0);
    const auto k = ModelKernel::gaussian(-1.0);
    for (double t : {1.0, 2.5, 10.0})
        for (double x : {-8.0, -2.0, 0.0, 1.5})
            for (double y : {-3.0, -0.5, 0.0}) {
                const double v = eval_model_green(g, x, t, y)(0, 0);
                const double ref = std::exp(-(x - y + t) * (x - y + t) / (4 * t)) / std::sqrt(4 * kPi * t);
                CHECK(v == doctest::Approx(ref).epsilon(1e-12));
                CHECK(v == doctest::Approx(kernel_derivative(k, 0, 0, x, t, y) / std::sqrt(4 * kPi)).epsilon(1e-12));
            }
}

TEST_CASE("excited-only data is the errfn window times ū'") {
    auto g = GreensModel::scalar(1.0, -1.0);
    g.excited_minus = Vec::Ones(1);
    g.include_scattering = false;
    g.profile_derivative = [](double x) { return Vec::Constant(1, -0.5 * sech2(x / 2)); };
    for (double t : {0.25, 1.0, 9.0})
        for (double x : {-2.0, 0.0, 3.0})
            for (double y : {-6.0, -1.0, 0.0}) {
                const double up = -0.5 * sech2(x / 2);
                const double ref = up * (errfn((y + t) / std::sqrt(4 * t)) - errfn((y - t) / std::sqrt(4 * t)));
                CHECK(eval_model_green(g, x, t, y)(0, 0) == doctest::Approx(ref).epsilon(1e-13));
            }
}

TEST_CASE("scattered paths follow the substituted formulas") {
    // incoming a_k^- = 1 transmitted into a_j^+ = 2
    GreensModel g = GreensModel::scalar(1.0, 2.0);
    g.transmitted_minus = Mat::Ones(1, 1);
    g.profile_derivative = [](double) { return Vec::Zero(1); };
    const double t = 40.0, y = -10.0;
    CHECK(scattered_center(2.0, 1.0, y, t) == doctest::Approx(2.0 * (t - 10.0)));
    CHECK(scattered_rate(2.0, 1.0, 5.0, y, t) == doctest::Approx(5.0 / 80.0 + 10.0 / 40.0 * 4.0));
    // direct substitution of the transmitted term, evaluated independently
    auto direct = [&](double x) {
        const double z = 2.0 * (t - std::abs(y) / 1.0);
        const double b = std::max(x, 0.0) / (2.0 * t) + std::abs(y) / t * 4.0;
        const double w = std::exp(x) / (std::exp(x) + std::exp(-x));
        return std::exp(-(x - z) * (x - z) / (4 * b * t)) / std::sqrt(4 * kPi * b * t) * w;
    };
    const double h = 0.01;
    double arg_model = 0, arg_direct = 0, best_m = -1, best_d = -1;
    for (double x = 20.0; x <= 100.0; x += h) {
        const double m = eval_model_green(g, x, t, y)(0, 0) -
                         std::exp(-(x - y - t) * (x - y - t) / (4 * t)) / std::sqrt(4 * kPi * t) /
                             (1 + std::exp(2 * x));
        const double d = direct(x);
        CHECK(m == doctest::Approx(d).epsilon(1e-10));
        if (m > best_m) best_m = m, arg_model = x;
        if (d > best_d) best_d = d, arg_direct = x;
    }
    CHECK(std::abs(arg_model - arg_direct) <= h);
    // the maximum sits at the scattered path up to an O(1) drift from the x-dependent rate
    CHECK(std::abs(arg_model - scattered_center(2.0, 1.0, y, t)) <= 1.0);
}

TEST_CASE("time cutoff is smooth and switches on between 1/2 and 1") {
    CHECK(cutoff_t(0.4) == 0.0);
    CHECK(cutoff_t(1.2) == 1.0);
    CHECK(cutoff_t(0.75) == doctest::Approx(0.5));
}

TEST_CASE("transverse application") {
    const Grid1D grid(30.0, 601);
    const auto k = ModelKernel::gaussian(-1.0);
    const double T = 2.0;
    SUBCASE("delta reproduces a kernel column") {
        GridFunction f(grid);
        const std::size_t j0 = grid.center_index() + 20;
        f.at(j0) = 1.0 / grid.spacing();
        const auto s = apply_transverse(k, f, T);
        for (std::size_t i = 0; i < grid.size(); i += 7)
            CHECK(s.at(i) == doctest::Approx(kernel_derivative(k, 0, 0, grid.x(i), T, grid.x(j0))).epsilon(1e-12));
    }
    SUBCASE("Gaussian mass identity") {
        const auto f = GridFunction::sample(grid, [](double x) { return std::exp(-x * x); });
        const auto s = apply_transverse(k, f, T);
        CHECK(integral(s) == doctest::Approx(std::sqrt(4 * kPi) * integral(f)).epsilon(1e-8));
    }
    SUBCASE("zero in, zero out") {
        const GridFunction f(grid);
        CHECK(apply_transverse(k, f, T).values.norm() == 0.0);
        const auto g = GreensModel::scalar(-1.0, -1.0);
        CHECK(apply_transverse(g, f, T).values.norm() == 0.0);
    }
    SUBCASE("Green model and kernel agree on scalar data") {
        const auto f = GridFunction::sample(grid, [](double x) { return x < 0 ? std::exp(-x * x) : 0.0; });
        const auto s1 = apply_transverse(GreensModel::scalar(-1.0, -1.0), f, T);
        const auto s2 = apply_transverse(k, f, T);
        CHECK((s1.values - s2.values / std::sqrt(4 * kPi)).norm() <= 1e-12);
    }
}

TEST_CASE("norm laws of K") {
    const auto k = ModelKernel::gaussian(-1.0);
    const Grid1D grid(250.0, 2001);
    const auto times = logspace(1.0, 1000.0, 13);
    const auto l00 = fit_norm_law(k, 0, 0, NormKind::B1, times, grid);
    CHECK(l00.exponent == doctest::Approx(-0.25).epsilon(0.03 / 0.25));
    CHECK(l00.constant == doctest::Approx(std::pow(2 * kPi, 0.25)).epsilon(0.01));
    const auto l10 = fit_norm_law(k, 1, 0, NormKind::B1, times, grid);
    CHECK(std::abs(l10.exponent + 0.75) <= 0.03);
    CHECK(l10.norms.front() == doctest::Approx(std::pow(2 * kPi, 0.25) / 2).epsilon(1e-6));
    const Grid1D small(40.0, 401);
    try {
        fit_norm_law(k, 0, 0, NormKind::B1, times, small);
        FAIL("expected a domain-too-small error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DomainTooSmall);
    }
}

TEST_CASE("time-derivative norm laws of K") {
    // ∂_t = -a∂_ξ + ∂_ξ² in the comoving frame: the transport part sets the rate and
    // the heat part is a relative T^{-1} correction, small over [1, 1000] once |a| = 3
    const auto k = ModelKernel::gaussian(-3.0);
    const Grid1D grid(250.0, 2001);
    const auto times = logspace(1.0, 1000.0, 13);
    for (auto [alpha, beta] : {std::pair{0, 1}, std::pair{1, 1}, std::pair{1, 2}}) {
        const auto law = fit_norm_law(k, alpha, beta, NormKind::B1, times, grid);
        CHECK(std::abs(law.exponent + (1.0 + 2 * alpha + 2 * beta) / 4.0) <= 0.03);
    }
}

TEST_CASE("norm law of J_y") {
    const auto j = ModelKernel::excited(-1.0, [](double x) { return -0.5 * sech2(x / 2); });
    const Grid1D grid(40.0, 801);
    const auto law = fit_norm_law(j, 1, 0, NormKind::B1, logspace(1.0, 1000.0, 13), grid);
    CHECK(std::abs(law.exponent + 0.5) <= 0.05);
}

TEST_CASE("weighted pointwise bound grows monotonically in T") {
    const auto k = ModelKernel::gaussian(-1.0);
    double prev = 0.0;
    for (double T : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        double m = 0.0;
        for (double x = -60; x <= 60; x += 0.1)
            for (double y = -20; y <= 20; y += 0.5) m = std::max(m, (1 + std::abs(x - y)) * kernel_derivative(k, 0, 0, x, T, y));
        CHECK(std::isfinite(m));
        CHECK(m >= prev);
        prev = m;
    }
}

TEST_CASE("convolution weight bound has one grid constant") {
    double worst = 0.0;
    for (double L : {50.0, 100.0}) {
        const Grid1D g(L, static_cast<std::size_t>(20 * L) + 1);
        const double h = g.spacing();
        double c = 0.0;
        for (std::size_t i = 0; i < g.size(); i += 5) {
            const double x = g.x(i);
            double s = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double y = g.x(j);
                s += h / ((1 + std::abs(x - y)) * (1 + std::abs(y)) * (1 + std::abs(y)));
            }
            c = std::max(c, s * (1 + std::abs(x)));
        }
        if (worst > 0) CHECK(c == doctest::Approx(worst).epsilon(0.05));
        worst = std::max(worst, c);
    }
    CHECK(worst < 10.0);
}

TEST_CASE("Green model from JSON") {
    const auto g = greens_model_from_json(R"({"dim":1,"speeds_minus":[-1],"speeds_plus":[-1],
        "right_minus":[[1]],"left_minus":[[1]],"right_plus":[[1]],"left_plus":[[1]]})");
    CHECK(eval_model_green(g, 0.0, 1.0, 0.0)(0, 0) == doctest::Approx(std::exp(-0.25) / std::sqrt(4 * kPi)));
    CHECK_THROWS_AS(greens_model_from_json(R"({"dim":1,"speeds_minus":[0],"right_minus":[[1]],"left_minus":[[1]]})"), Error);
}

}
