#include <doctest.h>

#include <cmath>

#include "hopfshock/error.hpp"
#include "hopfshock/profiles.hpp"

using namespace hopfshock;

TEST_SUITE("profiles") {

TEST_CASE("Burgers profile matches -tanh(x/2)") {
    const Grid1D g(20.0, 2001);
    const auto p = solve_profile(burgers(), 0.0, g);
    double err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(p.values.at(i) + std::tanh(g.x(i) / 2)));
    CHECK(err <= 1e-6);
    CHECK(p.ode_residual <= 1e-8);
    CHECK(decay_rate(p) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("zero-strength shock is constant and has no tail") {
    const Grid1D g(10.0, 101);
    const auto p = solve_profile(burgers(0.5, 0.5), 0.0, g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(p.values.at(i) == 0.5);
    CHECK_THROWS_AS(decay_rate(p), Error);
}

TEST_CASE("Lax classification of Burgers") {
    const auto r = classify_lax(burgers(), 0.0);
    CHECK(r.lax_ok);
    CHECK(r.eig_minus[0] == doctest::Approx(1.0));
    CHECK(r.eig_plus[0] == doctest::Approx(-1.0));
    CHECK(r.dim_stable_plus == 1);
    CHECK(r.dim_unstable_minus == 1);
    CHECK(r.family == 1);
    const auto c = classify_lax(burgers(1.0, 0.0), 0.0);
    CHECK_FALSE(c.lax_ok);
    CHECK(c.reason.find("zero") != std::string::npos);
}

TEST_CASE("characteristic endstate is rejected by the profile solver") {
    const Grid1D g(10.0, 101);
    try {
        solve_profile(burgers(1.0, 0.0), 0.0, g);
        FAIL("expected a spectral-assumption error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SpectralAssumption);
    }
}

TEST_CASE("two-component exemplar is a Lax 1-shock") {
    const auto f = exemplar_2x2();
    const auto r = classify_lax(f, 0.0);
    CHECK(r.lax_ok);
    CHECK(r.dim_stable_plus == 1);
    CHECK(r.dim_unstable_minus == 2);
    CHECK(r.dim_stable_plus + r.dim_unstable_minus == 3);
    CHECK(r.rh_residual <= 1e-10);
}

TEST_CASE("exemplar profile decay rate matches the slowest endstate eigenvalue") {
    const auto f = exemplar_2x2();
    const Grid1D g(30.0, 601);
    const auto p = solve_profile(f, 0.0, g);
    CHECK(p.ode_residual <= 1e-8);
    const auto r = classify_lax(f, 0.0);
    double expected = 1e300;
    for (Eigen::Index i = 0; i < r.eig_minus.size(); ++i) expected = std::min(expected, std::abs(r.eig_minus[i]));
    for (Eigen::Index i = 0; i < r.eig_plus.size(); ++i)
        if (r.eig_plus[i] < 0) expected = std::min(expected, std::abs(r.eig_plus[i]));
    CHECK(decay_rate(p) == doctest::Approx(expected).epsilon(0.05));
    CHECK(std::abs(p.values.at(g.center_index(), 0)) <= 1e-9);
}

TEST_CASE("collocation fallback reproduces the Burgers profile") {
    const Grid1D g(15.0, 1501);
    ProfileOptions opt;
    opt.force_collocation = true;
    const auto p = solve_profile(burgers(), 0.0, g, opt);
    double err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(p.values.at(i) + std::tanh(g.x(i) / 2)));
    CHECK(err <= 1e-4);
}

TEST_CASE("phase shift translates the profile") {
    const Grid1D g(20.0, 2001);
    ProfileOptions opt;
    const double delta = 0.3;
    opt.phase = -std::tanh(delta / 2);  // value of -tanh(x/2) at x = delta
    const auto p0 = solve_profile(burgers(), 0.0, g);
    const auto p1 = solve_profile(burgers(), 0.0, g, opt);
    // p1(x) = p0(x + delta); delta is a whole number of cells here
    const auto shift = static_cast<std::size_t>(std::lround(delta / g.spacing()));
    double err = 0.0;
    for (std::size_t i = 0; i + shift < g.size(); ++i)
        err = std::max(err, std::abs(p1.values.at(i) - p0.values.at(i + shift)));
    CHECK(err <= 1e-6);
}

TEST_CASE("Rankine-Hugoniot holds across the parameter range") {
    for (const auto& f : {burgers(), burgers_shifted(), exemplar_2x2()})
        for (double e = f.eps_min; e <= f.eps_max + 1e-12; e += 0.05) CHECK(f.rh_residual(e) <= 1e-10);
}

TEST_CASE("profile JSON round trip") {
    const Grid1D g(10.0, 101);
    const auto p = solve_profile(burgers(), 0.0, g);
    const auto q = profile_from_json(profile_to_json(p));
    CHECK(q.grid == p.grid);
    CHECK((q.values.values - p.values.values).norm() == 0.0);
    CHECK(q.flux_name == "burgers");
    CHECK_THROWS_AS(profile_from_json("{\"schema\": 99}"), Error);
}

}
