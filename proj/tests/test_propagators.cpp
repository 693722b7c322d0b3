#include "doctest.h"

#include "fcl/propagators.hpp"
#include "fcl/quadrature.hpp"

#include <cmath>
#include <random>

using namespace fcl;

namespace {

Section random_section(int n, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    Section u(n);
    for (int i = 0; i < n; ++i)
        u(i) = cplx(nd(g), nd(g));
    return u;
}

HermitianBundle shifted_trivial(const DiscreteManifold& m, double c)
{
    return build_bundle(m, 1, {}, {"zero", 0, 1.0, c, {}});
}

Section constant(int n, cplx c) { return Section::Constant(n, c); }

int mode_index(const SpectralOperator& op, double lambda)
{
    for (int k = 0; k < op.dim(); ++k)
        if (std::abs(op.eigenvalues()(k) - lambda) < 1e-9)
            return k;
    return -1;
}

} // namespace

TEST_CASE("time grid")
{
    TimeGrid g(1.0, 0.05);
    CHECK(g.steps() == 20);
    CHECK(g.index_of(0.35) == 7);
    CHECK_THROWS(g.index_of(0.351));
    CHECK_THROWS(TimeGrid(1.0, 0.3));
    CHECK_THROWS(TimeGrid(-1.0, 0.1));
}

TEST_CASE("gauss-legendre rules")
{
    CHECK(integrate([](double x) { return std::pow(x, 9); }, 0.0, 1.0, 5) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(integrate_composite([](double x) { return std::sin(x); }, 0.0, M_PI, 8, 16) ==
          doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("scalar wave kernels")
{
    CHECK(wave_G(0.7, 0.0) == 0.7);
    CHECK(std::abs(wave_G(M_PI, 1.0)) < 1e-15);
    CHECK(wave_G(1.0, -1.0) == doctest::Approx(std::sinh(1.0)).epsilon(1e-14));
    CHECK(wave_G(1.0, -1.0) == doctest::Approx(1.175201194));
    for (double l : {1e-14, 1e-6, 0.3, 2.0, 50.0})
        CHECK(wave_G(1.3, l) == doctest::Approx(std::sin(1.3 * std::sqrt(l)) / std::sqrt(l)).epsilon(1e-12));
    CHECK(wave_C(2.0, 0.25) == doctest::Approx(std::cos(1.0)).epsilon(1e-14));
    CHECK(wave_C(1.0, -4.0) == doctest::Approx(std::cosh(2.0)).epsilon(1e-14));
    // first antiderivative of sin(t)/1 is 1 - cos(t)
    CHECK(wave_G_antiderivative(1, 0.8, 1.0) == doctest::Approx(1.0 - std::cos(0.8)).epsilon(1e-13));
    CHECK(wave_G_antiderivative(0, -0.1, 1.0) == 0.0);
}

TEST_CASE("heat semigroup")
{
    SpectralOperator op(build_bundle(build_cycle(8, 8.0), 1, {}, {}));
    Section u = random_section(8, 3);
    CHECK((heat_apply(op, 0.0, u) - u).norm() < 1e-12);
    int k = mode_index(op, 2.0);
    REQUIRE(k >= 0);
    Section e = op.eigensections().col(k);
    CHECK((heat_apply(op, 1.0, e) - std::exp(-2.0) * e).norm() < 1e-12);
    CHECK((heat_apply(op, 0.3, heat_apply(op, 0.4, u)) - heat_apply(op, 0.7, u)).norm() < 1e-12 * u.norm());
    CHECK_THROWS(heat_apply(op, -0.1, u));
}

TEST_CASE("wave kernel on modes")
{
    auto m = build_cycle(8, 8.0);
    SpectralOperator zero(build_bundle(m, 1, {}, {}));
    Section c = constant(8, 1.0);
    CHECK((wave_kernel_apply(zero, 0.6, c) - 0.6 * c).norm() < 1e-14);
    SpectralOperator one(shifted_trivial(m, 1.0));
    CHECK(wave_kernel_apply(one, M_PI, c).norm() < 1e-14);
}

TEST_CASE("duhamel solve")
{
    auto m = build_cycle(8, 8.0);
    SpectralOperator op(build_bundle(m, 1, {}, {}));
    TimeGrid g(1.0, 0.1);
    TimeSection zero = TimeSection::Zero(8, g.size());
    CHECK(duhamel_solve(op, zero, g).cwiseAbs().maxCoeff() == 0.0);

    const cplx cc(0.7, -0.2);
    TimeSection f = sample_source([&](double) { return constant(8, cc); }, g);
    TimeSection w = duhamel_solve(op, f, g);
    for (int k = 0; k < g.size(); ++k) {
        const double t = g.t(k);
        CHECK((w.col(k) - constant(8, cc * (t * t / 2.0))).norm() < 1e-13);
    }
}

TEST_CASE("duhamel residual is second order")
{
    auto m = build_cycle(16, 6.0);
    SpectralOperator op(build_bundle(m, 2, {"random", 5, {}}, {"random_hermitian", 6, 1.0, 0.5, {}}));
    Section a = random_section(op.dim(), 1), b = random_section(op.dim(), 2);
    auto f = [&](double t) -> Section { return std::sin(2.0 * t) * a + t * t * b; };
    std::vector<double> res;
    for (double dt : {0.02, 0.01, 0.005}) {
        TimeGrid g(1.0, dt);
        TimeSection fs = sample_source(f, g);
        auto r = duhamel_residual(op, fs, duhamel_solve(op, fs, g), g);
        CHECK(r.max_residual <= r.bound);
        res.push_back(r.max_residual);
    }
    for (int i = 0; i + 1 < 3; ++i)
        CHECK(res[i] / res[i + 1] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("fractional inverse by spectral calculus")
{
    auto m = build_cycle(8, 8.0);
    SpectralOperator four(shifted_trivial(m, 4.0));
    Section c = constant(8, 1.0);
    CHECK((fractional_inverse_spectral(four, 0.5, c) - 0.5 * c).norm() < 1e-14);

    SpectralOperator op(build_bundle(m, 1, {}, {}));
    Section f(8);
    for (int x = 0; x < 8; ++x)
        f(x) = std::cos(2.0 * M_PI * x / 8);
    const double lam1 = 2.0 - 2.0 * std::cos(2.0 * M_PI / 8);
    for (double s : {0.2, 0.5, 0.8})
        CHECK((fractional_inverse_spectral(op, s, f) - std::pow(lam1, -s) * f).norm() < 1e-12 * f.norm());

    auto t = build_torus_grid(4, 4, 4.0, 4.0);
    SpectralOperator r(build_bundle(t, 2, {"random", 7, {}}, {"random_hermitian", 8, 1.0, 0.5, {}}));
    Section u = random_section(r.dim(), 4);
    for (double s : {0.1, 0.5, 0.9})
        CHECK((fractional_power(r, s, fractional_inverse_spectral(r, s, u)) - u).norm() < 1e-10 * u.norm());

    CHECK_THROWS(fractional_inverse_spectral(op, 0.5, c));
    CHECK_THROWS(fractional_inverse_spectral(r, 1.0, u));
}

TEST_CASE("fractional inverse by quadrature")
{
    QuadConfig q;
    CHECK(fractional_inverse_quadrature_scalar(1.0, 0.5, 1.0, 1.0, q) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fractional_inverse_quadrature_scalar(4.0, 0.5, 4.0, 4.0, q) == doctest::Approx(0.5).epsilon(1e-6));

    auto m = build_cycle(8, 8.0);
    SpectralOperator one(shifted_trivial(m, 1.0));
    Section c = constant(8, 1.0);
    auto res = fractional_inverse_quadrature(one, 0.5, c, q);
    CHECK(res.converged);
    CHECK((res.value - c).norm() < 1e-6 * c.norm());

    auto t = build_torus_grid(4, 4, 4.0, 4.0);
    SpectralOperator r(build_bundle(t, 2, {"random", 9, {}}, {"random_hermitian", 10, 1.0, 2.0, {}}));
    Section u = random_section(r.dim(), 5);
    for (double s : {0.3, 0.7}) {
        auto qr = fractional_inverse_quadrature(r, s, u, q);
        Section ref = fractional_inverse_spectral(r, s, u);
        CHECK((qr.value - ref).norm() < 1e-6 * ref.norm());
    }
}

TEST_CASE("heat-wave transmutation")
{
    for (double l : {0.0, 0.5, 3.0})
        for (double t : {0.1, 1.0})
            CHECK(gaussian_transmutation(t, l) == doctest::Approx(std::exp(-t * l)).epsilon(1e-8));

    auto t = build_torus_grid(4, 4, 4.0, 4.0);
    SpectralOperator r(build_bundle(t, 2, {"random", 11, {}}, {"random_hermitian", 12, 1.0, 0.5, {}}));
    auto rep = transmutation_residual(r, 0.5, random_section(r.dim(), 6));
    CHECK(rep.gaussian_residual < 1e-8);
    CHECK(rep.max_mode_error < 1e-8);
    CHECK(transmutation_residual(r, 0.5, Section::Zero(r.dim())).gaussian_residual == 0.0);
    CHECK_THROWS(transmutation_residual(r, 1e-9, random_section(r.dim(), 6)));
}

TEST_CASE("wave energy is conserved")
{
    auto t = build_torus_grid(4, 4, 4.0, 4.0);
    SpectralOperator r(build_bundle(t, 2, {"random", 13, {}}, {"random_hermitian", 14, 1.0, 0.5, {}}));
    Section u0 = random_section(r.dim(), 7), u1 = random_section(r.dim(), 8);
    const double e0 = wave_energy(r, u0, u1, 0.0);
    for (double s : {0.3, 1.1, 2.0})
        CHECK(std::abs(wave_energy(r, u0, u1, s) - e0) < 1e-9 * e0);
}
