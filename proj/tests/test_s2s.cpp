#include "doctest.h"

#include "fcl/quadrature.hpp"
#include "fcl/s2s.hpp"

#include <cmath>
#include <random>

using namespace fcl;

namespace {

HermitianBundle cycle_bundle(int n, int rank, std::uint64_t seed, double offset = 0.0)
{
    DiscreteManifold m = build_cycle(n, 2.0 * M_PI);
    ConnectionSpec c;
    c.kind = rank > 1 || seed ? "random" : "trivial";
    c.seed = seed;
    PotentialSpec p;
    p.kind = seed ? "random_hermitian" : "zero";
    p.seed = seed + 1;
    p.scale = 0.5;
    p.offset = offset;
    return build_bundle(m, rank, c, p);
}

Eigen::MatrixXcd random_nodal(int rows, int cols, int lo, int hi, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(rows, cols);
    for (int n = lo; n <= hi; ++n)
        for (int i = 0; i < rows; ++i)
            f(i, n) = cplx(nd(g), nd(g));
    return f;
}

// Modal coefficients of w^f(T) for a piecewise-linear source, by fine Gauss-Legendre per interval.
Eigen::VectorXcd modal_state(const SpectralOperator& op, const Eigen::MatrixXcd& f_full, double dt, double T)
{
    const int nT = static_cast<int>(std::llround(T / dt));
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(op.dim());
    Eigen::MatrixXcd fm(op.dim(), f_full.cols());
    for (Eigen::Index k = 0; k < f_full.cols(); ++k)
        fm.col(k) = op.to_modes(f_full.col(k));
    const GaussRule& gl = gauss_legendre(40);
    for (int k = 0; k < nT; ++k)
        for (int q = 0; q < 40; ++q) {
            double x = 0.5 * (gl.x[q] + 1.0), w = 0.5 * gl.w[q] * dt;
            double t = (k + x) * dt;
            for (int i = 0; i < op.dim(); ++i) {
                double l = op.eigenvalues()(i);
                double g = std::abs(l) < 1e-14 ? (T - t) : std::sin((T - t) * std::sqrt(l)) / std::sqrt(l);
                c(i) += w * g * ((1 - x) * fm(i, k) + x * fm(i, k + 1));
            }
        }
    return c;
}

} // namespace

TEST_CASE("wave map response matches the Duhamel solver on U")
{
    auto b = cycle_bundle(32, 2, 7, 0.3);
    SpectralOperator op(b);
    Region u = arc_region(32, 3, 10);
    TimeGrid grid(2.0, 0.05);
    auto d = wave_map_assemble(op, u, grid);
    Eigen::MatrixXcd fu = random_nodal(d.block_dim(), grid.size(), 1, 30, 11);
    Eigen::MatrixXcd full = extend_from_region(fu, u, 2, 32);
    Eigen::MatrixXcd w = duhamel_solve(op, full, grid);
    Eigen::MatrixXcd wu = restrict_to_region(w, u, 2, 1e300);
    Eigen::MatrixXcd wm = wave_map_apply(d, fu);
    CHECK((wm - wu).cwiseAbs().maxCoeff() / wu.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("samples are Hermitian and start at zero")
{
    auto b = cycle_bundle(16, 2, 3, 1.0);
    SpectralOperator op(b);
    auto d = wave_map_assemble(op, arc_region(16, 0, 5), TimeGrid(1.0, 0.1));
    CHECK(d.samples[0].cwiseAbs().maxCoeff() < 1e-13);
    for (const auto& k : d.samples)
        CHECK((k - k.adjoint()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("source outside U is rejected")
{
    Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(8, 3);
    f(7, 1) = 1.0;
    CHECK_THROWS_AS(restrict_to_region(f, Region({0, 1}), 2), std::invalid_argument);
}

TEST_CASE("time average J")
{
    SUBCASE("constant one gives T - t")
    {
        for (double t : {0.0, 0.3, 1.0, 1.7, 2.0})
            CHECK(time_average_J([](double) { return 1.0; }, t, 1.0) == doctest::Approx(1.0 - t).epsilon(1e-13));
    }
    SUBCASE("nodal version on linear data")
    {
        Eigen::VectorXd s(21);
        for (int k = 0; k <= 20; ++k)
            s(k) = 0.1 * k;
        Eigen::VectorXd J = time_average_J(s, 0.1, 1.0);
        for (int k = 0; k <= 20; ++k) {
            double t = 0.1 * k;
            double exact = 0.25 * ((2.0 - t) * (2.0 - t) - t * t);
            CHECK(J(k) == doctest::Approx(exact).epsilon(1e-12));
        }
    }
    SUBCASE("outside the window throws")
    {
        CHECK_THROWS(time_average_J([](double) { return 1.0; }, 2.5, 1.0));
    }
}

TEST_CASE("grid polynomial correlation is exact for hats")
{
    const double dt = 0.1;
    auto a = gridpoly::hat(3, 10), b = gridpoly::hat(5, 10);
    auto r = gridpoly::correlate(a, b, dt, -10, 10);
    for (double tau : {-0.25, -0.2, -0.13, -0.1, 0.0, 0.05})
        CHECK(r.eval(tau, dt) ==
              doctest::Approx(integrate_composite(
                                  [&](double t) { return a.eval(t, dt) * b.eval(t - tau, dt); }, 0.0, 1.0, 100, 8))
                  .epsilon(1e-12));
}

TEST_CASE("Blago Gram reproduces state inner products")
{
    const int n = 24, rank = 2;
    auto b = cycle_bundle(n, rank, 5, 0.2);
    SpectralOperator op(b);
    Region u = arc_region(n, 0, 7);
    const double T = 1.0, dt = 0.05;
    auto d = wave_map_assemble(op, u, TimeGrid(2.0 * T, dt));
    BlagoEngine eng(d, T);
    CHECK(eng.hermitian_defect() < 1e-8);

    const int N = 40;
    for (auto [lo, hi] : {std::pair{1, 19}, std::pair{1, 39}, std::pair{12, 30}}) {
        Eigen::MatrixXcd f = random_nodal(d.block_dim(), N + 1, lo, hi, 100 + lo + hi);
        Eigen::MatrixXcd h = random_nodal(d.block_dim(), N + 1, lo, hi, 200 + lo + hi);
        cplx ip = eng.inner(f, h);
        Eigen::VectorXcd cf = modal_state(op, extend_from_region(f, u, rank, n), dt, T);
        Eigen::VectorXcd ch = modal_state(op, extend_from_region(h, u, rank, n), dt, T);
        cplx ref = cf.dot(ch);
        CHECK(std::abs(ip - ref) / (cf.norm() * ch.norm()) < 1e-8);
    }
}

TEST_CASE("fractional map on all of M is the full inverse power")
{
    auto b = cycle_bundle(12, 2, 9, 1.0);
    SpectralOperator op(b);
    Region all = full_region(b.manifold());
    auto d = frac_map_assemble(op, all, 0.4);
    CHECK((d.kernel - d.kernel.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    std::mt19937_64 g(1);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd f(op.dim());
    for (int i = 0; i < op.dim(); ++i)
        f(i) = cplx(nd(g), nd(g));
    Eigen::VectorXcd ref = op.function_matrix([](double l) { return std::pow(l, -0.4); }) * f;
    CHECK((frac_map_apply(d, f) - ref).norm() < 1e-11 * ref.norm());

    Region u = arc_region(12, 2, 4);
    auto du = frac_map_assemble(op, u, 0.4);
    Eigen::VectorXcd fu = f.head(8);
    Eigen::VectorXcd full = extend_from_region(fu, u, 2, 12);
    Eigen::VectorXcd want = restrict_to_region(fractional_inverse_spectral(op, 0.4, full), u, 2, 1e300);
    CHECK((frac_map_apply(du, fu) - want).norm() < 1e-11 * want.norm());
}

TEST_CASE("wave map impulse grows like t and vanishes for zero sources")
{
    auto b = cycle_bundle(16, 1, 0);
    SpectralOperator op(b);
    Region u = arc_region(16, 0, 4);
    auto d = wave_map_assemble(op, u, TimeGrid(0.4, 0.001));
    for (int k : {1, 2, 5})
        CHECK(d.samples[k](1, 1).real() / (k * d.dt) == doctest::Approx(1.0 / d.volumes[1]).epsilon(1e-3));
    Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(d.block_dim(), d.steps + 1);
    CHECK(wave_map_apply(d, zero).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Blago inner products: norms, linearity, Gram structure and locality")
{
    const int n = 64, rank = 1;
    auto b = cycle_bundle(n, rank, 0);
    SpectralOperator op(b);
    Region u = arc_region(n, 0, 31);
    const double T = 0.5, dt = 0.025;
    auto d = wave_map_assemble(op, u, TimeGrid(2.0 * T, dt));
    const int N = 40, nT = 20;
    Eigen::MatrixXcd f = random_nodal(d.block_dim(), N + 1, 1, nT - 1, 5);
    Eigen::MatrixXcd h = random_nodal(d.block_dim(), N + 1, 1, nT - 1, 6);

    cplx ff = blago_inner(d, f, f, T);
    Eigen::VectorXcd cf = modal_state(op, extend_from_region(f, u, rank, n), dt, T);
    CHECK(std::abs(ff.imag()) < 1e-10 * ff.real());
    CHECK(ff.real() >= 0.0);
    CHECK(ff.real() == doctest::Approx(cf.squaredNorm()).epsilon(1e-8));

    const cplx a(0.3, -1.2);
    cplx lhs = blago_inner(d, f, a * h + f, T);
    cplx rhs = a * blago_inner(d, f, h, T) + ff;
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));

    auto g1 = gram_matrix(d, {f}, T);
    CHECK(g1.rows() == 1);
    CHECK(std::abs(g1(0, 0) - ff) < 1e-10 * ff.real());
    auto g2 = gram_matrix(d, {f, f}, T);
    CHECK((g2.array() - g2(0, 0)).abs().maxCoeff() < 1e-10 * ff.real());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g2);
    CHECK(std::abs(es.eigenvalues()(0)) < 1e-10 * ff.real());

    // point sources 26 cells apart, active only during the first quarter of [0, T]
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(d.block_dim(), N + 1), q = p;
    for (int k = 1; k <= 5; ++k) {
        p(u.index_of(2), k) = 1.0;
        q(u.index_of(28), k) = 1.0;
    }
    const double eta = 0.1;
    cplx pq = blago_inner(d, p, q, T);
    double np = std::sqrt(blago_inner(d, p, p, T).real()), nq = std::sqrt(blago_inner(d, q, q, T).real());
    Eigen::VectorXcd sp = modal_state(op, extend_from_region(p, u, rank, n), dt, T);
    Eigen::VectorXcd sq = modal_state(op, extend_from_region(q, u, rank, n), dt, T);
    CHECK(std::abs(pq - sp.dot(sq)) < 1e-8 * np * nq);
    CHECK(std::abs(pq) < eta * np * nq);
}
