#include "doctest.h"

#include "fcl/bundle.hpp"

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

double max_dev(const HermitianBundle& a, const HermitianBundle& b)
{
    double d = 0.0;
    for (std::size_t e = 0; e < a.transports().size(); ++e)
        d = std::max(d, (a.transports()[e] - b.transports()[e]).cwiseAbs().maxCoeff());
    for (std::size_t x = 0; x < a.potentials().size(); ++x)
        d = std::max(d, (a.potentials()[x] - b.potentials()[x]).cwiseAbs().maxCoeff());
    return d;
}

HermitianBundle random_bundle(const DiscreteManifold& m, int r, std::uint64_t seed)
{
    return build_bundle(m, r, {"random", seed, {}}, {"random_hermitian", seed + 1, 0.7, 0.0, {}});
}

} // namespace

TEST_CASE("trivial bundle")
{
    auto b = build_bundle(build_cycle(8, 8.0), 1, {}, {});
    for (const auto& u : b.transports())
        CHECK(u(0, 0) == cplx(1.0, 0.0));
    for (const auto& a : b.potentials())
        CHECK(a(0, 0) == cplx(0.0, 0.0));
}

TEST_CASE("explicit phases must be unitary")
{
    auto m = build_cycle(8, 8.0);
    std::vector<Eigen::MatrixXcd> ok, bad;
    for (int e = 0; e < m.num_edges(); ++e) {
        ok.push_back(Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0, 0.3 * e)));
        bad.push_back(Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0 + 0.01 * (e == 3), 0.3 * e)));
    }
    CHECK_NOTHROW(build_bundle(m, 1, {"explicit", 0, ok}, {}));
    CHECK_THROWS_AS(build_bundle(m, 1, {"explicit", 0, bad}, {}), std::invalid_argument);
}

TEST_CASE("random bundle is deterministic and satisfies its invariants")
{
    auto m = build_torus_grid(4, 4, 4.0, 4.0);
    auto b1 = random_bundle(m, 2, 7), b2 = random_bundle(m, 2, 7);
    CHECK(max_dev(b1, b2) == 0.0);
    for (const auto& e : m.edges()) {
        Eigen::MatrixXcd u = b1.transport(e.a, e.b);
        CHECK(unitarity_defect(u) <= 1e-12);
        CHECK((b1.transport(e.b, e.a) * u - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    for (const auto& a : b1.potentials())
        CHECK(hermiticity_defect(a) == 0.0);
}

TEST_CASE("l2 inner product")
{
    auto m = build_cycle(16, 3.0);
    auto b = random_bundle(m, 2, 3);
    Section u = Section::Zero(b.dim());
    u(5 * 2 + 1) = 1.0;
    CHECK(l2_inner(b, u, u).real() == doctest::Approx(m.volume(5)));
    Section v = Section::Zero(b.dim());
    v(5 * 2) = 1.0;
    CHECK(std::abs(l2_inner(b, u, v)) == 0.0);
    Section p = random_section(b.dim(), 1), q = random_section(b.dim(), 2);
    CHECK(std::abs(l2_inner(b, p, q) - std::conj(l2_inner(b, q, p))) < 1e-12);
}

TEST_CASE("gauge action")
{
    auto m = build_torus_grid(4, 4, 4.0, 4.0);
    auto b = random_bundle(m, 2, 9);
    const int n = m.num_vertices();
    CHECK(max_dev(apply_gauge(b, identity_gauge(n, 2)), b) < 1e-14);

    auto b1 = build_bundle(m, 1, {"random", 4, {}}, {"random_hermitian", 5, 1.0, 0.0, {}});
    GaugeTransform phase;
    for (int x = 0; x < n; ++x)
        phase.S.push_back(Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0, 0.77)));
    CHECK(max_dev(apply_gauge(b1, phase), b1) < 1e-14);

    auto g1 = random_gauge(n, 2, 21), g2 = random_gauge(n, 2, 22);
    CHECK(max_dev(apply_gauge(apply_gauge(b, g1), inverse(g1)), b) < 1e-12);
    CHECK(max_dev(apply_gauge(apply_gauge(b, g1), g2), apply_gauge(b, compose(g1, g2))) < 1e-12);
}

TEST_CASE("pullback along a structure isomorphism")
{
    auto m = build_torus_grid(4, 4, 4.0, 4.0);
    auto b = random_bundle(m, 2, 13);
    const int n = m.num_vertices();

    StructureIso id;
    id.psi.resize(n);
    for (int x = 0; x < n; ++x) {
        id.psi[x] = x;
        id.fiber.push_back(Eigen::MatrixXcd::Identity(2, 2));
    }
    Section u = random_section(b.dim(), 4);
    CHECK((pullback_section(id, u, 2) - u).norm() == 0.0);

    StructureIso perm = id;
    std::reverse(perm.psi.begin(), perm.psi.end());
    Section pu = pullback_section(perm, u, 2);
    for (int x = 0; x < n; ++x)
        CHECK((pu.segment(2 * x, 2) - u.segment(2 * perm.psi[x], 2)).norm() == 0.0);

    auto iso = random_structure_iso(n, 2, 31);
    auto m2 = relabel_manifold(m, iso.psi);
    CHECK(iso_is_isometry(iso, m2, m));
    auto b2 = pullback_bundle(iso, b, m2);
    Section v = random_section(b.dim(), 5);
    CHECK(std::abs(l2_inner(b2, pullback_section(iso, u, 2), pullback_section(iso, v, 2)) - l2_inner(b, u, v)) <
          1e-12);
    CHECK((pullback_matrix(iso, 2) * u - pullback_section(iso, u, 2)).norm() < 1e-14);

    // invariants transported by psi
    auto loops = torus_loops(4, 4);
    std::vector<int> inv(n);
    for (int x = 0; x < n; ++x)
        inv[iso.psi[x]] = x;
    for (const auto& l : loops) {
        std::vector<int> l2;
        for (int v1 : l)
            l2.push_back(inv[v1]);
        CHECK(std::abs(holonomy_trace(b2, l2) - holonomy_trace(b, l)) < 1e-10);
    }
    for (int x = 0; x < n; ++x) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> e1(b.potential(iso.psi[x])), e2(b2.potential(x));
        CHECK((e1.eigenvalues() - e2.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("holonomy traces")
{
    auto m = build_cycle(6, 6.0);
    CHECK(holonomy_trace(build_bundle(m, 3, {}, {}), {0, 1, 2, 3, 4, 5}) == cplx(3.0, 0.0));

    std::vector<Eigen::MatrixXcd> ph;
    double total = 0.0;
    for (int e = 0; e < m.num_edges(); ++e) {
        const double th = 0.1 + 0.2 * e;
        ph.push_back(Eigen::MatrixXcd::Constant(1, 1, std::polar(1.0, th)));
        const Edge& ed = m.edge(e);
        // loop 0 -> 1 -> ... -> 5 -> 0 traverses each edge once; orientation decides the sign
        total += (ed.b == (ed.a + 1) % 6) ? th : -th;
    }
    auto b = build_bundle(m, 1, {"explicit", 0, ph}, {});
    CHECK(std::abs(holonomy_trace(b, {0, 1, 2, 3, 4, 5}) - std::polar(1.0, total)) < 1e-14);

    auto t = build_torus_grid(4, 4, 4.0, 4.0);
    auto rb = random_bundle(t, 2, 17);
    auto gb = apply_gauge(rb, random_gauge(16, 2, 18));
    for (const auto& l : torus_loops(4, 4))
        CHECK(std::abs(holonomy_trace(rb, l) - holonomy_trace(gb, l)) < 1e-10);
    CHECK_THROWS(holonomy_trace(rb, {0, 5, 10}));
}
