#include "doctest.h"

#include "fcl/s2s.hpp"

#include <cmath>
#include <limits>

using namespace fcl;

namespace {

struct Scene {
    HermitianBundle b;
    Region u;
    WaveMapData wave;
    double T;
    Eigen::MatrixXd D;

    Scene(HermitianBundle bundle, Region region, double horizon, double dt)
        : b(std::move(bundle)), u(std::move(region)), T(horizon)
    {
        SpectralOperator op(b);
        wave = wave_map_assemble(op, u, TimeGrid(2.0 * T, dt));
        D = shortest_distances(b.manifold());
    }
    Reconstructor rc(ProbeConfig cfg = {}) const { return Reconstructor(wave, extract_local_structure(b, u), T, cfg); }
};

Region grid_block(int nx, int i0, int j0, int ni, int nj)
{
    std::vector<int> v;
    for (int i = i0; i < i0 + ni; ++i)
        for (int j = j0; j < j0 + nj; ++j)
            v.push_back(i * nx + j);
    return Region(v);
}

LocalConnection truth(const HermitianBundle& b, const Region& chart)
{
    LocalConnection c;
    c.rank = b.rank();
    for (const Edge& e : b.manifold().edges())
        if (chart.contains(e.a) && chart.contains(e.b))
            c.set_transport(e.a, e.b, b.transport(e.a, e.b));
    for (int x : chart.vertices())
        c.potentials[x] = b.potential(x);
    return c;
}

std::vector<std::vector<int>> loops_in(const std::vector<std::vector<int>>& all, const Region& chart)
{
    std::vector<std::vector<int>> out;
    for (const auto& l : all) {
        bool ok = true;
        for (int v : l)
            ok = ok && chart.contains(v);
        if (ok)
            out.push_back(l);
    }
    return out;
}

const Scene& cycle_scene()
{
    static const Scene s(build_bundle(build_cycle(32, 2.0 * M_PI), 1, {}, {}), arc_region(32, 0, 12), 2.4, 0.1);
    return s;
}

} // namespace

TEST_CASE("projection residual")
{
    const Scene& s = cycle_scene();
    auto rc = s.rc();
    const double h = rc.mesh();
    auto box = rc.box_family(3, 1.5 * h, 0.5);
    ProbeConfig exact;
    exact.reg_rel = 1e-14;
    auto res = s.rc(exact).projection_residual(box, box);
    CHECK(res.maxCoeff() < 1e-6);

    SourceFamily empty{"empty", Eigen::MatrixXcd::Zero(rc.engine().vec_dim(), 0), {}};
    auto one = rc.projection_residual(box, empty);
    for (int i = 0; i < one.size(); ++i)
        CHECK(one(i) == doctest::Approx(1.0));

    // span at vertex 11, target at vertex 0: 11h apart, both active for 0.4 only
    auto far = rc.projection_residual(rc.box_family(0, 0.5 * h, 0.4), rc.box_family(11, 0.5 * h, 0.4));
    CHECK(far.minCoeff() > 0.9);
}

TEST_CASE("containment test")
{
    const Scene& s = cycle_scene();
    auto rc = s.rc();
    const double h = rc.mesh();
    CHECK(rc.containment_test(5, 0.8, 5, 0.8 + h, 5, 0.8 + h, 0.5));
    CHECK_FALSE(rc.containment_test(1, 1.6, 1, 0.5 * h, 1, 0.5 * h, 0.5));
    // monotone in the union radius
    bool seen = false;
    for (double ty = 0.2; ty < 1.6; ty += 0.2) {
        bool v = rc.containment_test(6, 0.8, 6, ty, 6, ty, 0.5);
        CHECK(!(seen && !v));
        seen = seen || v;
    }
    CHECK(seen);
}

TEST_CASE("first-arrival distances")
{
    const Scene& s = cycle_scene();
    auto rc = s.rc();
    const double h = rc.mesh();
    CHECK(rc.first_arrival_distance(4, 4) < h);
    const double d = rc.first_arrival_distance(2, 10);
    CHECK(std::abs(d - s.D(2, 10)) / s.D(2, 10) < 0.15);
    CHECK(s.D(2, 10) == doctest::Approx(8.0 * h));
    auto fa = rc.first_arrival_matrix();
    CHECK((fa - fa.transpose()).cwiseAbs().maxCoeff() < 0.5 * h);
    CHECK_THROWS(rc.first_arrival_distance(4, 20));
}

TEST_CASE("cut time")
{
    const Scene& s = cycle_scene();
    auto rc = s.rc();
    const double h = rc.mesh();
    const double sd = rc.first_arrival_distance(5, 6);
    CHECK(std::isinf(rc.cut_time_estimate(5, 6, sd, {0.5 * h, h})));

    // torus 4x4 of unit spacing, rays along a row close up after half the circumference
    Scene t(build_bundle(build_torus_grid(4, 4, 4.0, 4.0), 1, {}, {}), grid_block(4, 0, 0, 2, 4), 8.0, 0.1);
    ProbeConfig pc;
    pc.cut_eps = 0.5;
    auto rt = t.rc(pc);
    std::vector<double> grid;
    for (double r = 0.5; r < 7.0; r += 0.5)
        grid.push_back(r);
    const double st = rt.first_arrival_distance(0, 1);
    CHECK(std::abs(rt.cut_time_estimate(0, 1, st, grid) - 2.0) <= 0.5);
}

TEST_CASE("exterior distance along a ray")
{
    const Scene& s = cycle_scene();
    auto rc = s.rc();
    const double h = rc.mesh();
    std::vector<double> grid;
    for (double r = 0.5 * h; r < s.T - 3.0 * h; r += 0.5 * h)
        grid.push_back(r);
    const int x = 8, y = 11;
    const double sd = rc.first_arrival_distance(x, y);
    for (int k : {5, 7}) {
        const double rp = k * h;
        CHECK(std::abs(rc.exterior_distance(x, y, sd, rp, x, grid) - rp) <= 0.15 * rp);
        const int p = x + k;
        CHECK(std::abs(rc.exterior_distance(x, y, sd, rp, 10, grid) - s.D(p, 10)) <= 0.15 * s.D(p, 10));
    }
}

TEST_CASE("fiber frames")
{
    Scene s(build_bundle(build_torus_grid(6, 6, 6.0, 6.0), 1, {}, {}), grid_block(6, 0, 0, 5, 5), 1.0, 0.05);
    auto rc = s.rc();
    for (int y : {7, 14}) {
        FiberProbe fp = rc.recover_fiber_frame(y);
        CHECK(fp.frame_defect < 1e-3);
        CHECK(std::abs(std::abs(fp.values(0, 0)) * std::sqrt(s.b.manifold().volume(y)) - 1.0) < 1e-6);
    }
    ProbeConfig pc;
    pc.frame_radius = 2.0;
    CHECK(s.rc(pc).recover_fiber_frame(14).frame_defect < 1e-3);

    CHECK_THROWS_AS(rc.recover_fiber_frame(35), std::domain_error);
}

TEST_CASE("local operator recovery")
{
    auto m = build_torus_grid(6, 6, 6.0, 6.0);
    const Region u = grid_block(6, 0, 0, 5, 5), chart = grid_block(6, 1, 1, 3, 3);

    SUBCASE("trivial bundle")
    {
        Scene s(build_bundle(m, 1, {}, {}), u, 1.0, 0.05);
        auto rec = s.rc().recover_local_operator(chart);
        double dU = 0.0, dA = 0.0;
        for (const auto& [k, t] : rec.connection.transports)
            dU = std::max(dU, std::abs(t(0, 0) - 1.0));
        for (const auto& [x, a] : rec.connection.potentials)
            dA = std::max(dA, std::abs(a(0, 0)));
        CHECK(rec.connection.transports.size() == 24);
        CHECK(dU < 1e-3);
        CHECK(dA < 1e-3);
    }
    SUBCASE("diagonal potential at one vertex")
    {
        std::vector<Eigen::MatrixXcd> pot(36, Eigen::MatrixXcd::Zero(2, 2));
        pot[14] = Eigen::Vector2cd(0.3, 0.7).asDiagonal();
        Scene s(build_bundle(m, 2, {}, {"explicit", 0, 1.0, 0.0, pot}), u, 1.0, 0.05);
        auto rec = s.rc().recover_local_operator(chart);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rec.connection.potentials.at(14));
        CHECK(std::abs(es.eigenvalues()(0) - 0.3) < 1e-3);
        CHECK(std::abs(es.eigenvalues()(1) - 0.7) < 1e-3);
    }
    SUBCASE("gauge-transformed data")
    {
        auto b = build_bundle(m, 2, {"random", 3, {}}, {"random_hermitian", 4, 1.0, 1.0, {}});
        auto bg = apply_gauge(b, random_gauge(36, 2, 5));
        Scene s(b, u, 1.0, 0.05), sg(bg, u, 1.0, 0.05);
        auto rec = s.rc().recover_local_operator(chart);
        auto recg = sg.rc().recover_local_operator(chart);
        auto loops = loops_in(torus_loops(6, 6), chart);
        CHECK(loops.size() == 4);
        double diff = 0.0;
        for (const auto& [k, t] : rec.connection.transports)
            diff = std::max(diff, (t - recg.connection.transports.at(k)).cwiseAbs().maxCoeff());
        CHECK(diff > 1e-2);
        CHECK(gauge_invariant_compare(rec.connection, truth(b, chart), loops).pass);
        CHECK(gauge_invariant_compare(recg.connection, truth(b, chart), loops).pass);
    }
    CHECK_THROWS(Scene(build_bundle(m, 1, {}, {}), u, 1.0, 0.05).rc().recover_local_operator(u));
}

TEST_CASE("gauge-invariant comparison")
{
    auto m = build_torus_grid(4, 4, 4.0, 4.0);
    auto b = build_bundle(m, 2, {"random", 8, {}}, {"random_hermitian", 9, 1.0, 0.0, {}});
    Region all = full_region(m);
    auto loops = torus_loops(4, 4);
    auto t = truth(b, all);
    auto exact = gauge_invariant_compare(t, t, loops);
    CHECK(exact.holonomy_deviation == 0.0);
    CHECK(exact.potential_deviation == 0.0);
    CHECK(exact.loops == 16 + 2);

    auto g = gauge_invariant_compare(truth(apply_gauge(b, random_gauge(16, 2, 10)), all), t, loops);
    CHECK(g.holonomy_deviation < 1e-10);
    CHECK(g.potential_deviation < 1e-10);

    auto p = t;
    p.potentials[5] += 0.1 * Eigen::MatrixXcd::Identity(2, 2);
    auto d = gauge_invariant_compare(p, t, loops);
    CHECK(d.potential_deviation == doctest::Approx(0.1).epsilon(1e-10));
    CHECK_FALSE(gauge_invariant_compare(p, t, loops, 0.05).pass);
}

TEST_CASE("distance family on a full observation region")
{
    Scene s(build_bundle(build_cycle(16, 2.0 * M_PI), 1, {}, {}), full_region(build_cycle(16, 2.0 * M_PI)), 3.6, 0.1);
    auto rc = s.rc();
    const double h = rc.mesh();
    RayPlan plan{0, 1, {}, {}};
    for (double r = 0.5 * h; r < s.T - 3.0 * h; r += 0.5 * h)
        plan.r_grid.push_back(r);
    auto set = rc.distance_family({plan});
    for (int p = 0; p < 16; ++p) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& prof : set.profiles) {
            double e = 0.0;
            for (int z = 0; z < 16; ++z)
                e = std::max(e, std::abs(prof(z) - s.D(p, z)));
            best = std::min(best, e / s.D.row(p).maxCoeff());
        }
        CHECK(best <= 0.15);
    }
}
