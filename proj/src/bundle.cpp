#include "fcl/bundle.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fcl {

namespace {

constexpr double kStructTol = 1e-12;

Eigen::MatrixXcd complex_gaussian(int r, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXcd g(r, r);
    for (int j = 0; j < r; ++j)
        for (int i = 0; i < r; ++i) {
            double re = nd(rng);
            double im = nd(rng);
            g(i, j) = cplx(re, im);
        }
    return g;
}

Eigen::MatrixXcd unitary_from(std::mt19937_64& rng, int r)
{
    Eigen::MatrixXcd g = complex_gaussian(r, rng);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
    Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(r, r);
    Eigen::MatrixXcd rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < r; ++j) {
        cplx d = rr(j, j);
        double a = std::abs(d);
        if (a > 0.0)
            q.col(j) *= d / a;
    }
    return q;
}

} // namespace

HermitianBundle::HermitianBundle(const DiscreteManifold& m, int rank, std::vector<Eigen::MatrixXcd> transport,
                                 std::vector<Eigen::MatrixXcd> potential)
    : m_(m), r_(rank), U_(std::move(transport)), A_(std::move(potential))
{
    if (r_ < 1)
        throw std::invalid_argument("bundle: rank must be >= 1");
    if (static_cast<int>(U_.size()) != m_.num_edges())
        throw std::invalid_argument("bundle: one transport per edge required");
    if (static_cast<int>(A_.size()) != m_.num_vertices())
        throw std::invalid_argument("bundle: one potential per vertex required");
    for (const auto& u : U_) {
        if (u.rows() != r_ || u.cols() != r_)
            throw std::invalid_argument("bundle: transport has wrong shape");
        if (unitarity_defect(u) > kStructTol)
            throw std::invalid_argument("bundle: transport is not unitary");
    }
    for (auto& a : A_) {
        if (a.rows() != r_ || a.cols() != r_)
            throw std::invalid_argument("bundle: potential has wrong shape");
        if (hermiticity_defect(a) > kStructTol * std::max(1.0, a.norm()))
            throw std::invalid_argument("bundle: potential is not Hermitian");
        Eigen::MatrixXcd s = 0.5 * (a + a.adjoint());
        a = s;
    }
}

Eigen::MatrixXcd HermitianBundle::transport(int x, int y) const
{
    int e = m_.find_edge(x, y);
    if (e < 0)
        throw std::invalid_argument("transport: vertices are not adjacent");
    if (m_.edge(e).a == x)
        return U_[e];
    return U_[e].adjoint();
}

double unitarity_defect(const Eigen::MatrixXcd& u)
{
    const auto n = u.rows();
    return (u * u.adjoint() - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
}

double hermiticity_defect(const Eigen::MatrixXcd& a) { return (a - a.adjoint()).cwiseAbs().maxCoeff(); }

Eigen::MatrixXcd random_unitary(int r, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return unitary_from(rng, r);
}

Eigen::MatrixXcd random_hermitian(int r, std::uint64_t seed, double scale)
{
    std::mt19937_64 rng(seed);
    Eigen::MatrixXcd g = complex_gaussian(r, rng);
    Eigen::MatrixXcd h = 0.5 * scale * (g + g.adjoint());
    return 0.5 * (h + h.adjoint());
}

HermitianBundle build_bundle(const DiscreteManifold& m, int rank, const ConnectionSpec& conn,
                             const PotentialSpec& pot)
{
    if (rank < 1)
        throw std::invalid_argument("build_bundle: rank must be >= 1");
    const int ne = m.num_edges(), nv = m.num_vertices();
    std::vector<Eigen::MatrixXcd> U;
    if (conn.kind == "trivial") {
        U.assign(ne, Eigen::MatrixXcd::Identity(rank, rank));
    } else if (conn.kind == "random") {
        std::mt19937_64 rng(conn.seed);
        for (int e = 0; e < ne; ++e)
            U.push_back(unitary_from(rng, rank));
    } else if (conn.kind == "explicit") {
        U = conn.transports;
    } else {
        throw std::invalid_argument("build_bundle: unknown connection kind " + conn.kind);
    }

    std::vector<Eigen::MatrixXcd> A;
    if (pot.kind == "zero") {
        A.assign(nv, Eigen::MatrixXcd::Zero(rank, rank));
    } else if (pot.kind == "random_hermitian") {
        std::mt19937_64 rng(pot.seed);
        for (int x = 0; x < nv; ++x) {
            Eigen::MatrixXcd g = complex_gaussian(rank, rng);
            Eigen::MatrixXcd h = 0.5 * pot.scale * (g + g.adjoint());
            A.push_back(0.5 * (h + h.adjoint()));
        }
    } else if (pot.kind == "explicit") {
        A = pot.values;
    } else {
        throw std::invalid_argument("build_bundle: unknown potential kind " + pot.kind);
    }
    if (pot.offset != 0.0)
        for (auto& a : A)
            a += pot.offset * Eigen::MatrixXcd::Identity(a.rows(), a.cols());
    return HermitianBundle(m, rank, std::move(U), std::move(A));
}

GaugeTransform random_gauge(int nvertices, int rank, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    GaugeTransform g;
    for (int x = 0; x < nvertices; ++x)
        g.S.push_back(unitary_from(rng, rank));
    return g;
}

GaugeTransform identity_gauge(int nvertices, int rank)
{
    return GaugeTransform{std::vector<Eigen::MatrixXcd>(nvertices, Eigen::MatrixXcd::Identity(rank, rank))};
}

GaugeTransform compose(const GaugeTransform& g1, const GaugeTransform& g2)
{
    if (g1.S.size() != g2.S.size())
        throw std::invalid_argument("compose: size mismatch");
    GaugeTransform g;
    for (std::size_t x = 0; x < g1.S.size(); ++x)
        g.S.push_back(g1.S[x] * g2.S[x]);
    return g;
}

GaugeTransform inverse(const GaugeTransform& g)
{
    GaugeTransform out;
    for (const auto& s : g.S)
        out.S.push_back(s.adjoint());
    return out;
}

cplx l2_inner(const HermitianBundle& b, const Section& u, const Section& v)
{
    if (u.size() != b.dim() || v.size() != b.dim())
        throw std::invalid_argument("l2_inner: dimension mismatch");
    const int r = b.rank();
    cplx acc = 0.0;
    for (int x = 0; x < b.manifold().num_vertices(); ++x)
        acc += b.manifold().volume(x) * u.segment(x * r, r).dot(v.segment(x * r, r));
    return acc;
}

double l2_norm(const HermitianBundle& b, const Section& u) { return std::sqrt(std::abs(l2_inner(b, u, u))); }

HermitianBundle apply_gauge(const HermitianBundle& b, const GaugeTransform& g)
{
    const auto& m = b.manifold();
    if (static_cast<int>(g.S.size()) != m.num_vertices())
        throw std::invalid_argument("apply_gauge: vertex count mismatch");
    for (const auto& s : g.S)
        if (s.rows() != b.rank() || s.cols() != b.rank())
            throw std::invalid_argument("apply_gauge: rank mismatch");
    std::vector<Eigen::MatrixXcd> U, A;
    for (int e = 0; e < m.num_edges(); ++e) {
        const Edge& ed = m.edge(e);
        Eigen::MatrixXcd u = g.S[ed.a].adjoint() * b.edge_transport(e) * g.S[ed.b];
        // re-orthonormalize roundoff so repeated actions stay within tolerance
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(u, Eigen::ComputeFullU | Eigen::ComputeFullV);
        U.push_back(svd.matrixU() * svd.matrixV().adjoint());
    }
    for (int x = 0; x < m.num_vertices(); ++x)
        A.push_back(g.S[x].adjoint() * b.potential(x) * g.S[x]);
    return HermitianBundle(m, b.rank(), std::move(U), std::move(A));
}

Section gauge_section(const GaugeTransform& g, const Section& u)
{
    const int n = static_cast<int>(g.S.size());
    const int r = static_cast<int>(u.size()) / n;
    Section out(u.size());
    for (int x = 0; x < n; ++x)
        out.segment(x * r, r) = g.S[x].adjoint() * u.segment(x * r, r);
    return out;
}

DiscreteManifold relabel_manifold(const DiscreteManifold& m, const std::vector<int>& psi)
{
    const int n = m.num_vertices();
    if (static_cast<int>(psi.size()) != n)
        throw std::invalid_argument("relabel: size mismatch");
    std::vector<int> inv(n, -1);
    for (int x = 0; x < n; ++x) {
        if (psi[x] < 0 || psi[x] >= n || inv[psi[x]] != -1)
            throw std::invalid_argument("relabel: psi is not a bijection");
        inv[psi[x]] = x;
    }
    std::vector<Edge> edges;
    for (const auto& e : m.edges())
        edges.push_back({inv[e.a], inv[e.b], e.length, e.conductance});
    std::vector<double> vol(n);
    for (int x = 0; x < n; ++x)
        vol[x] = m.volume(psi[x]);
    return DiscreteManifold(n, std::move(edges), std::move(vol), m.dimension(), m.mesh());
}

StructureIso random_structure_iso(int nvertices, int rank, std::uint64_t seed)
{
    StructureIso iso;
    iso.psi.resize(nvertices);
    std::iota(iso.psi.begin(), iso.psi.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(iso.psi.begin(), iso.psi.end(), rng);
    iso.fiber = random_gauge(nvertices, rank, seed ^ 0x9e3779b97f4a7c15ULL).S;
    return iso;
}

bool iso_is_isometry(const StructureIso& iso, const DiscreteManifold& m2, const DiscreteManifold& m1)
{
    if (m1.num_vertices() != m2.num_vertices() || m1.num_edges() != m2.num_edges())
        return false;
    for (int x = 0; x < m2.num_vertices(); ++x)
        if (m2.volume(x) != m1.volume(iso.psi[x]))
            return false;
    for (const auto& e : m2.edges()) {
        int f = m1.find_edge(iso.psi[e.a], iso.psi[e.b]);
        if (f < 0 || m1.edge(f).length != e.length || m1.edge(f).conductance != e.conductance)
            return false;
    }
    for (const auto& s : iso.fiber)
        if (unitarity_defect(s) > kStructTol)
            return false;
    return true;
}

HermitianBundle pullback_bundle(const StructureIso& iso, const HermitianBundle& b1, const DiscreteManifold& m2)
{
    if (!iso_is_isometry(iso, m2, b1.manifold()))
        throw std::invalid_argument("pullback_bundle: psi is not an isometry");
    std::vector<Eigen::MatrixXcd> U, A;
    for (const auto& e : m2.edges()) {
        Eigen::MatrixXcd u = iso.fiber[e.a].adjoint() * b1.transport(iso.psi[e.a], iso.psi[e.b]) * iso.fiber[e.b];
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(u, Eigen::ComputeFullU | Eigen::ComputeFullV);
        U.push_back(svd.matrixU() * svd.matrixV().adjoint());
    }
    for (int x = 0; x < m2.num_vertices(); ++x)
        A.push_back(iso.fiber[x].adjoint() * b1.potential(iso.psi[x]) * iso.fiber[x]);
    return HermitianBundle(m2, b1.rank(), std::move(U), std::move(A));
}

Section pullback_section(const StructureIso& iso, const Section& u, int rank)
{
    const int n = static_cast<int>(iso.psi.size());
    if (u.size() != static_cast<Eigen::Index>(n) * rank)
        throw std::invalid_argument("pullback_section: domain mismatch");
    Section out(u.size());
    for (int x = 0; x < n; ++x)
        out.segment(x * rank, rank) = iso.fiber[x].adjoint() * u.segment(iso.psi[x] * rank, rank);
    return out;
}

Eigen::MatrixXcd pullback_matrix(const StructureIso& iso, int rank)
{
    const int n = static_cast<int>(iso.psi.size());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(n * rank, n * rank);
    for (int x = 0; x < n; ++x)
        M.block(x * rank, iso.psi[x] * rank, rank, rank) = iso.fiber[x].adjoint();
    return M;
}

cplx holonomy_trace(const HermitianBundle& b, const std::vector<int>& loop)
{
    std::vector<int> l = loop;
    if (l.size() >= 2 && l.front() == l.back())
        l.pop_back();
    if (l.size() < 2)
        throw std::invalid_argument("holonomy_trace: loop too short");
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Identity(b.rank(), b.rank());
    for (std::size_t i = 0; i < l.size(); ++i) {
        int x = l[i], y = l[(i + 1) % l.size()];
        if (b.manifold().find_edge(x, y) < 0)
            throw std::invalid_argument("holonomy_trace: consecutive loop vertices not adjacent");
        P = P * b.transport(x, y);
    }
    return P.trace();
}

std::vector<std::vector<int>> torus_loops(int nx, int ny)
{
    auto id = [&](int i, int j) { return ((i + nx) % nx) * ny + (j + ny) % ny; };
    std::vector<std::vector<int>> loops;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            loops.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
    std::vector<int> a, c;
    for (int i = 0; i < nx; ++i)
        a.push_back(id(i, 0));
    for (int j = 0; j < ny; ++j)
        c.push_back(id(0, j));
    loops.push_back(a);
    loops.push_back(c);
    return loops;
}

} // namespace fcl
