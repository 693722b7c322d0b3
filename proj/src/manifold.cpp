#include "fcl/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace fcl {

DiscreteManifold::DiscreteManifold(int nvertices, std::vector<Edge> edges, std::vector<double> volumes,
                                   int dim, double mesh)
    : edges_(std::move(edges)), vol_(std::move(volumes)), adj_(nvertices), dim_(dim), mesh_(mesh)
{
    if (nvertices <= 0 || static_cast<int>(vol_.size()) != nvertices)
        throw std::invalid_argument("manifold: volume count does not match vertex count");
    if (dim_ < 1)
        throw std::invalid_argument("manifold: dimension must be >= 1");
    for (double v : vol_)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("manifold: volumes must be positive and finite");
    for (int e = 0; e < num_edges(); ++e) {
        const Edge& ed = edges_[e];
        if (ed.a < 0 || ed.b < 0 || ed.a >= nvertices || ed.b >= nvertices || ed.a == ed.b)
            throw std::invalid_argument("manifold: bad edge endpoints");
        if (!(ed.length > 0.0) || !std::isfinite(ed.length) || !(ed.conductance > 0.0) ||
            !std::isfinite(ed.conductance))
            throw std::invalid_argument("manifold: edge length and conductance must be positive");
        adj_[ed.a].push_back({ed.b, e});
        adj_[ed.b].push_back({ed.a, e});
    }
    // connectivity
    std::vector<char> seen(nvertices, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        for (const auto& nb : adj_[x])
            if (!seen[nb.vertex]) {
                seen[nb.vertex] = 1;
                ++count;
                stack.push_back(nb.vertex);
            }
    }
    if (count != nvertices)
        throw std::invalid_argument("manifold: graph is not connected");
}

int DiscreteManifold::find_edge(int x, int y) const
{
    for (const auto& nb : adj_[x])
        if (nb.vertex == y)
            return nb.edge;
    return -1;
}

Region::Region(std::vector<int> verts) : v_(std::move(verts))
{
    std::sort(v_.begin(), v_.end());
    v_.erase(std::unique(v_.begin(), v_.end()), v_.end());
}

bool Region::contains(int x) const { return std::binary_search(v_.begin(), v_.end(), x); }

int Region::index_of(int x) const
{
    auto it = std::lower_bound(v_.begin(), v_.end(), x);
    if (it == v_.end() || *it != x)
        return -1;
    return static_cast<int>(it - v_.begin());
}

DiscreteManifold build_cycle(int n, double length)
{
    if (n < 3)
        throw std::invalid_argument("cycle: need at least 3 vertices");
    if (!(length > 0.0))
        throw std::invalid_argument("cycle: length must be positive");
    const double h = length / n;
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i)
        edges.push_back({i, (i + 1) % n, h, 1.0 / h});
    return DiscreteManifold(n, std::move(edges), std::vector<double>(n, h), 1, h);
}

DiscreteManifold build_torus_grid(int nx, int ny, double lx, double ly)
{
    if (nx < 3 || ny < 3)
        throw std::invalid_argument("torus_grid: need at least 3 vertices per axis");
    if (!(lx > 0.0) || !(ly > 0.0))
        throw std::invalid_argument("torus_grid: lengths must be positive");
    const double hx = lx / nx, hy = ly / ny;
    // conductance mu/h^2 along each axis so that mu^{-1} w is the finite-difference 1/h^2
    auto id = [&](int i, int j) { return ((i + nx) % nx) * ny + (j + ny) % ny; };
    std::vector<Edge> edges;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            edges.push_back({id(i, j), id(i + 1, j), hx, hy / hx});
            edges.push_back({id(i, j), id(i, j + 1), hy, hx / hy});
        }
    return DiscreteManifold(nx * ny, std::move(edges), std::vector<double>(nx * ny, hx * hy), 2,
                            std::min(hx, hy));
}

DiscreteManifold build_manifold(const BuilderSpec& spec)
{
    if (spec.kind == "cycle") {
        if (spec.counts.size() != 1 || spec.lengths.size() != 1)
            throw std::invalid_argument("cycle: expected one count and one length");
        return build_cycle(spec.counts[0], spec.lengths[0]);
    }
    if (spec.kind == "torus_grid") {
        if (spec.counts.size() != 2 || spec.lengths.size() != 2)
            throw std::invalid_argument("torus_grid: expected two counts and two lengths");
        return build_torus_grid(spec.counts[0], spec.counts[1], spec.lengths[0], spec.lengths[1]);
    }
    throw std::invalid_argument("unknown manifold kind: " + spec.kind);
}

std::vector<double> distances_from(const DiscreteManifold& m, int source)
{
    const int n = m.num_vertices();
    std::vector<double> d(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d[source] = 0.0;
    pq.push({0.0, source});
    while (!pq.empty()) {
        auto [dx, x] = pq.top();
        pq.pop();
        if (dx > d[x])
            continue;
        for (const auto& nb : m.neighbors(x)) {
            double nd = dx + m.edge(nb.edge).length;
            if (nd < d[nb.vertex]) {
                d[nb.vertex] = nd;
                pq.push({nd, nb.vertex});
            }
        }
    }
    return d;
}

Eigen::MatrixXd shortest_distances(const DiscreteManifold& m)
{
    const int n = m.num_vertices();
    Eigen::MatrixXd D(n, n);
    for (int x = 0; x < n; ++x) {
        auto d = distances_from(m, x);
        for (int y = 0; y < n; ++y)
            D(x, y) = d[y];
    }
    // Dijkstra sums edges in different orders from each end; pin symmetry.
    for (int x = 0; x < n; ++x)
        for (int y = x + 1; y < n; ++y) {
            double v = std::min(D(x, y), D(y, x));
            D(x, y) = D(y, x) = v;
        }
    return D;
}

Region ball_region(const Eigen::MatrixXd& dist, int center, double radius)
{
    if (radius < 0.0)
        throw std::invalid_argument("ball_region: negative radius");
    std::vector<int> v;
    for (int y = 0; y < dist.rows(); ++y)
        if (dist(center, y) < radius)
            v.push_back(y);
    return Region(std::move(v));
}

Region ball_region(const DiscreteManifold& m, int center, double radius)
{
    if (radius < 0.0)
        throw std::invalid_argument("ball_region: negative radius");
    auto d = distances_from(m, center);
    std::vector<int> v;
    for (int y = 0; y < m.num_vertices(); ++y)
        if (d[y] < radius)
            v.push_back(y);
    return Region(std::move(v));
}

Region thickened_region(const Eigen::MatrixXd& dist, const Region& u, double t)
{
    if (t < 0.0)
        throw std::invalid_argument("thickened_region: negative thickness");
    std::vector<int> v;
    for (int y = 0; y < dist.rows(); ++y)
        for (int x : u.vertices())
            if (dist(x, y) <= t) {
                v.push_back(y);
                break;
            }
    return Region(std::move(v));
}

Region thickened_region(const DiscreteManifold& m, const Region& u, double t)
{
    return thickened_region(shortest_distances(m), u, t);
}

Region full_region(const DiscreteManifold& m)
{
    std::vector<int> v(m.num_vertices());
    for (int i = 0; i < m.num_vertices(); ++i)
        v[i] = i;
    return Region(std::move(v));
}

Region arc_region(int n, int i0, int len)
{
    std::vector<int> v;
    for (int k = 0; k < len; ++k)
        v.push_back(((i0 + k) % n + n) % n);
    return Region(std::move(v));
}

Region union_region(const Region& a, const Region& b)
{
    std::vector<int> v = a.vertices();
    v.insert(v.end(), b.vertices().begin(), b.vertices().end());
    return Region(std::move(v));
}

bool region_valid(const DiscreteManifold& m, const Region& u)
{
    if (u.empty())
        return false;
    for (int x : u.vertices())
        if (x < 0 || x >= m.num_vertices())
            return false;
    return true;
}

} // namespace fcl
