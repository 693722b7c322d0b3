#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fcl {

struct Edge {
    int a = 0;
    int b = 0;
    double length = 1.0;
    double conductance = 1.0;
};

struct Neighbor {
    int vertex;
    int edge;
};

// Weighted graph standing in for a closed Riemannian manifold.
class DiscreteManifold {
public:
    DiscreteManifold() = default;
    DiscreteManifold(int nvertices, std::vector<Edge> edges, std::vector<double> volumes, int dim,
                     double mesh = 0.0);

    int num_vertices() const { return static_cast<int>(vol_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }
    int dimension() const { return dim_; }
    double mesh() const { return mesh_; }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int e) const { return edges_[e]; }
    const std::vector<double>& volumes() const { return vol_; }
    double volume(int x) const { return vol_[x]; }
    const std::vector<Neighbor>& neighbors(int x) const { return adj_[x]; }

    // Edge index joining x and y, or -1.
    int find_edge(int x, int y) const;

private:
    std::vector<Edge> edges_;
    std::vector<double> vol_;
    std::vector<std::vector<Neighbor>> adj_;
    int dim_ = 1;
    double mesh_ = 0.0;
};

// Sorted vertex subset.
class Region {
public:
    Region() = default;
    explicit Region(std::vector<int> verts);

    const std::vector<int>& vertices() const { return v_; }
    int size() const { return static_cast<int>(v_.size()); }
    bool empty() const { return v_.empty(); }
    bool contains(int x) const;
    // Position of x inside the region, or -1.
    int index_of(int x) const;
    int operator[](int i) const { return v_[i]; }

    bool operator==(const Region& o) const { return v_ == o.v_; }

private:
    std::vector<int> v_;
};

struct BuilderSpec {
    std::string kind;            // "cycle" or "torus_grid"
    std::vector<int> counts;     // one per axis
    std::vector<double> lengths; // total length per axis
};

DiscreteManifold build_manifold(const BuilderSpec& spec);
DiscreteManifold build_cycle(int n, double length);
DiscreteManifold build_torus_grid(int nx, int ny, double lx, double ly);

Eigen::MatrixXd shortest_distances(const DiscreteManifold& m);
std::vector<double> distances_from(const DiscreteManifold& m, int source);

Region ball_region(const Eigen::MatrixXd& dist, int center, double radius);
Region ball_region(const DiscreteManifold& m, int center, double radius);
Region thickened_region(const Eigen::MatrixXd& dist, const Region& u, double t);
Region thickened_region(const DiscreteManifold& m, const Region& u, double t);

Region full_region(const DiscreteManifold& m);
// Vertices i0, i0+1, ..., i0+len-1 modulo n on a cycle.
Region arc_region(int n, int i0, int len);
Region union_region(const Region& a, const Region& b);
bool region_valid(const DiscreteManifold& m, const Region& u);

} // namespace fcl
