#pragma once

#include "fcl/manifold.hpp"

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace fcl {

using cplx = std::complex<double>;
using Section = Eigen::VectorXcd;

struct ConnectionSpec {
    std::string kind = "trivial"; // trivial | random | explicit
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXcd> transports; // explicit: one per edge, oriented a -> b
};

struct PotentialSpec {
    std::string kind = "zero"; // zero | random_hermitian | explicit
    std::uint64_t seed = 0;
    double scale = 1.0;
    double offset = 0.0; // adds offset * I to every vertex
    std::vector<Eigen::MatrixXcd> values;
};

// Unitary transport per oriented edge plus Hermitian potential per vertex.
class HermitianBundle {
public:
    HermitianBundle() = default;
    HermitianBundle(const DiscreteManifold& m, int rank, std::vector<Eigen::MatrixXcd> transport,
                    std::vector<Eigen::MatrixXcd> potential);

    const DiscreteManifold& manifold() const { return m_; }
    int rank() const { return r_; }
    int dim() const { return m_.num_vertices() * r_; }

    // U_{ab} for stored edge e = (a,b).
    const Eigen::MatrixXcd& edge_transport(int e) const { return U_[e]; }
    // U_{xy} for adjacent x,y, taking U_{yx} = U_{xy}^*.
    Eigen::MatrixXcd transport(int x, int y) const;
    const Eigen::MatrixXcd& potential(int x) const { return A_[x]; }
    const std::vector<Eigen::MatrixXcd>& transports() const { return U_; }
    const std::vector<Eigen::MatrixXcd>& potentials() const { return A_; }

private:
    DiscreteManifold m_;
    int r_ = 1;
    std::vector<Eigen::MatrixXcd> U_;
    std::vector<Eigen::MatrixXcd> A_;
};

struct GaugeTransform {
    std::vector<Eigen::MatrixXcd> S;
};

// psi maps domain vertices to codomain vertices; fiber(x) maps E2_x to E1_{psi(x)}.
struct StructureIso {
    std::vector<int> psi;
    std::vector<Eigen::MatrixXcd> fiber;
};

HermitianBundle build_bundle(const DiscreteManifold& m, int rank, const ConnectionSpec& conn,
                             const PotentialSpec& pot);

Eigen::MatrixXcd random_unitary(int r, std::uint64_t seed);
Eigen::MatrixXcd random_hermitian(int r, std::uint64_t seed, double scale);
GaugeTransform random_gauge(int nvertices, int rank, std::uint64_t seed);
GaugeTransform identity_gauge(int nvertices, int rank);
GaugeTransform compose(const GaugeTransform& g1, const GaugeTransform& g2);
GaugeTransform inverse(const GaugeTransform& g);

double unitarity_defect(const Eigen::MatrixXcd& u);
double hermiticity_defect(const Eigen::MatrixXcd& a);

cplx l2_inner(const HermitianBundle& b, const Section& u, const Section& v);
double l2_norm(const HermitianBundle& b, const Section& u);

HermitianBundle apply_gauge(const HermitianBundle& b, const GaugeTransform& g);
// Section transformed alongside apply_gauge: u'(x) = S(x)^* u(x).
Section gauge_section(const GaugeTransform& g, const Section& u);

// Relabeled manifold whose vertex x corresponds to vertex psi[x] of m.
DiscreteManifold relabel_manifold(const DiscreteManifold& m, const std::vector<int>& psi);
StructureIso random_structure_iso(int nvertices, int rank, std::uint64_t seed);
// Bundle on the domain (relabeled) manifold obtained by pulling b1 back along iso.
HermitianBundle pullback_bundle(const StructureIso& iso, const HermitianBundle& b1,
                                const DiscreteManifold& m2);
// Checks that psi preserves edges, lengths, conductances and volumes exactly.
bool iso_is_isometry(const StructureIso& iso, const DiscreteManifold& m2, const DiscreteManifold& m1);
Section pullback_section(const StructureIso& iso, const Section& u, int rank);
// Block matrix of the pullback: (Psi^* u) = matrix * u.
Eigen::MatrixXcd pullback_matrix(const StructureIso& iso, int rank);

cplx holonomy_trace(const HermitianBundle& b, const std::vector<int>& loop);

// Basis of elementary plaquette and axis loops on a torus grid.
std::vector<std::vector<int>> torus_loops(int nx, int ny);

} // namespace fcl
