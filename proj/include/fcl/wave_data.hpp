#pragma once

#include "fcl/manifold.hpp"

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

namespace fcl {

using cplx = std::complex<double>;

// Static fractional map f -> P^{-s} f |_U, stored as its Hermitian kernel block
// so that (L f)(x) = sum_y K(x,y) mu_y f(y).
struct FracMapData {
    Region region;
    int rank = 1;
    double order = 0.5;
    std::vector<double> volumes;
    Eigen::MatrixXcd kernel;
};

// Time-sampled wave map on U. Samples K(k dt) and per-interval moments
// moments[k][j] = int_{k dt}^{(k+1) dt} x^j K(tau) dtau, x = (tau - k dt)/dt.
struct WaveMapData {
    Region region;
    int rank = 1;
    std::vector<double> volumes;
    double dt = 1.0;
    int steps = 0; // grid covers [0, steps*dt]
    std::vector<Eigen::MatrixXcd> samples;
    std::vector<std::array<Eigen::MatrixXcd, 5>> moments;

    int block_dim() const { return region.size() * rank; }
    double t_max() const { return steps * dt; }
};

// Response on U at every grid node to a U-supported source given by nodal values (block_dim x steps+1),
// piecewise linear in time.
Eigen::MatrixXcd wave_map_apply(const WaveMapData& d, const Eigen::MatrixXcd& f_u);
// Hat responses H[j] so that w(t_n) = sum_m H[n-m] M f_m for m >= 1.
std::vector<Eigen::MatrixXcd> hat_responses(const WaveMapData& d);

// Piecewise polynomial on grid intervals: piece i covers [(k0+i) dt, (k0+i+1) dt]
// and equals sum_j c[i][j] x^j with local x in [0,1].
struct GridPoly {
    int k0 = 0;
    std::vector<std::array<double, 5>> c;

    int k1() const { return k0 + static_cast<int>(c.size()); }
    bool has(int k) const { return k >= k0 && k < k1(); }
    const std::array<double, 5>& piece(int k) const { return c[k - k0]; }
    double eval(double tau, double dt) const;
};

namespace gridpoly {
GridPoly hat(int m, int steps);
GridPoly truncate(const GridPoly& p, int kmax);
GridPoly antiderivative(const GridPoly& p, double dt, int kend);
GridPoly reflect(const GridPoly& p, int steps);
GridPoly add(const GridPoly& a, const GridPoly& b, double sb);
// corr(a,b)(tau) = int a(t) b(t - tau) dt on lag pieces kmin..kmax-1
GridPoly correlate(const GridPoly& a, const GridPoly& b, double dt, int kmin, int kmax);
// R(tau) = int_tau^inf p on pieces 0..kmax-1
GridPoly tail_integral(const GridPoly& p, double dt, int kmax);
} // namespace gridpoly

// Gram engine for <w^f(T), w^h(T)> computed from wave map data only.
class BlagoEngine {
public:
    BlagoEngine(const WaveMapData& d, double T, int node_lo = 1, int node_hi = -1);

    int node_lo() const { return lo_; }
    int node_hi() const { return hi_; }
    int vec_dim() const { return (hi_ - lo_ + 1) * bd_; }
    double hermitian_defect() const { return herm_defect_; }
    // Elementary Gram over (node, U-vertex, fiber) with node-major stacking.
    const Eigen::MatrixXcd& elementary() const { return G_; }

    Eigen::VectorXcd vectorize(const Eigen::MatrixXcd& f_u) const;
    cplx inner(const Eigen::MatrixXcd& f_u, const Eigen::MatrixXcd& h_u) const;
    Eigen::MatrixXcd gram(const std::vector<Eigen::MatrixXcd>& sources) const;
    // Gram of sources given directly as coefficient columns over the elementary basis.
    Eigen::MatrixXcd gram_coeffs(const Eigen::MatrixXcd& S) const { return S.adjoint() * G_ * S; }

private:
    int lo_, hi_, bd_, steps_;
    Eigen::MatrixXcd G_;
    double herm_defect_ = 0.0;
};

cplx blago_inner(const WaveMapData& d, const Eigen::MatrixXcd& f_u, const Eigen::MatrixXcd& h_u, double T);
Eigen::MatrixXcd gram_matrix(const WaveMapData& d, const std::vector<Eigen::MatrixXcd>& sources, double T);

} // namespace fcl
