#pragma once

#include "fcl/operator.hpp"

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace fcl {

// Uniform grid t_k = k*dt, k = 0..steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t_max, double dt);
    static TimeGrid with_steps(double dt, int steps);

    double dt() const { return dt_; }
    int steps() const { return n_; }
    int size() const { return n_ + 1; }
    double t(int k) const { return k * dt_; }
    double t_max() const { return n_ * dt_; }
    // Index k with t(k) == t up to roundoff, or throws.
    int index_of(double t) const;

private:
    double dt_ = 1.0;
    int n_ = 0;
};

// Column k holds the section at grid time t_k.
using TimeSection = Eigen::MatrixXcd;

// Stumpff-type series c_k(x) = sum_j (-x)^j / (k+2j)!.
double stumpff(int k, double x);
// Wave kernel G(t,lambda) = sin(t sqrt(lambda))/sqrt(lambda) with the sinh and t branches.
double wave_G(double t, double lambda);
// k-th causal time antiderivative of G: tau^{k+1} c_{k+1}(lambda tau^2), zero for tau <= 0.
double wave_G_antiderivative(int k, double tau, double lambda);
// cos(t sqrt(lambda)) with the cosh branch.
double wave_C(double t, double lambda);

Section heat_apply(const SpectralOperator& op, double t, const Section& u);
Section wave_kernel_apply(const SpectralOperator& op, double t, const Section& u);
Section wave_cos_apply(const SpectralOperator& op, double t, const Section& u);

TimeSection duhamel_solve(const SpectralOperator& op, const TimeSection& f, const TimeGrid& grid);

struct DuhamelResidual {
    double max_residual = 0.0; // max over interior nodes of ||(d_t^2 + P)w - f||
    double scale = 0.0;        // max_n (||f''|| + ||P f|| + ||P^2 w||)
    double bound = 0.0;        // 10 * dt^2 * scale
};
// Residual of the central-difference wave equation at interior grid nodes.
DuhamelResidual duhamel_residual(const SpectralOperator& op, const TimeSection& f, const TimeSection& w,
                                 const TimeGrid& grid);

// Samples a source function f(t) on the grid.
TimeSection sample_source(const std::function<Section(double)>& f, const TimeGrid& grid);

// Removes the kernel part, throwing if it exceeds rel_tol of the input norm.
Section project_off_kernel(const SpectralOperator& op, const Section& f, double rel_tol = 1e-8);
Section fractional_inverse_spectral(const SpectralOperator& op, double s, const Section& f);
// P^s on Ker(P)^perp (kernel modes map to zero).
Section fractional_power(const SpectralOperator& op, double s, const Section& u);

struct QuadConfig {
    int nodes = 64;            // Gauss-Legendre nodes per panel
    double tail_tol = 1e-12;   // tail truncation T_cut = -ln(tail_tol)/lambda_min_plus
    double t_cut_override = 0; // used when > 0
    double target = 1e-6;      // relative error target for the convergence flag
};

struct QuadResult {
    Section value;
    double error_estimate = 0.0; // relative, from a half-node comparison
    int panels = 0;
    int evaluations = 0;
    bool converged = false;
};

// P^{-s} f = Gamma(s)^{-1} int_0^inf t^{s-1} e^{-tP} f dt by panelled Gauss-Legendre.
QuadResult fractional_inverse_quadrature(const SpectralOperator& op, double s, const Section& f,
                                         const QuadConfig& cfg = {});
// Scalar version on a single eigenvalue, for checks.
double fractional_inverse_quadrature_scalar(double lambda, double s, double lambda_max, double lambda_min_plus,
                                            const QuadConfig& cfg = {});

// (pi t)^{-1/2} int_0^inf e^{-s^2/4t} cos(s sqrt(lambda)) ds by composite Gauss-Legendre.
double gaussian_transmutation(double t, double lambda);
// (4 pi^{1/2} t^{3/2})^{-1} int_0^inf e^{-s/4t} G(s,lambda) ds, the integrated-by-parts variant, by composite Gauss-Legendre.
double printed_transmutation(double t, double lambda);

struct TransmutationReport {
    double gaussian_residual = 0.0; // ||e^{-tP}u - gaussian form|| / ||e^{-tP}u||
    double printed_residual = 0.0;  // same for the printed form
    double max_mode_error = 0.0;    // max_k |e^{-t lambda_k} - gaussian(t, lambda_k)|
};
TransmutationReport transmutation_residual(const SpectralOperator& op, double t, const Section& u);

// E = ||u_t||^2 + <Pu,u> for u(t) = cos(t sqrt P) u0 + G(t,P) u1.
double wave_energy(const SpectralOperator& op, const Section& u0, const Section& u1, double t);

} // namespace fcl
