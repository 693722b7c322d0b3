#pragma once

#include "fcl/bundle.hpp"

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace fcl {

using ScalarFn = std::function<double(double)>;

// Raised when the assembled operator has spectrum below -tol.
struct NegativeSpectrumError : std::runtime_error {
    double lambda_min;
    NegativeSpectrumError(const std::string& msg, double lmin) : std::runtime_error(msg), lambda_min(lmin) {}
};

struct KernelProjector {
    Eigen::MatrixXcd kernel;     // projector onto Ker(P)
    Eigen::MatrixXcd complement; // projector onto Ker(P)^perp
    int kernel_dim = 0;
};

// P = connection Laplacian + potential with full eigendecomposition.
class SpectralOperator {
public:
    SpectralOperator() = default;
    explicit SpectralOperator(const HermitianBundle& b, double kernel_threshold = 1e-10);

    const HermitianBundle& bundle() const { return b_; }
    int dim() const { return static_cast<int>(lam_.size()); }
    int rank() const { return b_.rank(); }
    const Eigen::MatrixXcd& matrix() const { return P_; }
    const Eigen::VectorXd& eigenvalues() const { return lam_; }
    // mu-orthonormal eigensections as columns
    const Eigen::MatrixXcd& eigensections() const { return V_; }
    // Orthonormal eigenvectors of the symmetrized matrix M^{1/2} P M^{-1/2}
    const Eigen::MatrixXcd& sym_eigenvectors() const { return Q_; }
    const Eigen::VectorXd& sqrt_volumes() const { return sqrt_mu_; }
    double kernel_threshold() const { return thresh_; }
    double lambda_max() const { return lam_(lam_.size() - 1); }
    double lambda_min() const { return lam_(0); }
    // Smallest eigenvalue outside the kernel.
    double lambda_min_plus() const;
    bool is_kernel_mode(int k) const { return kernel_[k] != 0; }
    int kernel_dim() const;

    Section apply(const Section& u) const { return P_ * u; }
    // phi(P)u; kernel modes are dropped when exclude_kernel is set.
    Section apply_function(const ScalarFn& phi, const Section& u, bool exclude_kernel = false) const;
    Eigen::MatrixXcd function_matrix(const ScalarFn& phi, bool exclude_kernel = false) const;
    // Schwartz kernel block K with (phi(P)u)(x) = sum_y K(x,y) mu_y u(y), rows/cols restricted.
    Eigen::MatrixXcd kernel_block(const ScalarFn& phi, const Region& rows, const Region& cols,
                                  bool exclude_kernel = false) const;
    // Modal coefficients c_k = <V_k, u> and their inverse.
    Eigen::VectorXcd to_modes(const Section& u) const;
    Section from_modes(const Eigen::VectorXcd& c) const;
    KernelProjector kernel_projector() const;

private:
    HermitianBundle b_;
    Eigen::MatrixXcd P_;
    Eigen::VectorXd lam_;
    Eigen::MatrixXcd Q_;
    Eigen::MatrixXcd V_;
    Eigen::VectorXd sqrt_mu_;
    std::vector<char> kernel_;
    double thresh_ = 1e-10;
};

// Dense matrix of P acting on section coefficient vectors.
Eigen::MatrixXcd assemble_matrix(const HermitianBundle& b);

// Row indices (vertex-major, fiber-minor) of a region inside a section vector.
std::vector<int> region_indices(const Region& u, int rank);

} // namespace fcl
