#include "fcl/operator.hpp"

#include <cmath>
#include <sstream>

namespace fcl {

Eigen::MatrixXcd assemble_matrix(const HermitianBundle& b)
{
    const auto& m = b.manifold();
    const int r = b.rank(), n = m.num_vertices();
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(n * r, n * r);
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(r, r);
    for (int e = 0; e < m.num_edges(); ++e) {
        const Edge& ed = m.edge(e);
        const Eigen::MatrixXcd& U = b.edge_transport(e);
        const double w = ed.conductance;
        P.block(ed.a * r, ed.a * r, r, r) += (w / m.volume(ed.a)) * I;
        P.block(ed.b * r, ed.b * r, r, r) += (w / m.volume(ed.b)) * I;
        P.block(ed.a * r, ed.b * r, r, r) -= (w / m.volume(ed.a)) * U;
        P.block(ed.b * r, ed.a * r, r, r) -= (w / m.volume(ed.b)) * U.adjoint();
    }
    for (int x = 0; x < n; ++x)
        P.block(x * r, x * r, r, r) += b.potential(x);
    return P;
}

std::vector<int> region_indices(const Region& u, int rank)
{
    std::vector<int> idx;
    idx.reserve(u.size() * rank);
    for (int x : u.vertices())
        for (int a = 0; a < rank; ++a)
            idx.push_back(x * rank + a);
    return idx;
}

SpectralOperator::SpectralOperator(const HermitianBundle& b, double kernel_threshold)
    : b_(b), thresh_(kernel_threshold)
{
    P_ = assemble_matrix(b_);
    const int r = b_.rank(), n = b_.manifold().num_vertices(), d = n * r;
    sqrt_mu_.resize(d);
    for (int x = 0; x < n; ++x)
        for (int a = 0; a < r; ++a)
            sqrt_mu_(x * r + a) = std::sqrt(b_.manifold().volume(x));

    Eigen::MatrixXcd H = sqrt_mu_.asDiagonal() * P_ * sqrt_mu_.cwiseInverse().asDiagonal();
    Eigen::MatrixXcd Hs = 0.5 * (H + H.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Hs);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("assemble: eigensolver failed");
    lam_ = es.eigenvalues();
    Q_ = es.eigenvectors();
    V_ = sqrt_mu_.cwiseInverse().asDiagonal() * Q_;

    const double cut = thresh_ * std::max(1.0, lambda_max());
    if (lam_(0) < -cut) {
        std::ostringstream os;
        os << "assemble: operator is not nonnegative (lambda_min = " << lam_(0) << ")";
        throw NegativeSpectrumError(os.str(), lam_(0));
    }
    kernel_.assign(d, 0);
    for (int k = 0; k < d; ++k)
        kernel_[k] = lam_(k) < cut ? 1 : 0;
}

double SpectralOperator::lambda_min_plus() const
{
    for (int k = 0; k < dim(); ++k)
        if (!kernel_[k])
            return lam_(k);
    throw std::runtime_error("lambda_min_plus: operator is zero");
}

int SpectralOperator::kernel_dim() const
{
    int c = 0;
    for (char k : kernel_)
        c += k;
    return c;
}

Eigen::VectorXcd SpectralOperator::to_modes(const Section& u) const
{
    return Q_.adjoint() * sqrt_mu_.cwiseProduct(u);
}

Section SpectralOperator::from_modes(const Eigen::VectorXcd& c) const
{
    return sqrt_mu_.cwiseInverse().cwiseProduct(Q_ * c);
}

Section SpectralOperator::apply_function(const ScalarFn& phi, const Section& u, bool exclude_kernel) const
{
    if (u.size() != dim())
        throw std::invalid_argument("apply_function: dimension mismatch");
    Eigen::VectorXcd c = to_modes(u);
    for (int k = 0; k < dim(); ++k) {
        if (exclude_kernel && kernel_[k]) {
            c(k) = 0.0;
            continue;
        }
        double v = phi(lam_(k));
        if (!std::isfinite(v))
            throw std::domain_error("apply_function: function is singular on the spectrum");
        c(k) *= v;
    }
    return from_modes(c);
}

Eigen::MatrixXcd SpectralOperator::function_matrix(const ScalarFn& phi, bool exclude_kernel) const
{
    Eigen::VectorXd f(dim());
    for (int k = 0; k < dim(); ++k) {
        if (exclude_kernel && kernel_[k]) {
            f(k) = 0.0;
            continue;
        }
        f(k) = phi(lam_(k));
        if (!std::isfinite(f(k)))
            throw std::domain_error("function_matrix: function is singular on the spectrum");
    }
    Eigen::MatrixXcd QF = Q_ * f.asDiagonal();
    return sqrt_mu_.cwiseInverse().asDiagonal() * (QF * Q_.adjoint()) * sqrt_mu_.asDiagonal();
}

Eigen::MatrixXcd SpectralOperator::kernel_block(const ScalarFn& phi, const Region& rows, const Region& cols,
                                                bool exclude_kernel) const
{
    const int r = rank();
    auto ri = region_indices(rows, r), ci = region_indices(cols, r);
    Eigen::VectorXd f(dim());
    for (int k = 0; k < dim(); ++k) {
        f(k) = (exclude_kernel && kernel_[k]) ? 0.0 : phi(lam_(k));
        if (!std::isfinite(f(k)))
            throw std::domain_error("kernel_block: function is singular on the spectrum");
    }
    Eigen::MatrixXcd A(ri.size(), dim()), B(ci.size(), dim());
    for (std::size_t i = 0; i < ri.size(); ++i)
        A.row(i) = Q_.row(ri[i]) / sqrt_mu_(ri[i]);
    for (std::size_t i = 0; i < ci.size(); ++i)
        B.row(i) = Q_.row(ci[i]) / sqrt_mu_(ci[i]);
    return (A * f.asDiagonal()) * B.adjoint();
}

KernelProjector SpectralOperator::kernel_projector() const
{
    KernelProjector kp;
    kp.kernel_dim = kernel_dim();
    Eigen::VectorXd f(dim());
    for (int k = 0; k < dim(); ++k)
        f(k) = kernel_[k] ? 1.0 : 0.0;
    Eigen::MatrixXcd QF = Q_ * f.asDiagonal();
    kp.kernel = sqrt_mu_.cwiseInverse().asDiagonal() * (QF * Q_.adjoint()) * sqrt_mu_.asDiagonal();
    kp.complement = Eigen::MatrixXcd::Identity(dim(), dim()) - kp.kernel;
    return kp;
}

} // namespace fcl
