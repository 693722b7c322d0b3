#include "fcl/s2s.hpp"
#include "fcl/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fcl {

namespace {

Eigen::MatrixXcd region_rows(const SpectralOperator& op, const Region& u)
{
    auto idx = region_indices(u, op.rank());
    Eigen::MatrixXcd A(idx.size(), op.dim());
    for (std::size_t i = 0; i < idx.size(); ++i)
        A.row(i) = op.eigensections().row(idx[i]);
    return A;
}

std::vector<double> region_volumes(const SpectralOperator& op, const Region& u)
{
    std::vector<double> v;
    for (int x : u.vertices())
        v.push_back(op.bundle().manifold().volume(x));
    return v;
}

Eigen::VectorXd block_volumes(const std::vector<double>& vol, int rank)
{
    Eigen::VectorXd m(vol.size() * rank);
    for (std::size_t x = 0; x < vol.size(); ++x)
        for (int a = 0; a < rank; ++a)
            m(x * rank + a) = vol[x];
    return m;
}

} // namespace

FracMapData frac_map_assemble(const SpectralOperator& op, const Region& u, double s)
{
    if (u.empty())
        throw std::invalid_argument("frac_map_assemble: empty region");
    if (!(s > 0.0 && s < 1.0))
        throw std::invalid_argument("frac_map_assemble: order must lie in (0,1)");
    FracMapData d;
    d.region = u;
    d.rank = op.rank();
    d.order = s;
    d.volumes = region_volumes(op, u);
    d.kernel = op.kernel_block([s](double l) { return std::pow(l, -s); }, u, u, true);
    return d;
}

Eigen::VectorXcd frac_map_apply(const FracMapData& d, const Eigen::VectorXcd& f_u)
{
    if (f_u.size() != d.kernel.cols())
        throw std::invalid_argument("frac_map_apply: dimension mismatch");
    return d.kernel * block_volumes(d.volumes, d.rank).cast<cplx>().cwiseProduct(f_u);
}

WaveMapData wave_map_assemble(const SpectralOperator& op, const Region& u, const TimeGrid& grid)
{
    if (u.empty())
        throw std::invalid_argument("wave_map_assemble: empty region");
    WaveMapData d;
    d.region = u;
    d.rank = op.rank();
    d.volumes = region_volumes(op, u);
    d.dt = grid.dt();
    d.steps = grid.steps();
    const Eigen::MatrixXcd A = region_rows(op, u);
    const Eigen::VectorXd& lam = op.eigenvalues();
    const int nm = op.dim();
    const double D = d.dt;

    auto block = [&](const Eigen::VectorXd& g) -> Eigen::MatrixXcd {
        Eigen::MatrixXcd Ag = A * g.asDiagonal();
        Eigen::MatrixXcd K = Ag * A.adjoint();
        return Eigen::MatrixXcd(0.5 * (K + K.adjoint()));
    };

    d.samples.reserve(d.steps + 1);
    for (int k = 0; k <= d.steps; ++k) {
        Eigen::VectorXd g(nm);
        for (int i = 0; i < nm; ++i)
            g(i) = wave_G(k * D, lam(i));
        d.samples.push_back(block(g));
    }

    const int ngl = 12 + static_cast<int>(std::ceil(4.0 * std::sqrt(std::max(0.0, op.lambda_max())) * D));
    const GaussRule& gl = gauss_legendre(ngl);
    d.moments.resize(d.steps);
    for (int k = 0; k < d.steps; ++k) {
        std::array<Eigen::VectorXd, 5> m;
        for (auto& v : m)
            v = Eigen::VectorXd::Zero(nm);
        for (int q = 0; q < ngl; ++q) {
            const double x = 0.5 * (gl.x[q] + 1.0), w = 0.5 * gl.w[q] * D;
            const double tau = (k + x) * D;
            double xp[5] = {1.0, x, x * x, x * x * x, x * x * x * x};
            for (int i = 0; i < nm; ++i) {
                const double g = wave_G(tau, lam(i)) * w;
                for (int j = 0; j < 5; ++j)
                    m[j](i) += g * xp[j];
            }
        }
        for (int j = 0; j < 5; ++j)
            d.moments[k][j] = block(m[j]);
    }
    return d;
}

LocalStructure extract_local_structure(const HermitianBundle& b, const Region& u)
{
    const DiscreteManifold& m = b.manifold();
    if (!region_valid(m, u))
        throw std::invalid_argument("extract_local_structure: invalid region");
    LocalStructure ls;
    ls.region = u;
    ls.rank = b.rank();
    for (int x : u.vertices())
        ls.volumes.push_back(m.volume(x));
    for (const Edge& e : m.edges())
        if (u.contains(e.a) || u.contains(e.b))
            ls.edges.push_back(e);
    return ls;
}

Eigen::MatrixXcd restrict_to_region(const Eigen::MatrixXcd& f, const Region& u, int rank, double tol)
{
    auto idx = region_indices(u, rank);
    Eigen::MatrixXcd out(idx.size(), f.cols());
    double inside = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.row(i) = f.row(idx[i]);
        inside += out.row(i).squaredNorm();
    }
    double outside = std::max(0.0, f.squaredNorm() - inside);
    if (std::sqrt(outside) > tol * std::sqrt(f.squaredNorm()) && outside > 0.0)
        throw std::invalid_argument("source is not supported in the observation region");
    return out;
}

Eigen::MatrixXcd extend_from_region(const Eigen::MatrixXcd& f_u, const Region& u, int rank, int nvertices)
{
    auto idx = region_indices(u, rank);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nvertices) * rank, f_u.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(idx[i]) = f_u.row(i);
    return out;
}

double time_average_J(const std::function<double(double)>& phi, double t, double T, int nodes)
{
    if (t < 0.0 || t > 2.0 * T)
        throw std::invalid_argument("time_average_J: t outside [0, 2T]");
    return 0.5 * integrate(phi, t, 2.0 * T - t, nodes);
}

namespace {

int half_steps(double dt, double T, Eigen::Index len)
{
    double q = T / dt;
    int nT = static_cast<int>(std::llround(q));
    if (nT < 1 || std::abs(q - nT) > 1e-9 * q)
        throw std::invalid_argument("time_average_J: T is not a multiple of dt");
    if (len != 2 * nT + 1)
        throw std::invalid_argument("time_average_J: series must cover [0, 2T]");
    return nT;
}

} // namespace

Eigen::VectorXd time_average_J(const Eigen::VectorXd& series, double dt, double T)
{
    const int N = 2 * half_steps(dt, T, series.size());
    Eigen::VectorXd cum(N + 1);
    cum(0) = 0.0;
    for (int k = 0; k < N; ++k)
        cum(k + 1) = cum(k) + 0.5 * dt * (series(k) + series(k + 1));
    Eigen::VectorXd J(N + 1);
    for (int k = 0; k <= N; ++k)
        J(k) = 0.5 * (cum(N - k) - cum(k));
    return J;
}

Eigen::MatrixXcd time_average_J(const Eigen::MatrixXcd& series, double dt, double T)
{
    const int N = 2 * half_steps(dt, T, series.cols());
    Eigen::MatrixXcd cum(series.rows(), N + 1);
    cum.col(0).setZero();
    for (int k = 0; k < N; ++k)
        cum.col(k + 1) = cum.col(k) + 0.5 * dt * (series.col(k) + series.col(k + 1));
    Eigen::MatrixXcd J(series.rows(), N + 1);
    for (int k = 0; k <= N; ++k)
        J.col(k) = 0.5 * (cum.col(N - k) - cum.col(k));
    return J;
}

} // namespace fcl
