#include "fcl/wave_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fcl {

namespace {

Eigen::VectorXd block_volumes(const std::vector<double>& vol, int rank)
{
    Eigen::VectorXd m(vol.size() * rank);
    for (std::size_t x = 0; x < vol.size(); ++x)
        for (int a = 0; a < rank; ++a)
            m(x * rank + a) = vol[x];
    return m;
}

} // namespace

std::vector<Eigen::MatrixXcd> hat_responses(const WaveMapData& d)
{
    const int bd = d.block_dim();
    std::vector<Eigen::MatrixXcd> H(d.steps + 1, Eigen::MatrixXcd::Zero(bd, bd));
    for (int j = 0; j <= d.steps; ++j) {
        if (j >= 1)
            H[j] += d.moments[j - 1][1];
        if (j <= d.steps - 1)
            H[j] += d.moments[j][0] - d.moments[j][1];
    }
    return H;
}

Eigen::MatrixXcd wave_map_apply(const WaveMapData& d, const Eigen::MatrixXcd& f_u)
{
    const int bd = d.block_dim(), nt = d.steps + 1;
    if (f_u.rows() != bd || f_u.cols() != nt)
        throw std::invalid_argument("wave_map_apply: source does not match map data");
    const Eigen::VectorXcd mu = block_volumes(d.volumes, d.rank).cast<cplx>();
    Eigen::MatrixXcd mf = mu.asDiagonal() * f_u;
    auto H = hat_responses(d);
    Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(bd, nt);
    for (int n = 1; n < nt; ++n) {
        Eigen::VectorXcd acc = d.moments[n - 1][1] * mf.col(0);
        for (int m = 1; m <= n; ++m)
            acc += H[n - m] * mf.col(m);
        w.col(n) = acc;
    }
    return w;
}

double GridPoly::eval(double tau, double dt) const
{
    const double q = tau / dt;
    int k = static_cast<int>(std::floor(q));
    if (k == k1() && q == k)
        k -= 1;
    if (!has(k))
        return 0.0;
    const double x = q - k;
    const auto& p = piece(k);
    return (((p[4] * x + p[3]) * x + p[2]) * x + p[1]) * x + p[0];
}

namespace gridpoly {

namespace {

using Coef = std::array<double, 5>;

inline double peval(const Coef& p, double x) { return (((p[4] * x + p[3]) * x + p[2]) * x + p[1]) * x + p[0]; }

// Inverse Vandermonde for the sample points 0, 1/4, 1/2, 3/4, 1.
const Eigen::Matrix<double, 5, 5>& sample_inverse()
{
    static const Eigen::Matrix<double, 5, 5> inv = [] {
        Eigen::Matrix<double, 5, 5> V;
        for (int s = 0; s < 5; ++s) {
            double x = 0.25 * s;
            for (int j = 0; j < 5; ++j)
                V(s, j) = std::pow(x, j);
        }
        return Eigen::Matrix<double, 5, 5>(V.inverse());
    }();
    return inv;
}

constexpr double kG3x[3] = {-0.7745966692414833770359, 0.0, 0.7745966692414833770359};
constexpr double kG3w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

// int_lo^hi a(xi) b(xi + shift) dxi, exact for total degree <= 5
inline double prod_integral(const Coef& a, const Coef& b, double lo, double hi, double shift)
{
    if (hi <= lo)
        return 0.0;
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    double s = 0.0;
    for (int q = 0; q < 3; ++q) {
        double xi = c + h * kG3x[q];
        s += kG3w[q] * peval(a, xi) * peval(b, xi + shift);
    }
    return s * h;
}

} // namespace

GridPoly hat(int m, int steps)
{
    GridPoly p;
    int lo = std::max(m - 1, 0), hi = std::min(m, steps - 1);
    if (hi < lo)
        return p;
    p.k0 = lo;
    for (int k = lo; k <= hi; ++k) {
        if (k == m - 1)
            p.c.push_back({0.0, 1.0, 0.0, 0.0, 0.0});
        else
            p.c.push_back({1.0, -1.0, 0.0, 0.0, 0.0});
    }
    return p;
}

GridPoly truncate(const GridPoly& p, int kmax)
{
    GridPoly q;
    q.k0 = p.k0;
    for (int k = p.k0; k < std::min(p.k1(), kmax); ++k)
        q.c.push_back(p.piece(k));
    return q;
}

GridPoly antiderivative(const GridPoly& p, double dt, int kend)
{
    GridPoly q;
    q.k0 = 0;
    double acc = 0.0;
    for (int k = 0; k < kend; ++k) {
        Coef r{acc, 0.0, 0.0, 0.0, 0.0};
        if (p.has(k)) {
            const Coef& c = p.piece(k);
            if (c[4] != 0.0)
                throw std::logic_error("gridpoly::antiderivative: degree too high");
            double full = 0.0;
            for (int j = 0; j < 4; ++j) {
                r[j + 1] = dt * c[j] / (j + 1);
                full += dt * c[j] / (j + 1);
            }
            acc += full;
        }
        q.c.push_back(r);
    }
    return q;
}

GridPoly reflect(const GridPoly& p, int steps)
{
    GridPoly q;
    if (p.c.empty())
        return q;
    q.k0 = steps - p.k1();
    static const int binom[5][5] = {{1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};
    for (int kp = q.k0; kp < steps - p.k0; ++kp) {
        const Coef& c = p.piece(steps - 1 - kp);
        Coef r{};
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i <= j; ++i)
                r[i] += c[j] * binom[j][i] * ((i % 2) ? -1.0 : 1.0);
        q.c.push_back(r);
    }
    return q;
}

GridPoly add(const GridPoly& a, const GridPoly& b, double sb)
{
    if (a.c.empty() && b.c.empty())
        return {};
    int lo, hi;
    if (a.c.empty()) {
        lo = b.k0;
        hi = b.k1();
    } else if (b.c.empty()) {
        lo = a.k0;
        hi = a.k1();
    } else {
        lo = std::min(a.k0, b.k0);
        hi = std::max(a.k1(), b.k1());
    }
    GridPoly q;
    q.k0 = lo;
    for (int k = lo; k < hi; ++k) {
        Coef r{};
        if (a.has(k))
            r = a.piece(k);
        if (b.has(k))
            for (int j = 0; j < 5; ++j)
                r[j] += sb * b.piece(k)[j];
        q.c.push_back(r);
    }
    return q;
}

GridPoly correlate(const GridPoly& a, const GridPoly& b, double dt, int kmin, int kmax)
{
    GridPoly q;
    if (a.c.empty() || b.c.empty())
        return q;
    const int lo = std::max(kmin, a.k0 - b.k1()), hi = std::min(kmax, a.k1() - b.k0 + 1);
    if (hi <= lo)
        return q;
    q.k0 = lo;
    const auto& Vinv = sample_inverse();
    for (int k = lo; k < hi; ++k) {
        Eigen::Matrix<double, 5, 1> vals;
        for (int s = 0; s < 5; ++s) {
            const double xs = 0.25 * s;
            double v = 0.0;
            const int ilo = std::max(a.k0, b.k0 + k), ihi = std::min(a.k1(), b.k1() + k + 1);
            for (int i = ilo; i < ihi; ++i) {
                const Coef& ai = a.piece(i);
                if (b.has(i - k - 1))
                    v += prod_integral(ai, b.piece(i - k - 1), 0.0, xs, 1.0 - xs);
                if (b.has(i - k))
                    v += prod_integral(ai, b.piece(i - k), xs, 1.0, -xs);
            }
            vals(s) = dt * v;
        }
        Eigen::Matrix<double, 5, 1> c = Vinv * vals;
        q.c.push_back({c(0), c(1), c(2), c(3), c(4)});
    }
    return q;
}

GridPoly tail_integral(const GridPoly& p, double dt, int kmax)
{
    GridPoly q;
    if (p.c.empty())
        return q;
    auto full = [&](int k) {
        const Coef& c = p.piece(k);
        if (c[4] != 0.0 && std::abs(c[4]) > 1e-12 * (std::abs(c[0]) + std::abs(c[1]) + std::abs(c[2]) + std::abs(c[3])))
            throw std::logic_error("gridpoly::tail_integral: degree too high");
        return dt * (c[0] + c[1] / 2 + c[2] / 3 + c[3] / 4);
    };
    double tail = 0.0;
    for (int k = std::max(kmax, p.k0); k < p.k1(); ++k)
        tail += full(k);
    const int top = std::min(kmax, p.k1());
    if (top <= 0)
        return q;
    q.k0 = 0;
    q.c.resize(top);
    for (int k = top - 1; k >= 0; --k) {
        Coef r{};
        if (p.has(k)) {
            const Coef& c = p.piece(k);
            const double F = full(k);
            r[0] = F + tail;
            for (int j = 0; j < 4; ++j)
                r[j + 1] = -dt * c[j] / (j + 1);
            tail += F;
        } else {
            r[0] = tail;
        }
        q.c[k] = r;
    }
    return q;
}

} // namespace gridpoly

BlagoEngine::BlagoEngine(const WaveMapData& d, double T, int node_lo, int node_hi)
{
    const double q = T / d.dt;
    const int nT = static_cast<int>(std::llround(q));
    if (nT < 1 || std::abs(q - nT) > 1e-9 * q)
        throw std::invalid_argument("BlagoEngine: T must be a multiple of the map time step");
    const int N = 2 * nT;
    if (N > d.steps)
        throw std::invalid_argument("BlagoEngine: map data does not cover [0, 2T]");
    steps_ = N;
    lo_ = node_lo;
    hi_ = node_hi < 0 ? N - 1 : node_hi;
    if (lo_ < 0 || hi_ > N || hi_ < lo_)
        throw std::invalid_argument("BlagoEngine: bad node range");
    bd_ = d.block_dim();
    const double D = d.dt;
    const int nn = hi_ - lo_ + 1;

    std::vector<GridPoly> a(nn), phi(nn), phiR(nn), psi(nn);
    for (int i = 0; i < nn; ++i) {
        const int n = lo_ + i;
        phi[i] = gridpoly::hat(n, N);
        a[i] = gridpoly::truncate(phi[i], nT);
        phiR[i] = gridpoly::hat(N - n, N);
        GridPoly Phi = gridpoly::antiderivative(phi[i], D, N);
        psi[i] = gridpoly::truncate(gridpoly::add(gridpoly::reflect(Phi, N), Phi, -1.0), nT);
    }

    // cumulative zeroth moments: cs[k] = int_0^{k dt} K
    std::vector<Eigen::MatrixXcd> cs(N + 1, Eigen::MatrixXcd::Zero(bd_, bd_));
    for (int k = 0; k < N; ++k)
        cs[k + 1] = cs[k] + d.moments[k][0];

    const Eigen::VectorXd mu = block_volumes(d.volumes, d.rank);
    G_ = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(nn) * bd_, static_cast<Eigen::Index>(nn) * bd_);
    Eigen::MatrixXcd B(bd_, bd_);
    for (int in = 0; in < nn; ++in) {
        for (int im = 0; im < nn; ++im) {
            GridPoly rA = gridpoly::correlate(phiR[im], a[in], D, 0, N);
            GridPoly rB = gridpoly::correlate(a[in], phi[im], D, 0, N);
            GridPoly R = gridpoly::tail_integral(gridpoly::add(rA, rB, -1.0), D, N);
            GridPoly rC = gridpoly::correlate(psi[im], phi[in], D, 0, N);
            GridPoly qd = gridpoly::add(R, rC, -1.0);

            double scale = 0.0;
            for (const auto& c : qd.c)
                for (double v : c)
                    scale = std::max(scale, std::abs(v));
            B.setZero();
            const double eps = 1e-14 * scale;
            int k = std::max(qd.k0, 0);
            const int kend = std::min(qd.k1(), N);
            while (k < kend) {
                const auto& c = qd.piece(k);
                const bool flat = std::abs(c[1]) <= eps && std::abs(c[2]) <= eps && std::abs(c[3]) <= eps &&
                                  std::abs(c[4]) <= eps;
                if (flat) {
                    int k2 = k + 1;
                    while (k2 < kend) {
                        const auto& c2 = qd.piece(k2);
                        if (std::abs(c2[0] - c[0]) > eps || std::abs(c2[1]) > eps || std::abs(c2[2]) > eps ||
                            std::abs(c2[3]) > eps || std::abs(c2[4]) > eps)
                            break;
                        ++k2;
                    }
                    if (c[0] != 0.0)
                        B += c[0] * (cs[k2] - cs[k]);
                    k = k2;
                } else {
                    for (int j = 0; j < 5; ++j)
                        if (c[j] != 0.0)
                            B += c[j] * d.moments[k][j];
                    ++k;
                }
            }
            G_.block(static_cast<Eigen::Index>(in) * bd_, static_cast<Eigen::Index>(im) * bd_, bd_, bd_) =
                0.5 * (mu.asDiagonal() * B * mu.asDiagonal());
        }
    }
    const double gmax = G_.cwiseAbs().maxCoeff();
    herm_defect_ = gmax > 0.0 ? (G_ - G_.adjoint()).cwiseAbs().maxCoeff() / gmax : 0.0;
    Eigen::MatrixXcd Gs = 0.5 * (G_ + G_.adjoint());
    G_ = Gs;
}

Eigen::VectorXcd BlagoEngine::vectorize(const Eigen::MatrixXcd& f_u) const
{
    if (f_u.rows() != bd_ || f_u.cols() < hi_ + 1)
        throw std::invalid_argument("BlagoEngine: source shape does not match map data");
    for (Eigen::Index n = 0; n < f_u.cols(); ++n)
        if ((n < lo_ || n > hi_) && f_u.col(n).squaredNorm() > 0.0)
            throw std::invalid_argument("BlagoEngine: source support outside the admissible time window");
    Eigen::VectorXcd v(vec_dim());
    for (int n = lo_; n <= hi_; ++n)
        v.segment(static_cast<Eigen::Index>(n - lo_) * bd_, bd_) = f_u.col(n);
    return v;
}

cplx BlagoEngine::inner(const Eigen::MatrixXcd& f_u, const Eigen::MatrixXcd& h_u) const
{
    return vectorize(f_u).dot(G_ * vectorize(h_u));
}

Eigen::MatrixXcd BlagoEngine::gram(const std::vector<Eigen::MatrixXcd>& sources) const
{
    Eigen::MatrixXcd S(vec_dim(), sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i)
        S.col(i) = vectorize(sources[i]);
    return gram_coeffs(S);
}

cplx blago_inner(const WaveMapData& d, const Eigen::MatrixXcd& f_u, const Eigen::MatrixXcd& h_u, double T)
{
    return BlagoEngine(d, T).inner(f_u, h_u);
}

Eigen::MatrixXcd gram_matrix(const WaveMapData& d, const std::vector<Eigen::MatrixXcd>& sources, double T)
{
    return BlagoEngine(d, T).gram(sources);
}

} // namespace fcl
