#include "fcl/propagators.hpp"
#include "fcl/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fcl {

TimeGrid::TimeGrid(double t_max, double dt) : dt_(dt)
{
    if (!(dt > 0.0) || !(t_max > 0.0))
        throw std::invalid_argument("TimeGrid: dt and t_max must be positive");
    double q = t_max / dt;
    n_ = static_cast<int>(std::llround(q));
    if (n_ < 1 || std::abs(q - n_) > 1e-9 * std::max(1.0, q))
        throw std::invalid_argument("TimeGrid: dt must divide t_max");
}

TimeGrid TimeGrid::with_steps(double dt, int steps)
{
    if (steps < 1)
        throw std::invalid_argument("TimeGrid: need at least one step");
    return TimeGrid(dt * steps, dt);
}

int TimeGrid::index_of(double t) const
{
    double q = t / dt_;
    long k = std::lround(q);
    if (k < 0 || k > n_ || std::abs(q - k) > 1e-9 * std::max(1.0, std::abs(q)))
        throw std::invalid_argument("TimeGrid: time is not a grid node");
    return static_cast<int>(k);
}

double stumpff(int k, double x)
{
    if (k < 0)
        throw std::invalid_argument("stumpff: negative index");
    if (std::abs(x) < 8.0) {
        double fact = 1.0;
        for (int i = 2; i <= k; ++i)
            fact *= i;
        double term = 1.0 / fact, sum = term;
        for (int j = 1; j < 80; ++j) {
            term *= -x / ((k + 2.0 * j - 1.0) * (k + 2.0 * j));
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum))
                break;
        }
        return sum;
    }
    double c0, c1;
    if (x > 0.0) {
        double r = std::sqrt(x);
        c0 = std::cos(r);
        c1 = std::sin(r) / r;
    } else {
        double r = std::sqrt(-x);
        c0 = std::cosh(r);
        c1 = std::sinh(r) / r;
    }
    if (k == 0)
        return c0;
    if (k == 1)
        return c1;
    double ck = (k % 2 == 0) ? c0 : c1;
    double fact = 1.0;
    for (int j = (k % 2 == 0) ? 0 : 1; j + 2 <= k; j += 2) {
        // fact holds j!
        ck = (1.0 / fact - ck) / x;
        fact *= (j + 1.0) * (j + 2.0);
    }
    return ck;
}

double wave_G(double t, double lambda) { return t * stumpff(1, lambda * t * t); }

double wave_C(double t, double lambda) { return stumpff(0, lambda * t * t); }

double wave_G_antiderivative(int k, double tau, double lambda)
{
    if (tau <= 0.0)
        return 0.0;
    return std::pow(tau, k + 1) * stumpff(k + 1, lambda * tau * tau);
}

namespace {

Section modal_scale(const SpectralOperator& op, const Section& u, const std::function<double(double)>& phi)
{
    return op.apply_function(phi, u, false);
}

} // namespace

Section heat_apply(const SpectralOperator& op, double t, const Section& u)
{
    if (t < 0.0)
        throw std::invalid_argument("heat_apply: negative time");
    return modal_scale(op, u, [t](double l) { return std::exp(-t * l); });
}

Section wave_kernel_apply(const SpectralOperator& op, double t, const Section& u)
{
    return modal_scale(op, u, [t](double l) { return wave_G(t, l); });
}

Section wave_cos_apply(const SpectralOperator& op, double t, const Section& u)
{
    return modal_scale(op, u, [t](double l) { return wave_C(t, l); });
}

TimeSection duhamel_solve(const SpectralOperator& op, const TimeSection& f, const TimeGrid& grid)
{
    if (f.rows() != op.dim() || f.cols() != grid.size())
        throw std::invalid_argument("duhamel_solve: source does not match grid or operator");
    const int d = op.dim(), nt = grid.size();
    const double D = grid.dt();
    Eigen::MatrixXcd F = op.sym_eigenvectors().adjoint() * (op.sqrt_volumes().asDiagonal() * f);
    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(d, nt);
    for (int k = 0; k < d; ++k) {
        const double l = op.eigenvalues()(k);
        const double x = l * D * D;
        const double C = stumpff(0, x), S = D * stumpff(1, x);
        const double s1 = D * stumpff(1, x), s2 = D * D * stumpff(2, x), s3 = D * D * D * stumpff(3, x);
        cplx a = 0.0, ap = 0.0;
        for (int n = 0; n + 1 < nt; ++n) {
            cplx cn = F(k, n), slope = (F(k, n + 1) - F(k, n)) / D;
            cplx an = C * a + S * ap + cn * s2 + slope * s3;
            cplx apn = -l * S * a + C * ap + cn * s1 + slope * s2;
            a = an;
            ap = apn;
            W(k, n + 1) = a;
        }
    }
    return op.sqrt_volumes().cwiseInverse().asDiagonal() * (op.sym_eigenvectors() * W);
}

DuhamelResidual duhamel_residual(const SpectralOperator& op, const TimeSection& f, const TimeSection& w,
                                 const TimeGrid& grid)
{
    const HermitianBundle& b = op.bundle();
    const double D = grid.dt();
    DuhamelResidual r;
    for (int n = 1; n + 1 < grid.size(); ++n) {
        Section wn = w.col(n);
        Section Pw = op.apply(wn);
        Section res = (w.col(n + 1) - 2.0 * wn + w.col(n - 1)) / (D * D) + Pw - f.col(n);
        r.max_residual = std::max(r.max_residual, l2_norm(b, res));
        Section fpp = (f.col(n + 1) - 2.0 * f.col(n) + f.col(n - 1)) / (D * D);
        double sc = l2_norm(b, fpp) + l2_norm(b, op.apply(f.col(n))) + l2_norm(b, op.apply(Pw));
        r.scale = std::max(r.scale, sc);
    }
    r.bound = 10.0 * D * D * r.scale;
    return r;
}

TimeSection sample_source(const std::function<Section(double)>& f, const TimeGrid& grid)
{
    Section f0 = f(0.0);
    TimeSection out(f0.size(), grid.size());
    out.col(0) = f0;
    for (int k = 1; k < grid.size(); ++k)
        out.col(k) = f(grid.t(k));
    return out;
}

Section project_off_kernel(const SpectralOperator& op, const Section& f, double rel_tol)
{
    if (f.size() != op.dim())
        throw std::invalid_argument("project_off_kernel: dimension mismatch");
    Eigen::VectorXcd c = op.to_modes(f);
    double total = c.norm(), ker = 0.0;
    for (int k = 0; k < op.dim(); ++k)
        if (op.is_kernel_mode(k)) {
            ker += std::norm(c(k));
            c(k) = 0.0;
        }
    ker = std::sqrt(ker);
    if (total > 0.0 && ker > rel_tol * total)
        throw std::domain_error("source has a kernel component above tolerance");
    return op.from_modes(c);
}

Section fractional_inverse_spectral(const SpectralOperator& op, double s, const Section& f)
{
    if (!(s > 0.0 && s < 1.0))
        throw std::invalid_argument("fractional_inverse_spectral: order must lie in (0,1)");
    Section g = project_off_kernel(op, f);
    return op.apply_function([s](double l) { return std::pow(l, -s); }, g, true);
}

Section fractional_power(const SpectralOperator& op, double s, const Section& u)
{
    return op.apply_function([s](double l) { return std::pow(l, s); }, u, true);
}

namespace {

struct Panel {
    double a, b;
    bool substituted; // integrate (1/s) e^{-lambda v^{1/s}} dv instead of t^{s-1} e^{-lambda t} dt
};

std::vector<Panel> gamma_panels(double s, double lambda_max, double t_cut)
{
    std::vector<Panel> panels;
    int K = static_cast<int>(std::ceil(s * std::log2(std::max(1.0, lambda_max)))) + 2;
    double lo = std::ldexp(1.0, -K);
    panels.push_back({0.0, lo, true});
    for (int j = K - 1; j >= 0; --j)
        panels.push_back({std::ldexp(1.0, -j - 1), std::ldexp(1.0, -j), true});
    double a = 1.0;
    while (a < t_cut) {
        double b = std::min(2.0 * a, t_cut);
        panels.push_back({a, b, false});
        a = b;
    }
    return panels;
}

// Returns per-mode integrals with n and n/2 nodes.
void gamma_integrals(const Eigen::VectorXd& lambdas, const std::vector<char>& active, double s,
                     const std::vector<Panel>& panels, int nodes, Eigen::VectorXd& full, Eigen::VectorXd& half)
{
    const int d = static_cast<int>(lambdas.size());
    full = Eigen::VectorXd::Zero(d);
    half = Eigen::VectorXd::Zero(d);
    const GaussRule& g1 = gauss_legendre(nodes);
    const GaussRule& g2 = gauss_legendre(std::max(1, nodes / 2));
    auto accumulate = [&](const GaussRule& g, Eigen::VectorXd& acc) {
        for (const auto& p : panels) {
            const double c = 0.5 * (p.a + p.b), h = 0.5 * (p.b - p.a);
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                const double v = c + h * g.x[i];
                double t, wt;
                if (p.substituted) {
                    t = std::pow(v, 1.0 / s);
                    wt = g.w[i] * h / s;
                } else {
                    t = v;
                    wt = g.w[i] * h * std::pow(v, s - 1.0);
                }
                // one heat-semigroup application at time t, diagonal in the eigenbasis
                for (int k = 0; k < d; ++k)
                    if (active[k])
                        acc(k) += wt * std::exp(-t * lambdas(k));
            }
        }
    };
    accumulate(g1, full);
    accumulate(g2, half);
}

} // namespace

QuadResult fractional_inverse_quadrature(const SpectralOperator& op, double s, const Section& f,
                                         const QuadConfig& cfg)
{
    if (!(s > 0.0 && s < 1.0))
        throw std::invalid_argument("fractional_inverse_quadrature: order must lie in (0,1)");
    Section g = project_off_kernel(op, f);
    const double lmin = op.lambda_min_plus();
    const double t_cut = cfg.t_cut_override > 0.0 ? cfg.t_cut_override : -std::log(cfg.tail_tol) / lmin;
    auto panels = gamma_panels(s, op.lambda_max(), t_cut);
    std::vector<char> active(op.dim());
    for (int k = 0; k < op.dim(); ++k)
        active[k] = !op.is_kernel_mode(k);
    Eigen::VectorXd full, half;
    gamma_integrals(op.eigenvalues(), active, s, panels, cfg.nodes, full, half);
    const double gs = std::tgamma(s);
    Eigen::VectorXcd c = op.to_modes(g);
    Eigen::VectorXcd cf = c.cwiseProduct(full.cast<cplx>()) / gs;
    Eigen::VectorXcd ch = c.cwiseProduct(half.cast<cplx>()) / gs;
    QuadResult r;
    r.value = op.from_modes(cf);
    double nf = cf.norm();
    r.error_estimate = nf > 0.0 ? (cf - ch).norm() / nf : 0.0;
    r.panels = static_cast<int>(panels.size());
    r.evaluations = r.panels * cfg.nodes;
    r.converged = r.error_estimate <= cfg.target;
    if (!r.converged)
        throw std::runtime_error("fractional_inverse_quadrature: not converged, estimated error " +
                                 std::to_string(r.error_estimate));
    return r;
}

double fractional_inverse_quadrature_scalar(double lambda, double s, double lambda_max, double lambda_min_plus,
                                            const QuadConfig& cfg)
{
    const double t_cut = cfg.t_cut_override > 0.0 ? cfg.t_cut_override : -std::log(cfg.tail_tol) / lambda_min_plus;
    auto panels = gamma_panels(s, lambda_max, t_cut);
    Eigen::VectorXd l(1), full, half;
    l(0) = lambda;
    gamma_integrals(l, {1}, s, panels, cfg.nodes, full, half);
    return full(0) / std::tgamma(s);
}

double gaussian_transmutation(double t, double lambda)
{
    if (!(t > 0.0))
        throw std::invalid_argument("gaussian_transmutation: t must be positive");
    const double smax = std::sqrt(4.0 * t * 46.0);
    const double k = std::sqrt(std::max(lambda, 0.0));
    const int npan = static_cast<int>(std::ceil(smax * k / std::numbers::pi)) + 8;
    auto f = [&](double s) {
        double osc = lambda >= 0.0 ? std::cos(s * k) : std::cosh(s * std::sqrt(-lambda));
        return std::exp(-s * s / (4.0 * t)) * osc;
    };
    return integrate_composite(f, 0.0, smax, npan, 32) / std::sqrt(std::numbers::pi * t);
}

double printed_transmutation(double t, double lambda)
{
    if (!(t > 0.0))
        throw std::invalid_argument("printed_transmutation: t must be positive");
    const double smax = 4.0 * t * 46.0;
    const double k = std::sqrt(std::max(lambda, 0.0));
    const int npan = static_cast<int>(std::ceil(smax * k / std::numbers::pi)) + 16;
    auto f = [&](double s) { return std::exp(-s / (4.0 * t)) * wave_G(s, lambda); };
    return integrate_composite(f, 0.0, smax, npan, 32) / (4.0 * std::sqrt(std::numbers::pi) * std::pow(t, 1.5));
}

TransmutationReport transmutation_residual(const SpectralOperator& op, double t, const Section& u)
{
    if (!(t > 0.0) || t < 1e-3 / op.lambda_max())
        throw std::invalid_argument("transmutation_residual: t below 1e-3/lambda_max");
    TransmutationReport rep;
    Eigen::VectorXcd c = op.to_modes(u);
    Eigen::VectorXcd lhs(op.dim()), gau(op.dim()), pri(op.dim());
    for (int k = 0; k < op.dim(); ++k) {
        const double l = op.eigenvalues()(k);
        const double e = std::exp(-t * l), g = gaussian_transmutation(t, l), p = printed_transmutation(t, l);
        rep.max_mode_error = std::max(rep.max_mode_error, std::abs(e - g));
        lhs(k) = e * c(k);
        gau(k) = g * c(k);
        pri(k) = p * c(k);
    }
    const double n = lhs.norm();
    if (n == 0.0)
        return rep;
    rep.gaussian_residual = (lhs - gau).norm() / n;
    rep.printed_residual = (lhs - pri).norm() / n;
    return rep;
}

double wave_energy(const SpectralOperator& op, const Section& u0, const Section& u1, double t)
{
    Eigen::VectorXcd a0 = op.to_modes(u0), a1 = op.to_modes(u1);
    double E = 0.0;
    for (int k = 0; k < op.dim(); ++k) {
        const double l = op.eigenvalues()(k);
        const double C = wave_C(t, l), G = wave_G(t, l);
        cplx a = C * a0(k) + G * a1(k);
        cplx ap = -l * G * a0(k) + C * a1(k);
        E += std::norm(ap) + l * std::norm(a);
    }
    return E;
}

} // namespace fcl
