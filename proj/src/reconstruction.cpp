#include "fcl/reconstruction.hpp"
#include "fcl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <stdexcept>

namespace fcl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Central second difference of order 8 on offsets -4..4.
constexpr double kD2[9] = {-1.0 / 560, 8.0 / 315, -1.0 / 5, 8.0 / 5, -205.0 / 72, 8.0 / 5, -1.0 / 5, 8.0 / 315, -1.0 / 560};

Eigen::MatrixXcd polar_unitary(const Eigen::MatrixXcd& a)
{
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

double max_abs(const Eigen::MatrixXcd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

double relative_residual(double acc, double norm2)
{
    return std::sqrt(std::clamp(1.0 - acc / norm2, 0.0, 1.0));
}

// Number of whole time steps inside a window of length w.
int window_steps(double w, double dt, int cap)
{
    return w > 0.0 ? std::min(cap, static_cast<int>(std::floor(w / dt + 1e-9))) : 0;
}

} // namespace

bool LocalConnection::has_edge(int x, int y) const
{
    return transports.count({std::min(x, y), std::max(x, y)}) > 0;
}

Eigen::MatrixXcd LocalConnection::transport(int x, int y) const
{
    auto it = transports.find({std::min(x, y), std::max(x, y)});
    if (it == transports.end())
        throw std::out_of_range("LocalConnection: no transport on edge");
    return x < y ? it->second : Eigen::MatrixXcd(it->second.adjoint());
}

void LocalConnection::set_transport(int x, int y, const Eigen::MatrixXcd& u)
{
    if (x < y)
        transports[{x, y}] = u;
    else
        transports[{y, x}] = u.adjoint();
}

cplx holonomy_trace(const LocalConnection& c, const std::vector<int>& loop)
{
    std::vector<int> l = loop;
    if (l.size() >= 2 && l.front() == l.back())
        l.pop_back();
    if (l.size() < 2)
        throw std::invalid_argument("holonomy_trace: loop too short");
    Eigen::MatrixXcd P = Eigen::MatrixXcd::Identity(c.rank, c.rank);
    for (std::size_t i = 0; i < l.size(); ++i)
        P = P * c.transport(l[i], l[(i + 1) % l.size()]);
    return P.trace();
}

GaugeReport gauge_invariant_compare(const LocalConnection& recovered, const LocalConnection& truth,
                                    const std::vector<std::vector<int>>& loops, double tol)
{
    if (recovered.rank != truth.rank)
        throw std::invalid_argument("gauge_invariant_compare: rank mismatch");
    GaugeReport r;
    r.tol = tol;
    for (const auto& loop : loops) {
        cplx a = holonomy_trace(recovered, loop), b = holonomy_trace(truth, loop);
        r.holonomy_recovered.push_back(a);
        r.holonomy_truth.push_back(b);
        r.holonomy_deviation = std::max(r.holonomy_deviation, std::abs(a - b));
        ++r.loops;
    }
    for (const auto& [x, A] : recovered.potentials) {
        auto it = truth.potentials.find(x);
        if (it == truth.potentials.end())
            throw std::invalid_argument("gauge_invariant_compare: vertex missing from reference");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ea(A, Eigen::EigenvaluesOnly), eb(it->second, Eigen::EigenvaluesOnly);
        r.potential_deviation =
            std::max(r.potential_deviation, (ea.eigenvalues() - eb.eigenvalues()).cwiseAbs().maxCoeff());
        ++r.vertices;
    }
    r.pass = r.holonomy_deviation < tol && r.potential_deviation < tol;
    return r;
}

Reconstructor::Reconstructor(const WaveMapData& wave, LocalStructure local, double T, ProbeConfig cfg)
    : wave_(wave), local_(std::move(local)), T_(T), cfg_(cfg)
{
    if (!(local_.region == wave_.region) || local_.rank != wave_.rank)
        throw std::invalid_argument("Reconstructor: local structure does not match the map data");
    if (static_cast<int>(local_.volumes.size()) != local_.region.size())
        throw std::invalid_argument("Reconstructor: one volume per region vertex required");
    const double q = T / wave_.dt;
    nT_ = static_cast<int>(std::llround(q));
    if (nT_ < 1 || std::abs(q - nT_) > 1e-9 * q)
        throw std::invalid_argument("Reconstructor: T must be a multiple of the map time step");
    if (wave_.steps < 2 * nT_)
        throw std::invalid_argument("Reconstructor: map data must cover [0, 2T]");
    nU_ = local_.region.size();
    r_ = local_.rank;

    h_ = 0.0;
    for (const Edge& e : local_.edges)
        if (local_.region.contains(e.a) && local_.region.contains(e.b))
            h_ = std::max(h_, e.length);
    if (h_ <= 0.0)
        throw std::invalid_argument("Reconstructor: U has no interior edges");

    auto dflt = [&](double& v, double mult) {
        if (v <= 0.0)
            v = mult * h_;
    };
    dflt(cfg_.delta, 1.5);
    dflt(cfg_.target_radius, 4.0);
    dflt(cfg_.target_halfwidth, 3.0);
    dflt(cfg_.eps, 2.0);
    dflt(cfg_.cut_eps, 6.0);
    dflt(cfg_.merge_tol, 0.25);
    dflt(cfg_.frame_radius, 2.0);

    dU_ = Eigen::MatrixXd::Constant(nU_, nU_, kInf);
    std::vector<std::vector<std::pair<int, double>>> adj(nU_);
    for (const Edge& e : local_.edges) {
        int a = local_.region.index_of(e.a), b = local_.region.index_of(e.b);
        if (a >= 0 && b >= 0) {
            adj[a].push_back({b, e.length});
            adj[b].push_back({a, e.length});
        }
    }
    for (int s = 0; s < nU_; ++s) {
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
        dU_(s, s) = 0.0;
        pq.push({0.0, s});
        while (!pq.empty()) {
            auto [d, v] = pq.top();
            pq.pop();
            if (d > dU_(s, v))
                continue;
            for (auto [w, l] : adj[v])
                if (d + l < dU_(s, w)) {
                    dU_(s, w) = d + l;
                    pq.push({d + l, w});
                }
        }
    }
    H_ = hat_responses(wave_);
}

const BlagoEngine& Reconstructor::engine() const
{
    std::call_once(engine_once_, [this] { engine_.emplace(wave_, T_, 1, nT_); });
    return *engine_;
}

int Reconstructor::ridx(int v) const
{
    int i = local_.region.index_of(v);
    if (i < 0)
        throw std::invalid_argument("vertex is not in the observation region");
    return i;
}

Eigen::VectorXcd Reconstructor::elementary_state(int node, int ri, int a) const
{
    return local_.volumes[ri] * H_[nT_ - node].col(ri * r_ + a);
}

SourceFamily Reconstructor::box_family(int x, double delta, double tau) const
{
    const int xi = ridx(x);
    SourceFamily f;
    f.label = "box";
    const int count = window_steps(tau, wave_.dt, nT_);
    std::vector<int> verts;
    for (int v = 0; v < nU_; ++v)
        if (dU_(xi, v) < delta)
            verts.push_back(v);
    for (int k = 0; k < count; ++k)
        for (int v : verts)
            for (int a = 0; a < r_; ++a)
                f.unit_index.push_back(col(nT_ - k, v, a));
    const int E = nT_ * nU_ * r_;
    f.coeffs = Eigen::MatrixXcd::Zero(E, f.unit_index.size());
    for (std::size_t i = 0; i < f.unit_index.size(); ++i)
        f.coeffs(f.unit_index[i], i) = 1.0;
    return f;
}

SourceFamily Reconstructor::smooth_family(int y, double tau) const
{
    const int yi = ridx(y);
    SourceFamily f;
    f.label = "smooth";
    const int E = nT_ * nU_ * r_;
    const double D = wave_.dt;
    const int qmax = std::max(1, static_cast<int>(std::llround(cfg_.target_halfwidth / D)));
    const int q = std::min(qmax, static_cast<int>(std::floor(0.5 * tau / D * (1.0 - 1e-9))));
    if (tau <= 0.0 || q < 1) {
        f.coeffs = Eigen::MatrixXcd::Zero(E, 0);
        return f;
    }
    const int step = std::max(1, q / 2);
    const int first = static_cast<int>(std::ceil(nT_ - tau / D - 1e-9));
    std::vector<int> centers;
    for (int c = first + q; c + q <= nT_; c += step)
        centers.push_back(c);
    std::vector<double> wsp(nU_, 0.0);
    for (int v = 0; v < nU_; ++v)
        wsp[v] = std::max(0.0, 1.0 - dU_(yi, v) / cfg_.target_radius);
    f.coeffs = Eigen::MatrixXcd::Zero(E, static_cast<Eigen::Index>(centers.size()) * r_);
    int j = 0;
    for (int c : centers)
        for (int a = 0; a < r_; ++a, ++j)
            for (int n = std::max(1, c - q + 1); n <= std::min(nT_, c + q - 1); ++n) {
                const double wt = 1.0 - std::abs(n - c) / static_cast<double>(q);
                for (int v = 0; v < nU_; ++v)
                    if (wsp[v] > 0.0)
                        f.coeffs(col(n, v, a), j) = wt * wsp[v];
            }
    return f;
}

Eigen::MatrixXcd Reconstructor::gram_columns(const SourceFamily& s) const
{
    const Eigen::MatrixXcd& G = engine().elementary();
    if (!s.unit_index.empty() || s.size() == 0) {
        Eigen::MatrixXcd out(G.rows(), s.unit_index.size());
        for (std::size_t i = 0; i < s.unit_index.size(); ++i)
            out.col(i) = G.col(s.unit_index[i]);
        return out;
    }
    return G * s.coeffs;
}

Eigen::VectorXd Reconstructor::projection_residual(const SourceFamily& targets, const SourceFamily& span) const
{
    const int nt = targets.size();
    Eigen::MatrixXcd GT = gram_columns(targets);
    Eigen::VectorXd tn(nt);
    for (int i = 0; i < nt; ++i) {
        tn(i) = targets.coeffs.col(i).dot(GT.col(i)).real();
        if (!(tn(i) > 0.0))
            throw std::invalid_argument("projection_residual: zero-norm target");
    }
    if (span.size() == 0)
        return Eigen::VectorXd::Ones(nt);
    Eigen::MatrixXcd GS = gram_columns(span);
    Eigen::MatrixXcd Gss = span.coeffs.adjoint() * GS;
    Gss = 0.5 * (Gss + Gss.adjoint()).eval();
    const double eps = cfg_.reg_rel * Gss.trace().real() / Gss.rows();
    Gss.diagonal().array() += eps;
    Eigen::LLT<Eigen::MatrixXcd> llt(Gss);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("projection_residual: span Gram is not positive definite");
    Eigen::MatrixXcd q = GS.adjoint() * targets.coeffs;
    Eigen::MatrixXcd y = llt.matrixL().solve(q);
    Eigen::VectorXd res(nt);
    for (int i = 0; i < nt; ++i)
        res(i) = relative_residual(y.col(i).squaredNorm(), tn(i));
    return res;
}

namespace {

SourceFamily merge_families(const SourceFamily& a, const SourceFamily& b)
{
    SourceFamily f;
    f.label = a.label + "+" + b.label;
    std::set<int> seen;
    for (const auto* s : {&a, &b})
        for (int i : s->unit_index)
            if (seen.insert(i).second)
                f.unit_index.push_back(i);
    const Eigen::Index E = a.coeffs.rows();
    f.coeffs = Eigen::MatrixXcd::Zero(E, f.unit_index.size());
    for (std::size_t i = 0; i < f.unit_index.size(); ++i)
        f.coeffs(f.unit_index[i], i) = 1.0;
    return f;
}

} // namespace

double Reconstructor::containment_residual(int x, double tx, int y, double ty, int z, double tz) const
{
    SourceFamily target = smooth_family(x, tx);
    if (target.size() == 0)
        throw std::invalid_argument("containment_test: target window shorter than two time steps");
    SourceFamily span = merge_families(box_family(y, cfg_.delta, ty - cfg_.delta), box_family(z, cfg_.delta, tz - cfg_.delta));
    return projection_residual(target, span).maxCoeff();
}

bool Reconstructor::containment_test(int x, double tx, int y, double ty, int z, double tz, double tol_res) const
{
    return containment_residual(x, tx, y, ty, z, tz) < tol_res;
}

double Reconstructor::target_window(double r, double s, double eps) const
{
    // r - s + eps, placed on the grid at a fixed offset from the x-span window r - delta
    const double dt = wave_.dt;
    const int kx = window_steps(r - cfg_.delta, dt, nT_);
    const long off = std::lround((eps - s + cfg_.delta) / dt);
    return std::max(0.0, (kx + off) * dt + 0.5 * dt);
}

double Reconstructor::first_arrival_distance(int x, int y) const { return first_arrival_distance(x, y, cfg_.eta); }

double Reconstructor::first_arrival_distance(int x, int y, double eta) const
{
    if (!(eta > 0.0 && eta < 1.0))
        throw std::invalid_argument("first_arrival_distance: eta must lie in (0,1)");
    const int xi = ridx(x), yi = ridx(y);
    std::vector<double> v(wave_.steps + 1);
    double peak = 0.0;
    for (int k = 0; k <= wave_.steps; ++k) {
        v[k] = wave_.samples[k].block(xi * r_, yi * r_, r_, r_).cwiseAbs().maxCoeff();
        peak = std::max(peak, v[k]);
    }
    if (!(peak > 0.0))
        throw std::runtime_error("first_arrival_distance: kernel column vanishes");
    const double thr = eta * peak;
    for (int k = 1; k <= wave_.steps; ++k)
        if (v[k] > thr) {
            const double frac = v[k - 1] >= thr ? 0.0 : (thr - v[k - 1]) / (v[k] - v[k - 1]);
            return (k - 1 + frac) * wave_.dt;
        }
    return kInf;
}

Eigen::MatrixXd Reconstructor::first_arrival_matrix() const
{
    Eigen::MatrixXd D(nU_, nU_);
    const auto& verts = local_.region.vertices();
    for (int i = 0; i < nU_; ++i)
        for (int j = 0; j < nU_; ++j)
            D(i, j) = first_arrival_distance(verts[i], verts[j]);
    return D;
}

std::vector<double> Reconstructor::cut_residuals(int x, int y, double s, const std::vector<double>& r_grid) const
{
    std::vector<double> out(r_grid.size(), std::numeric_limits<double>::quiet_NaN());
    engine();
    parallel_for(static_cast<int>(r_grid.size()), [&](int i) {
        const double r = r_grid[i];
        SourceFamily target = smooth_family(y, target_window(r, s, cfg_.cut_eps));
        if (target.size() == 0)
            return;
        out[i] = projection_residual(target, box_family(x, cfg_.delta, r - cfg_.delta)).maxCoeff();
    });
    return out;
}

double Reconstructor::cut_time_estimate(int x, int y, double s, const std::vector<double>& r_grid) const
{
    if (r_grid.size() < 2)
        throw std::invalid_argument("cut_time_estimate: grid needs at least two values");
    auto res = cut_residuals(x, y, s, r_grid);
    // running minimum over evaluable grid values
    std::vector<double> m(res.size(), std::numeric_limits<double>::quiet_NaN());
    double run = kInf;
    for (std::size_t i = 0; i < res.size(); ++i)
        if (!std::isnan(res[i])) {
            run = std::min(run, res[i]);
            m[i] = run;
        }
    const double look = 2.0 * cfg_.cut_eps;
    bool seen_reject = false;
    for (std::size_t i = 0; i < res.size(); ++i) {
        if (std::isnan(m[i]))
            continue;
        int j = -1;
        for (std::size_t k = 0; k < i; ++k)
            if (r_grid[k] <= r_grid[i] - look + 1e-12 && !std::isnan(m[k]))
                j = static_cast<int>(k);
        const bool accepted = j < 0 || m[i] < cfg_.cut_tol_rel * m[j];
        if (!accepted) {
            seen_reject = true;
        } else if (seen_reject) {
            const double step = i > 0 ? r_grid[i] - r_grid[i - 1] : r_grid[1] - r_grid[0];
            return r_grid[i] - 0.5 * step;
        }
    }
    return kInf;
}

ExteriorSweep Reconstructor::exterior_sweep(int x, int y, double s, double r_prime, const std::vector<double>& r_grid) const
{
    const double cut = cut_time_estimate(x, y, s, r_grid);
    if (r_prime >= cut)
        throw std::domain_error("exterior_distance: r' is not below the estimated cut time");
    return exterior_impl(x, y, s, r_prime, r_grid, true);
}

double Reconstructor::exterior_distance(int x, int y, double s, double r_prime, int z,
                                        const std::vector<double>& r_grid) const
{
    const int zi = ridx(z);
    return exterior_sweep(x, y, s, r_prime, r_grid).distances[zi];
}

ExteriorSweep Reconstructor::exterior_impl(int x, int y, double s, double r_prime, const std::vector<double>& r_grid,
                                           bool parallel) const
{
    if (r_grid.size() < 2)
        throw std::invalid_argument("exterior_distance: grid needs at least two values");
    const Eigen::MatrixXcd& G = engine().elementary();
    const Eigen::Index E = G.rows();
    SourceFamily target = smooth_family(y, target_window(r_prime, s, cfg_.eps));
    if (target.size() == 0)
        throw std::invalid_argument("exterior_distance: target window shorter than two time steps");
    const int nt = target.size();
    Eigen::MatrixXcd GT = G * target.coeffs;
    Eigen::VectorXd tn(nt);
    for (int i = 0; i < nt; ++i)
        tn(i) = target.coeffs.col(i).dot(GT.col(i)).real();

    SourceFamily X = box_family(x, cfg_.delta, r_prime - cfg_.delta);
    const auto& ix = X.unit_index;
    const int nx = static_cast<int>(ix.size());
    double eps;
    Eigen::MatrixXcd yx = Eigen::MatrixXcd::Zero(0, nt), Wall = Eigen::MatrixXcd::Zero(0, E);
    Eigen::VectorXd ax = Eigen::VectorXd::Zero(nt);
    if (nx > 0) {
        Eigen::MatrixXcd Gxx(nx, nx), Gxa(nx, E), qx(nx, nt);
        for (int i = 0; i < nx; ++i) {
            Gxa.row(i) = G.row(ix[i]);
            qx.row(i) = GT.row(ix[i]);
        }
        for (int j = 0; j < nx; ++j)
            Gxx.col(j) = Gxa.col(ix[j]);
        eps = cfg_.reg_rel * Gxx.trace().real() / nx;
        Gxx.diagonal().array() += eps;
        Eigen::LLT<Eigen::MatrixXcd> llt(Gxx);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("exterior_distance: x-span Gram is not positive definite");
        yx = llt.matrixL().solve(qx);
        Wall = llt.matrixL().solve(Gxa);
        for (int i = 0; i < nt; ++i)
            ax(i) = yx.col(i).squaredNorm();
    } else {
        eps = cfg_.reg_rel * G.trace().real() / E;
    }

    ExteriorSweep out;
    for (int i = 0; i < nt; ++i)
        out.baseline = std::max(out.baseline, relative_residual(ax(i), tn(i)));
    out.distances.assign(nU_, kInf);
    out.residuals.assign(nU_, std::vector<double>(r_grid.size(), 1.0));
    const double thr = cfg_.tol_rel * out.baseline;

    auto one = [&](int zi) {
        std::vector<int> verts;
        for (int v = 0; v < nU_; ++v)
            if (dU_(zi, v) < cfg_.delta)
                verts.push_back(v);
        const int bz = static_cast<int>(verts.size()) * r_;
        std::vector<int> idx;
        for (int k = 0; k < nT_; ++k)
            for (int v : verts)
                for (int a = 0; a < r_; ++a)
                    idx.push_back(col(nT_ - k, v, a));
        const int m = static_cast<int>(idx.size());
        Eigen::MatrixXcd Szz(m, m), Wz(Wall.rows(), m), qz(m, nt);
        for (int j = 0; j < m; ++j) {
            Wz.col(j) = Wall.col(idx[j]);
            qz.row(j) = GT.row(idx[j]);
            for (int i = 0; i < m; ++i)
                Szz(i, j) = G(idx[i], idx[j]);
        }
        if (Wall.rows() > 0) {
            Szz.noalias() -= Wz.adjoint() * Wz;
            qz.noalias() -= Wz.adjoint() * yx;
        }
        Szz = 0.5 * (Szz + Szz.adjoint()).eval();
        Szz.diagonal().array() += eps;
        Eigen::LLT<Eigen::MatrixXcd> llt(Szz);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("exterior_distance: z-span Schur complement is not positive definite");
        Eigen::MatrixXcd yz = llt.matrixL().solve(qz);
        // prefix sums over node blocks: window with k nodes uses the first k*bz rows
        std::vector<Eigen::VectorXd> cum(nT_ + 1, ax);
        for (int k = 0; k < nT_; ++k) {
            cum[k + 1] = cum[k];
            for (int j = k * bz; j < (k + 1) * bz; ++j)
                for (int i = 0; i < nt; ++i)
                    cum[k + 1](i) += std::norm(yz(j, i));
        }
        for (std::size_t g = 0; g < r_grid.size(); ++g) {
            const double w = r_grid[g] - cfg_.delta;
            const int k = w > 0.0 ? std::min(nT_, static_cast<int>(std::floor(w / wave_.dt + 1e-9))) : 0;
            double res = 0.0;
            for (int i = 0; i < nt; ++i)
                res = std::max(res, relative_residual(cum[k](i), tn(i)));
            out.residuals[zi][g] = res;
        }
        for (std::size_t g = 0; g < r_grid.size(); ++g)
            if (out.residuals[zi][g] < thr) {
                const double step = g > 0 ? r_grid[g] - r_grid[g - 1] : r_grid[1] - r_grid[0];
                out.distances[zi] = std::max(0.0, r_grid[g] - 0.5 * step);
                break;
            }
    };
    if (parallel)
        parallel_for(nU_, one);
    else
        for (int zi = 0; zi < nU_; ++zi)
            one(zi);
    return out;
}

DistanceProfileSet Reconstructor::distance_family(const std::vector<RayPlan>& plan) const
{
    if (plan.empty())
        throw std::invalid_argument("distance_family: empty ray plan");
    DistanceProfileSet set;
    set.region = local_.region;
    const auto& verts = local_.region.vertices();
    const Eigen::MatrixXd D = first_arrival_matrix();

    std::vector<Eigen::VectorXd> cand;
    std::vector<ProfileSource> prov;
    for (int p = 0; p < nU_; ++p) {
        cand.push_back(D.row(p).transpose());
        prov.push_back({"interior", -1, -1, verts[p], 0.0, 0.0});
    }

    struct Task {
        int ray;
        double s, rp;
    };
    std::vector<Task> tasks;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        const RayPlan& rp = plan[k];
        const double s = first_arrival_distance(rp.x, rp.y);
        const double cut = cut_time_estimate(rp.x, rp.y, s, rp.r_grid);
        set.ray_s.push_back(s);
        set.ray_cut.push_back(cut);
        for (double r : rp.r_primes) {
            if (r >= cut) {
                ++set.rejected_unreachable;
                continue;
            }
            tasks.push_back({static_cast<int>(k), s, r});
        }
    }
    engine();
    std::vector<Eigen::VectorXd> ext(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), [&](int i) {
        const Task& t = tasks[i];
        const RayPlan& rp = plan[t.ray];
        auto sw = exterior_impl(rp.x, rp.y, t.s, t.rp, rp.r_grid, false);
        ext[i] = Eigen::Map<const Eigen::VectorXd>(sw.distances.data(), nU_);
    });
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const RayPlan& rp = plan[tasks[i].ray];
        cand.push_back(ext[i]);
        prov.push_back({"ray", rp.x, rp.y, -1, tasks[i].s, tasks[i].rp});
    }

    for (std::size_t c = 0; c < cand.size(); ++c) {
        const Eigen::VectorXd& p = cand[c];
        if (!p.allFinite()) {
            ++set.rejected_unreachable;
            continue;
        }
        const double slack = cfg_.lipschitz_rel * p.maxCoeff();
        bool ok = true;
        for (int a = 0; a < nU_ && ok; ++a)
            for (int b = 0; b < nU_; ++b)
                if (std::abs(p(a) - p(b)) > 0.5 * (D(a, b) + D(b, a)) + slack) {
                    ok = false;
                    break;
                }
        if (!ok) {
            ++set.rejected_lipschitz;
            continue;
        }
        bool dup = false;
        for (const auto& q : set.profiles)
            if ((q - p).cwiseAbs().maxCoeff() < cfg_.merge_tol) {
                dup = true;
                break;
            }
        if (dup) {
            ++set.merged;
            continue;
        }
        set.profiles.push_back(p);
        set.provenance.push_back(prov[c]);
    }
    return set;
}

FiberProbe Reconstructor::recover_fiber_frame(int y) const
{
    const int yi = local_.region.index_of(y);
    if (yi < 0)
        throw std::domain_error("recover_fiber_frame: target vertex is not observable from U");
    SourceFamily probe = box_family(y, cfg_.frame_radius, T_);
    const int ns = probe.size();
    const Eigen::MatrixXcd& G = engine().elementary();
    Eigen::MatrixXcd Gss(ns, ns), b(ns, r_);
    for (int j = 0; j < ns; ++j)
        for (int i = 0; i < ns; ++i)
            Gss(i, j) = G(probe.unit_index[i], probe.unit_index[j]);
    for (int i = 0; i < ns; ++i) {
        const int c = probe.unit_index[i];
        const int a = c % r_, ri = (c / r_) % nU_, node = c / (r_ * nU_) + 1;
        Eigen::VectorXcd w = elementary_state(node, ri, a);
        for (int l = 0; l < r_; ++l)
            b(i, l) = std::conj(w(yi * r_ + l));
    }
    const double eps = cfg_.reg_rel * Gss.trace().real() / ns;
    Gss.diagonal().array() += eps;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Gss, Eigen::EigenvaluesOnly);
    FiberProbe fp;
    fp.y = y;
    fp.condition = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    if (!(fp.condition < cfg_.max_condition))
        throw std::runtime_error("recover_fiber_frame: probe Gram condition number exceeds the bound");
    Eigen::MatrixXcd c = Gss.llt().solve(b);
    Gss.diagonal().array() -= eps;
    Eigen::MatrixXcd gam = c.adjoint() * Gss * c;
    gam = 0.5 * (gam + gam.adjoint()).eval();
    fp.gram_raw = local_.volumes[yi] * gam;
    fp.frame_defect = max_abs(fp.gram_raw - Eigen::MatrixXcd::Identity(r_, r_));
    if (!(fp.frame_defect < cfg_.tol_frame))
        throw std::runtime_error("recover_fiber_frame: fiber at y is not reachable with the configured probe");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eg(gam);
    Eigen::MatrixXcd isq = eg.eigenvectors() * eg.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                           eg.eigenvectors().adjoint();
    Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(G.rows(), r_);
    Eigen::MatrixXcd cn = c * isq;
    for (int i = 0; i < ns; ++i)
        full.row(probe.unit_index[i]) = cn.row(i);
    fp.coeffs = full;
    fp.gram = cn.adjoint() * Gss * cn;
    fp.values = b.adjoint() * cn;
    return fp;
}

RecoveredOperator Reconstructor::recover_local_operator(const Region& chart) const
{
    if (chart.empty())
        throw std::invalid_argument("recover_local_operator: empty chart");
    const int kmin = 5, kmax = std::min(nT_, wave_.steps - 4);
    if (kmax < kmin)
        throw std::invalid_argument("recover_local_operator: time grid too short for second differences");
    const int bd = nU_ * r_;
    const double dt2 = wave_.dt * wave_.dt;

    // states and their second time derivatives for unit hat sources at lag k
    const int nk = kmax - kmin + 1;
    Eigen::MatrixXcd W(bd, static_cast<Eigen::Index>(nk) * bd), D2(bd, static_cast<Eigen::Index>(nk) * bd);
    for (int k = kmin; k <= kmax; ++k) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(k - kmin) * bd;
        W.middleCols(c0, bd) = H_[k];
        Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(bd, bd);
        for (int j = -4; j <= 4; ++j)
            acc += kD2[j + 4] * H_[k + j];
        D2.middleCols(c0, bd) = acc / dt2;
    }

    RecoveredOperator out;
    out.chart = chart;
    out.connection.rank = r_;
    out.samples = static_cast<int>(W.cols());
    std::map<std::pair<int, int>, std::vector<Eigen::MatrixXcd>> est;
    for (int x : chart.vertices()) {
        const int xi = ridx(x);
        std::vector<std::pair<int, double>> nb;
        for (const Edge& e : local_.edges) {
            if (e.a != x && e.b != x)
                continue;
            int y = e.a == x ? e.b : e.a;
            if (!local_.region.contains(y))
                throw std::invalid_argument("recover_local_operator: chart vertex has a neighbor outside U");
            nb.push_back({y, e.conductance});
        }
        const double mu = local_.volumes[xi];
        double deg = 0.0;
        for (auto [y, w] : nb)
            deg += w / mu;
        const int d = static_cast<int>(nb.size());
        Eigen::MatrixXcd Z(r_ * (d + 1), W.cols());
        for (int j = 0; j < d; ++j)
            Z.middleRows(j * r_, r_) = -(nb[j].second / mu) * W.middleRows(ridx(nb[j].first) * r_, r_);
        Z.middleRows(d * r_, r_) = W.middleRows(xi * r_, r_);
        Eigen::MatrixXcd Y = -D2.middleRows(xi * r_, r_) - deg * W.middleRows(xi * r_, r_);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(Z.transpose());
        if (qr.rank() < Z.rows())
            throw std::runtime_error("recover_local_operator: least-squares system is rank deficient");
        Eigen::MatrixXcd X = qr.solve(Eigen::MatrixXcd(Y.transpose())).transpose();
        out.fit_residual = std::max(out.fit_residual, (X * Z - Y).norm() / Y.norm());
        for (int j = 0; j < d; ++j) {
            const int y = nb[j].first;
            Eigen::MatrixXcd u = X.middleCols(j * r_, r_);
            est[{std::min(x, y), std::max(x, y)}].push_back(x < y ? u : Eigen::MatrixXcd(u.adjoint()));
        }
        Eigen::MatrixXcd A = X.middleCols(d * r_, r_);
        out.hermiticity_defect = std::max(out.hermiticity_defect, max_abs(A - A.adjoint()));
        out.connection.potentials[x] = 0.5 * (A + A.adjoint());
    }
    for (auto& [key, list] : est) {
        Eigen::MatrixXcd avg = Eigen::MatrixXcd::Zero(r_, r_);
        for (const auto& u : list)
            avg += u;
        avg /= static_cast<double>(list.size());
        if (list.size() > 1)
            out.reverse_mismatch = std::max(out.reverse_mismatch, max_abs(list[0] - list[1]));
        out.unitarity_defect =
            std::max(out.unitarity_defect, max_abs(avg.adjoint() * avg - Eigen::MatrixXcd::Identity(r_, r_)));
        out.connection.transports[key] = polar_unitary(avg);
    }
    return out;
}

} // namespace fcl
