#include "fcl/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace fcl {

namespace {

GaussRule make_rule(int n)
{
    GaussRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16)
                break;
        }
        // recompute derivative at converged node
        double p0 = 1.0, p1 = 0.0;
        for (int k = 1; k <= n; ++k) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        double w = 2.0 / ((1.0 - z * z) * dp * dp);
        r.x[i] = -z;
        r.x[n - 1 - i] = z;
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    if (n % 2 == 1)
        r.x[n / 2] = 0.0;
    return r;
}

} // namespace

const GaussRule& gauss_legendre(int n)
{
    if (n < 1)
        throw std::invalid_argument("gauss_legendre: need at least one node");
    static std::map<int, GaussRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, make_rule(n)).first;
    return it->second;
}

double integrate(const std::function<double(double)>& f, double a, double b, int n)
{
    const GaussRule& g = gauss_legendre(n);
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        s += g.w[i] * f(c + h * g.x[i]);
    return s * h;
}

double integrate_composite(const std::function<double(double)>& f, double a, double b, int npanels, int n)
{
    double s = 0.0;
    const double w = (b - a) / npanels;
    for (int p = 0; p < npanels; ++p)
        s += integrate(f, a + p * w, a + (p + 1) * w, n);
    return s;
}

} // namespace fcl
