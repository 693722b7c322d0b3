#pragma once

#include <functional>
#include <vector>

namespace fcl {

struct GaussRule {
    std::vector<double> x; // nodes on [-1,1]
    std::vector<double> w;
};

// Gauss-Legendre rule with n nodes (Newton iteration on P_n), cached per n.
const GaussRule& gauss_legendre(int n);

// Integral of f over [a,b] with an n-point rule.
double integrate(const std::function<double(double)>& f, double a, double b, int n);
// Composite rule over npanels equal panels.
double integrate_composite(const std::function<double(double)>& f, double a, double b, int npanels, int n);

} // namespace fcl
