#pragma once

#include "fcl/propagators.hpp"
#include "fcl/reconstruction.hpp"
#include "fcl/wave_data.hpp"

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace fcl {

FracMapData frac_map_assemble(const SpectralOperator& op, const Region& u, double s);
// Applies the fractional map to a U-supported section given on U.
Eigen::VectorXcd frac_map_apply(const FracMapData& d, const Eigen::VectorXcd& f_u);

WaveMapData wave_map_assemble(const SpectralOperator& op, const Region& u, const TimeGrid& grid);
// Metric and fiber data on U handed to the inverse pipeline: volumes, incident edges, rank.
LocalStructure extract_local_structure(const HermitianBundle& b, const Region& u);

// Restriction of a full-space time section to the rows of U; throws if mass lies outside U.
Eigen::MatrixXcd restrict_to_region(const Eigen::MatrixXcd& f, const Region& u, int rank, double tol = 0.0);
// Extension by zero from U to the full space.
Eigen::MatrixXcd extend_from_region(const Eigen::MatrixXcd& f_u, const Region& u, int rank, int nvertices);

// J phi(t) = 1/2 int_t^{2T-t} phi(s) ds.
double time_average_J(const std::function<double(double)>& phi, double t, double T, int nodes = 64);
// Nodal version for a piecewise-linear series on [0, 2T] with spacing dt; returns J at every node.
Eigen::VectorXd time_average_J(const Eigen::VectorXd& series, double dt, double T);
Eigen::MatrixXcd time_average_J(const Eigen::MatrixXcd& series, double dt, double T);

} // namespace fcl
