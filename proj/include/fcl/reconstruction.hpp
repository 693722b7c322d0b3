#pragma once

#include "fcl/manifold.hpp"
#include "fcl/wave_data.hpp"

#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fcl {

// Metric and fiber data on U: the only geometric input of the inverse pipeline besides the wave map.
struct LocalStructure {
    Region region;
    int rank = 1;
    std::vector<double> volumes; // per region vertex, in region order
    std::vector<Edge> edges;     // edges with at least one endpoint in U, global vertex ids
};

// Lengths left at zero are resolved against the mesh h of U.
struct ProbeConfig {
    double delta = 0.0;            // span ball radius (1.5 h)
    double target_radius = 0.0;    // spatial radius of target profiles (4 h)
    double target_halfwidth = 0.0; // temporal half-width of target bumps (3 h)
    double eps = 0.0;              // window slack of exterior targets (2 h)
    double cut_eps = 0.0;          // window slack of cut-time targets (6 h)
    double tol_rel = 0.5;         // exterior acceptance relative to the x-only residual
    double cut_tol_rel = 0.35;     // cut acceptance: drop of the residual over a lookback of 2 cut_eps
    double reg_rel = 1e-7;         // Tikhonov weight relative to trace(G)/dim(G)
    double eta = 0.1;              // first-arrival threshold relative to the peak
    double lipschitz_rel = 0.15;   // profile filter slack relative to the profile maximum
    double merge_tol = 0.0;        // duplicate profiles (h/4)
    double frame_radius = 0.0;     // probe ball for fiber frames (2 h)
    double tol_frame = 1e-3;
    double max_condition = 1e13;
};

// Sources as coefficient columns over the elementary basis (node, U-vertex, fiber) of the Gram engine.
struct SourceFamily {
    std::string label;
    Eigen::MatrixXcd coeffs;
    std::vector<int> unit_index; // set when every column is a single elementary source

    int size() const { return static_cast<int>(coeffs.cols()); }
};

struct ProfileSource {
    std::string kind; // "interior" or "ray"
    int x = -1;
    int y = -1;
    int point = -1; // region vertex for interior profiles
    double s = 0.0;
    double r_prime = 0.0;
};

struct DistanceProfileSet {
    Region region;
    std::vector<Eigen::VectorXd> profiles; // indexed like region
    std::vector<ProfileSource> provenance;
    std::vector<double> ray_s;   // per ray: first-arrival estimate of d(x, y)
    std::vector<double> ray_cut; // per ray: cut-time estimate, +infinity when none was accepted
    int rejected_lipschitz = 0;
    int rejected_unreachable = 0;
    int merged = 0;
};

struct RayPlan {
    int x = -1;
    int y = -1;
    std::vector<double> r_primes;
    std::vector<double> r_grid;
};

struct FiberProbe {
    int y = -1;
    Eigen::MatrixXcd coeffs;     // columns realize the recovered frame vectors
    Eigen::MatrixXcd gram;       // Gram of the recovered vectors (identity after orthonormalization)
    Eigen::MatrixXcd gram_raw;   // mu_y times the Gram before orthonormalization
    Eigen::MatrixXcd values;     // recovered vectors evaluated at y in the data trivialization
    double frame_defect = 0.0;   // max |gram_raw - I|
    double condition = 0.0;
};

// Edge transports and potentials on part of a graph.
struct LocalConnection {
    int rank = 1;
    std::map<std::pair<int, int>, Eigen::MatrixXcd> transports; // key (a,b) with a < b, maps E_b -> E_a
    std::map<int, Eigen::MatrixXcd> potentials;

    bool has_edge(int x, int y) const;
    Eigen::MatrixXcd transport(int x, int y) const;
    void set_transport(int x, int y, const Eigen::MatrixXcd& u);
};

struct RecoveredOperator {
    Region chart;
    LocalConnection connection;
    double unitarity_defect = 0.0;   // before polar correction
    double hermiticity_defect = 0.0; // before symmetrization
    double reverse_mismatch = 0.0;   // |U_xy - U_yx^*| between the two row estimates
    double fit_residual = 0.0;       // relative least-squares residual
    int samples = 0;
};

struct GaugeReport {
    double holonomy_deviation = 0.0;
    double potential_deviation = 0.0;
    int loops = 0;
    int vertices = 0;
    double tol = 1e-3;
    bool pass = false;
    std::vector<cplx> holonomy_recovered;
    std::vector<cplx> holonomy_truth;
};

cplx holonomy_trace(const LocalConnection& c, const std::vector<int>& loop);
GaugeReport gauge_invariant_compare(const LocalConnection& recovered, const LocalConnection& truth,
                                    const std::vector<std::vector<int>>& loops, double tol = 1e-3);

struct ExteriorSweep {
    double baseline = 0.0;             // max residual of the targets against the x-span alone
    std::vector<double> distances;     // per region vertex z
    std::vector<std::vector<double>> residuals; // per z, per r-grid value
};

class Reconstructor {
public:
    Reconstructor(const WaveMapData& wave, LocalStructure local, double T, ProbeConfig cfg = {});

    const WaveMapData& wave() const { return wave_; }
    const LocalStructure& local() const { return local_; }
    const ProbeConfig& config() const { return cfg_; }
    // Gram engine over sources with nodes 1..T/dt, built on first use.
    const BlagoEngine& engine() const;
    double mesh() const { return h_; }
    double horizon() const { return T_; }
    int horizon_steps() const { return nT_; }
    // Intrinsic distances inside U from the local metric, by region index.
    const Eigen::MatrixXd& local_distances() const { return dU_; }

    // Elementary sources in (T - tau, T) x B(x, delta).
    SourceFamily box_family(int x, double delta, double tau) const;
    // Temporal bumps in (T - tau, T) times a spatial hat of the configured radius around y, one per fiber index.
    SourceFamily smooth_family(int y, double tau) const;
    // Relative residual of projecting each target state onto the span of the span states.
    Eigen::VectorXd projection_residual(const SourceFamily& targets, const SourceFamily& span) const;
    // Whether B(x,tx) is contained in B(y,ty) u B(z,tz), judged from the target residual.
    bool containment_test(int x, double tx, int y, double ty, int z, double tz, double tol_res) const;
    double containment_residual(int x, double tx, int y, double ty, int z, double tz) const;

    double first_arrival_distance(int x, int y) const;
    double first_arrival_distance(int x, int y, double eta) const;
    // By region index.
    Eigen::MatrixXd first_arrival_matrix() const;

    // Returns +infinity when no grid value is accepted.
    double cut_time_estimate(int x, int y, double s, const std::vector<double>& r_grid) const;
    std::vector<double> cut_residuals(int x, int y, double s, const std::vector<double>& r_grid) const;

    double exterior_distance(int x, int y, double s, double r_prime, int z, const std::vector<double>& r_grid) const;
    ExteriorSweep exterior_sweep(int x, int y, double s, double r_prime, const std::vector<double>& r_grid) const;

    DistanceProfileSet distance_family(const std::vector<RayPlan>& plan) const;

    FiberProbe recover_fiber_frame(int y) const;
    RecoveredOperator recover_local_operator(const Region& chart) const;

private:
    int ridx(int v) const;
    int col(int node, int ridx, int a) const { return ((node - 1) * nU_ + ridx) * r_ + a; }
    double target_window(double r, double s, double eps) const;
    Eigen::MatrixXcd gram_columns(const SourceFamily& s) const;
    // Observed state w(T) on U of the elementary source at column i.
    Eigen::VectorXcd elementary_state(int node, int ridx, int a) const;
    ExteriorSweep exterior_impl(int x, int y, double s, double r_prime, const std::vector<double>& r_grid,
                                bool parallel) const;

    WaveMapData wave_;
    LocalStructure local_;
    double T_;
    int nT_, nU_, r_;
    double h_;
    ProbeConfig cfg_;
    mutable std::optional<BlagoEngine> engine_;
    mutable std::once_flag engine_once_;
    Eigen::MatrixXd dU_;
    std::vector<Eigen::MatrixXcd> H_;
};

} // namespace fcl
