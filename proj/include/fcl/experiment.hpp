#pragma once

#include "fcl/bundle.hpp"
#include "fcl/io.hpp"
#include "fcl/reconstruction.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcl {

// Field-level configuration problem; what() starts with the offending key path.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct RegionSpec {
    std::string kind = "arc"; // arc | ball | grid_block | vertices | full
    int start = 0, length = 0;              // arc
    int center = 0;                         // ball
    double radius = 0.0;                    // ball
    int i0 = 0, j0 = 0, ni = 0, nj = 0;     // grid_block
    std::vector<int> vertices;              // vertices
};

struct RaySpec {
    int x = 0, y = 0;
    int k_min = 4;  // r' = k h for k_min <= k <= k_max
    int k_max = -1; // -1: up to r_max
};

struct ExperimentConfig {
    std::string name = "experiment";
    BuilderSpec manifold;
    int rank = 1;
    ConnectionSpec connection;
    PotentialSpec potential;
    std::vector<double> orders;
    double T = 0.0;
    double dt = 0.0;
    RegionSpec region;
    std::uint64_t seed = 1;
    std::map<std::string, double> tolerances; // defaults merged with overrides
    std::vector<std::string> tasks;
    std::string output_dir;

    int samples = 20;        // seeded sections per spectral check
    int blago_pairs = 100;
    std::vector<double> transmutation_times = {0.1, 1.0};
    std::vector<RaySpec> rays;
    double r_max = 0.0;      // 0: T - 3h
    std::vector<int> chart;  // empty: every U vertex whose neighbors all lie in U
    ProbeConfig probe;
};

const std::vector<std::string>& known_tasks();
const std::map<std::string, double>& default_tolerances();

// Parses and validates; throws ConfigError.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);
void validate(const ExperimentConfig& cfg);
// Fully resolved echo; parse_config(config_to_json(c)) reproduces c.
json config_to_json(const ExperimentConfig& cfg);
// Replaces the base seed and the bundle seeds by k, k+1, k+2.
void apply_seed_override(ExperimentConfig& cfg, std::uint64_t k);

struct Metric {
    std::string name;
    double value = 0.0;
    double tol = 0.0;
    bool upper = true; // value <= tol passes; otherwise value >= tol passes
    bool pass = false;

    bool operator==(const Metric&) const = default;
};

struct TaskReport {
    std::string task;
    std::string status = "error"; // pass | fail | error
    double runtime_s = 0.0;
    std::vector<Metric> metrics;
    std::map<std::string, double> info;
    std::vector<std::string> artifacts;
    std::string error;

    bool operator==(const TaskReport&) const = default;
};

struct Report {
    std::string name;
    std::string status = "fail";
    std::uint64_t seed = 0;
    int workers = 1;
    double runtime_s = 0.0;
    json config;
    std::vector<TaskReport> tasks;

    bool passed() const { return status == "pass"; }
    bool operator==(const Report&) const = default;
};

json report_to_json(const Report& r);
Report report_from_json(const json& j);

// Runs every task in order; task errors are recorded and the remaining tasks still run.
// CSV artifacts go to cfg.output_dir, which is created if needed.
Report run_experiment(const ExperimentConfig& cfg);
// Writes report.json and/or summary.csv into dir; returns the written paths.
std::vector<std::string> emit_report(const Report& r, const std::string& dir,
                                     const std::vector<std::string>& formats = {"json", "csv"});

} // namespace fcl
