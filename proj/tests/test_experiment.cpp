#include "doctest.h"

#include "fcl/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fcl;
namespace fs = std::filesystem;

namespace {

json smoke()
{
    return json::parse(R"({
        "name": "smoke",
        "manifold": {"kind": "cycle", "counts": [8], "lengths": [8.0]},
        "bundle": {"rank": 1},
        "orders": [0.5],
        "T": 1.0,
        "dt": 0.1,
        "region": {"kind": "arc", "start": 0, "length": 3},
        "tasks": ["verify_spectral"]
    })");
}

fs::path scratch_dir(const std::string& name)
{
    fs::path p = fs::temp_directory_path() / ("fcl_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string error_of(const json& j)
{
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("config validation")
{
    CHECK_NOTHROW(parse_config(smoke()));

    json j = smoke();
    j["T"] = 0.0;
    CHECK(error_of(j).rfind("T:", 0) == 0);
    j["T"] = -1.0;
    CHECK(error_of(j).rfind("T:", 0) == 0);

    j = smoke();
    j["dt"] = 0.3;
    CHECK_FALSE(error_of(j).empty());

    j = smoke();
    j["tasks"] = json::array();
    CHECK(error_of(j).rfind("tasks", 0) == 0);

    j = smoke();
    j["tasks"] = {"verify_everything"};
    CHECK(error_of(j).rfind("tasks", 0) == 0);

    j = smoke();
    j["bogus"] = 1;
    CHECK(error_of(j).rfind("bogus", 0) == 0);

    j = smoke();
    j["region"]["radius"] = "wide";
    CHECK(error_of(j).rfind("region.radius", 0) == 0);

    j = smoke();
    j["tolerances"] = {{"semigroup", 1e-3}};
    CHECK(parse_config(j).tolerances.at("semigroup") == 1e-3);
    j["tolerances"] = {{"nonsense", 1e-3}};
    CHECK(error_of(j).rfind("tolerances.nonsense", 0) == 0);

    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("resolved config round-trips")
{
    json j = smoke();
    j["probe"] = {{"tol_rel", 0.4}};
    j["rays"] = json::array({{{"x", 1}, {"y", 2}, {"k_max", 5}}});
    auto c = parse_config(j);
    auto again = parse_config(config_to_json(c));
    CHECK(config_to_json(again) == config_to_json(c));
    CHECK(again.probe.tol_rel == 0.4);
    CHECK(again.rays.at(0).k_max == 5);

    apply_seed_override(c, 40);
    CHECK(c.seed == 40);
    CHECK(c.connection.seed == 41);
    CHECK(c.potential.seed == 42);
}

TEST_CASE("report serialization round-trips")
{
    Report r;
    r.name = "x";
    r.status = "fail";
    r.seed = 9;
    r.workers = 2;
    r.runtime_s = 0.25;
    r.config = config_to_json(parse_config(smoke()));
    TaskReport t;
    t.task = "verify_spectral";
    t.status = "fail";
    t.runtime_s = 0.125;
    t.metrics.push_back({"eigen_residual", 3.5e-9, 1e-10, true, false});
    t.info["lambda_max"] = 4.0;
    t.artifacts.push_back("spectrum.csv");
    r.tasks.push_back(t);
    CHECK(report_from_json(report_to_json(r)) == r);
    CHECK(report_from_json(json::parse(report_to_json(r).dump())) == r);
}

TEST_CASE("spectral and gauge tasks pass on the cycle")
{
    json j = smoke();
    j["tasks"] = {"verify_spectral", "verify_gauge_equivariance"};
    auto c = parse_config(j);
    c.output_dir = scratch_dir("spectral").string();
    Report r = run_experiment(c);
    REQUIRE(r.tasks.size() == 2);
    CHECK(r.passed());
    for (const auto& t : r.tasks) {
        CHECK(t.status == "pass");
        CHECK(t.error.empty());
        for (const auto& m : t.metrics)
            CHECK(m.value <= m.tol);
    }
    CHECK(r.tasks[0].info.at("lambda_max") == doctest::Approx(4.0));
    CHECK(fs::exists(fs::path(c.output_dir) / "spectrum.csv"));

    auto files = emit_report(r, c.output_dir);
    CHECK(files.size() == 2);
    CHECK(report_from_json(read_json_file(files[0])) == r);
    std::ifstream csv(files[1]);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "task,status,metric,value,tol,bound,pass");

    Report r2 = run_experiment(c);
    CHECK(r2.tasks[0].metrics == r.tasks[0].metrics);
}

TEST_CASE("task errors are recorded and later tasks still run")
{
    json j = smoke();
    j["tasks"] = {"reconstruct_operator", "verify_spectral"};
    j["region"] = {{"kind", "vertices"}, {"vertices", {0, 4}}};
    auto c = parse_config(j);
    c.output_dir = scratch_dir("errors").string();
    Report r = run_experiment(c);
    REQUIRE(r.tasks.size() == 2);
    CHECK(r.tasks[0].status == "error");
    CHECK_FALSE(r.tasks[0].error.empty());
    CHECK(r.tasks[1].status == "pass");
    CHECK_FALSE(r.passed());
}

TEST_CASE("distance artifacts have one row per profile")
{
    json j = json::parse(R"({
        "name": "dist",
        "manifold": {"kind": "cycle", "counts": [32], "lengths": [6.283185307179586]},
        "T": 2.4,
        "dt": 0.1,
        "region": {"kind": "arc", "start": 0, "length": 10},
        "rays": [{"x": 6, "y": 9, "k_min": 4, "k_max": 7}],
        "tasks": ["reconstruct_distances"]
    })");
    auto c = parse_config(j);
    c.output_dir = scratch_dir("dist").string();
    Report r = run_experiment(c);
    REQUIRE(r.tasks.size() == 1);
    CHECK(r.tasks[0].error.empty());
    std::ifstream f(fs::path(c.output_dir) / "distances.csv");
    REQUIRE(f.good());
    std::string line;
    std::getline(f, line);
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
    int rows = 0;
    while (std::getline(f, line))
        rows += !line.empty();
    CHECK(rows == static_cast<int>(r.tasks[0].info.at("profiles")));
    CHECK(rows > 0);
}
