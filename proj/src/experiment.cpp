#include "fcl/experiment.hpp"
#include "fcl/parallel.hpp"
#include "fcl/propagators.hpp"
#include "fcl/s2s.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>

namespace fcl {

namespace fs = std::filesystem;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const std::vector<std::string>& known_tasks()
{
    static const std::vector<std::string> t = {"verify_spectral",           "verify_transmutation",
                                               "verify_blago",              "verify_gauge_equivariance",
                                               "reconstruct_distances",     "reconstruct_operator"};
    return t;
}

const std::map<std::string, double>& default_tolerances()
{
    static const std::map<std::string, double> t = {
        {"eigen_residual", 1e-10},   {"orthonormality", 1e-10},  {"fractional_roundtrip", 1e-10},
        {"gamma_route", 1e-6},       {"energy_drift", 1e-9},     {"semigroup", 1e-10},
        {"transmutation", 1e-8},     {"blago", 1e-6},            {"gauge_blocks", 1e-11},
        {"heat_kernel", 1e-10},      {"first_arrival", 0.15},    {"cut_time", 0.15},
        {"profile_sup", 0.15},       {"profile_fraction", 0.9},  {"gauge_invariants", 1e-3},
        {"gauge_rerun", 1e-10},
    };
    return t;
}

namespace {

using ProbeField = double ProbeConfig::*;
const std::vector<std::pair<std::string, ProbeField>>& probe_fields()
{
    static const std::vector<std::pair<std::string, ProbeField>> f = {
        {"delta", &ProbeConfig::delta},
        {"target_radius", &ProbeConfig::target_radius},
        {"target_halfwidth", &ProbeConfig::target_halfwidth},
        {"eps", &ProbeConfig::eps},
        {"cut_eps", &ProbeConfig::cut_eps},
        {"tol_rel", &ProbeConfig::tol_rel},
        {"cut_tol_rel", &ProbeConfig::cut_tol_rel},
        {"reg_rel", &ProbeConfig::reg_rel},
        {"eta", &ProbeConfig::eta},
        {"lipschitz_rel", &ProbeConfig::lipschitz_rel},
        {"merge_tol", &ProbeConfig::merge_tol},
        {"frame_radius", &ProbeConfig::frame_radius},
        {"tol_frame", &ProbeConfig::tol_frame},
        {"max_condition", &ProbeConfig::max_condition},
    };
    return f;
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!j.is_object())
        fail(path.empty() ? "<root>" : path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || it.key() == a;
        if (!ok)
            fail(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
    }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path)
{
    const std::string p = path.empty() ? key : path + "." + key;
    if (!j.contains(key))
        fail(p, "missing required field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(p, "wrong type");
    }
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T dflt)
{
    return j.contains(key) ? get<T>(j, key, path) : dflt;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t tag)
{
    std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + tag * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Eigen::VectorXcd random_vector(Eigen::Index n, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = cplx(nd(g), nd(g));
    return v;
}

Region make_region(const RegionSpec& r, const DiscreteManifold& m, const BuilderSpec& ms)
{
    const int n = m.num_vertices();
    if (r.kind == "arc") {
        if (ms.kind != "cycle")
            fail("region.kind", "arc regions need a cycle manifold");
        if (r.length < 1 || r.length > n)
            fail("region.length", "must lie in [1, number of vertices]");
        return arc_region(n, ((r.start % n) + n) % n, r.length);
    }
    if (r.kind == "ball") {
        if (r.center < 0 || r.center >= n)
            fail("region.center", "vertex out of range");
        if (!(r.radius >= 0.0))
            fail("region.radius", "must be nonnegative");
        return ball_region(m, r.center, r.radius);
    }
    if (r.kind == "grid_block") {
        if (ms.kind != "torus_grid")
            fail("region.kind", "grid_block regions need a torus_grid manifold");
        const int nx = ms.counts[0], ny = ms.counts[1];
        if (r.ni < 1 || r.nj < 1 || r.ni > nx || r.nj > ny)
            fail("region.ni", "block must fit in the grid");
        std::vector<int> v;
        for (int a = 0; a < r.ni; ++a)
            for (int b = 0; b < r.nj; ++b)
                v.push_back(((r.i0 + a) % nx + nx) % nx * ny + ((r.j0 + b) % ny + ny) % ny);
        return Region(v);
    }
    if (r.kind == "vertices") {
        for (int v : r.vertices)
            if (v < 0 || v >= n)
                fail("region.vertices", "vertex " + std::to_string(v) + " out of range");
        return Region(r.vertices);
    }
    if (r.kind == "full")
        return full_region(m);
    fail("region.kind", "unknown region kind '" + r.kind + "'");
}

// Next vertex along the straight grid line through prev -> v.
int straight_next(const BuilderSpec& ms, int prev, int v)
{
    if (ms.kind == "cycle") {
        const int n = ms.counts[0];
        return ((2 * v - prev) % n + n) % n;
    }
    const int nx = ms.counts[0], ny = ms.counts[1];
    auto wrap = [](int a, int n) { return ((a % n) + n) % n; };
    const int pi = prev / ny, pj = prev % ny, vi = v / ny, vj = v % ny;
    int di = vi - pi, dj = vj - pj;
    if (di > 1) di -= nx;
    if (di < -1) di += nx;
    if (dj > 1) dj -= ny;
    if (dj < -1) dj += ny;
    return wrap(vi + di, nx) * ny + wrap(vj + dj, ny);
}

// Ray from x through y as a vertex walk, one edge per step.
std::vector<int> ray_walk(const BuilderSpec& ms, const DiscreteManifold& m, int x, int y, int steps)
{
    std::vector<int> w = {x};
    const auto dx = distances_from(m, x);
    int first = -1;
    for (const auto& nb : m.neighbors(x)) {
        const auto dn = distances_from(m, nb.vertex);
        if (std::abs(dx[y] - (m.edge(nb.edge).length + dn[y])) < 1e-9 * std::max(1.0, dx[y])) {
            first = nb.vertex;
            break;
        }
    }
    if (first < 0)
        throw std::invalid_argument("ray: no neighbor of x lies on a shortest path to y");
    w.push_back(first);
    while (static_cast<int>(w.size()) <= steps)
        w.push_back(straight_next(ms, w[w.size() - 2], w.back()));
    return w;
}

} // namespace

ExperimentConfig parse_config(const json& j)
{
    check_keys(j, "", {"name", "manifold", "bundle", "orders", "T", "dt", "region", "seed", "tolerances", "tasks",
                       "output_dir", "samples", "blago_pairs", "transmutation_times", "rays", "r_max", "chart",
                       "probe"});
    ExperimentConfig c;
    c.name = get_or<std::string>(j, "name", "", c.name);

    const json& m = j.contains("manifold") ? j.at("manifold") : json();
    if (m.is_null())
        fail("manifold", "missing required field");
    check_keys(m, "manifold", {"kind", "counts", "lengths"});
    c.manifold.kind = get<std::string>(m, "kind", "manifold");
    c.manifold.counts = get<std::vector<int>>(m, "counts", "manifold");
    c.manifold.lengths = get<std::vector<double>>(m, "lengths", "manifold");

    if (j.contains("bundle")) {
        const json& b = j.at("bundle");
        check_keys(b, "bundle", {"rank", "connection", "potential"});
        c.rank = get_or<int>(b, "rank", "bundle", 1);
        if (b.contains("connection")) {
            const json& cn = b.at("connection");
            check_keys(cn, "bundle.connection", {"kind", "seed", "transports"});
            c.connection.kind = get_or<std::string>(cn, "kind", "bundle.connection", "trivial");
            c.connection.seed = get_or<std::uint64_t>(cn, "seed", "bundle.connection", 0);
            if (cn.contains("transports"))
                for (const auto& t : cn.at("transports"))
                    c.connection.transports.push_back(matrix_from_json(t));
        }
        if (b.contains("potential")) {
            const json& p = b.at("potential");
            check_keys(p, "bundle.potential", {"kind", "seed", "scale", "offset", "values"});
            c.potential.kind = get_or<std::string>(p, "kind", "bundle.potential", "zero");
            c.potential.seed = get_or<std::uint64_t>(p, "seed", "bundle.potential", 0);
            c.potential.scale = get_or<double>(p, "scale", "bundle.potential", 1.0);
            c.potential.offset = get_or<double>(p, "offset", "bundle.potential", 0.0);
            if (p.contains("values"))
                for (const auto& t : p.at("values"))
                    c.potential.values.push_back(matrix_from_json(t));
        }
    }

    c.orders = get_or<std::vector<double>>(j, "orders", "", {});
    c.T = get<double>(j, "T", "");
    c.dt = get<double>(j, "dt", "");

    if (!j.contains("region"))
        fail("region", "missing required field");
    const json& r = j.at("region");
    check_keys(r, "region", {"kind", "start", "length", "center", "radius", "i0", "j0", "ni", "nj", "vertices"});
    c.region.kind = get<std::string>(r, "kind", "region");
    c.region.start = get_or<int>(r, "start", "region", 0);
    c.region.length = get_or<int>(r, "length", "region", 0);
    c.region.center = get_or<int>(r, "center", "region", 0);
    c.region.radius = get_or<double>(r, "radius", "region", 0.0);
    c.region.i0 = get_or<int>(r, "i0", "region", 0);
    c.region.j0 = get_or<int>(r, "j0", "region", 0);
    c.region.ni = get_or<int>(r, "ni", "region", 0);
    c.region.nj = get_or<int>(r, "nj", "region", 0);
    c.region.vertices = get_or<std::vector<int>>(r, "vertices", "region", {});

    c.seed = get_or<std::uint64_t>(j, "seed", "", 1);
    c.tolerances = default_tolerances();
    if (j.contains("tolerances")) {
        const json& t = j.at("tolerances");
        if (!t.is_object())
            fail("tolerances", "expected an object");
        for (auto it = t.begin(); it != t.end(); ++it) {
            if (!c.tolerances.count(it.key()))
                fail("tolerances." + it.key(), "unknown tolerance");
            if (!it.value().is_number())
                fail("tolerances." + it.key(), "wrong type");
            c.tolerances[it.key()] = it.value().get<double>();
        }
    }
    c.tasks = get<std::vector<std::string>>(j, "tasks", "");
    c.output_dir = get_or<std::string>(j, "output_dir", "", "");
    c.samples = get_or<int>(j, "samples", "", c.samples);
    c.blago_pairs = get_or<int>(j, "blago_pairs", "", c.blago_pairs);
    c.transmutation_times = get_or<std::vector<double>>(j, "transmutation_times", "", c.transmutation_times);
    if (j.contains("rays")) {
        if (!j.at("rays").is_array())
            fail("rays", "expected an array");
        for (std::size_t i = 0; i < j.at("rays").size(); ++i) {
            const json& ry = j.at("rays")[i];
            const std::string p = "rays[" + std::to_string(i) + "]";
            check_keys(ry, p, {"x", "y", "k_min", "k_max"});
            RaySpec s;
            s.x = get<int>(ry, "x", p);
            s.y = get<int>(ry, "y", p);
            s.k_min = get_or<int>(ry, "k_min", p, s.k_min);
            s.k_max = get_or<int>(ry, "k_max", p, s.k_max);
            c.rays.push_back(s);
        }
    }
    c.r_max = get_or<double>(j, "r_max", "", 0.0);
    c.chart = get_or<std::vector<int>>(j, "chart", "", {});
    if (j.contains("probe")) {
        const json& p = j.at("probe");
        if (!p.is_object())
            fail("probe", "expected an object");
        for (auto it = p.begin(); it != p.end(); ++it) {
            auto f = std::find_if(probe_fields().begin(), probe_fields().end(),
                                  [&](const auto& e) { return e.first == it.key(); });
            if (f == probe_fields().end())
                fail("probe." + it.key(), "unknown key");
            if (!it.value().is_number())
                fail("probe." + it.key(), "wrong type");
            c.probe.*(f->second) = it.value().get<double>();
        }
    }
    validate(c);
    return c;
}

ExperimentConfig load_config(const std::string& path)
{
    json j;
    try {
        j = read_json_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return parse_config(j);
}

void validate(const ExperimentConfig& c)
{
    const auto& ms = c.manifold;
    if (ms.kind == "cycle") {
        if (ms.counts.size() != 1 || ms.lengths.size() != 1)
            fail("manifold.counts", "cycle needs one count and one length");
    } else if (ms.kind == "torus_grid") {
        if (ms.counts.size() != 2 || ms.lengths.size() != 2)
            fail("manifold.counts", "torus_grid needs two counts and two lengths");
    } else {
        fail("manifold.kind", "unknown manifold kind '" + ms.kind + "'");
    }
    for (int n : ms.counts)
        if (n < 3)
            fail("manifold.counts", "each count must be at least 3");
    for (double l : ms.lengths)
        if (!(l > 0.0))
            fail("manifold.lengths", "lengths must be positive");
    if (c.rank < 1)
        fail("bundle.rank", "must be at least 1");
    if (!(c.T > 0.0))
        fail("T", "must be positive");
    if (!(c.dt > 0.0))
        fail("dt", "must be positive");
    const double q = c.T / c.dt;
    if (std::abs(q - std::round(q)) > 1e-9 * q || std::round(q) < 1)
        fail("dt", "must divide T");
    if (c.tasks.empty())
        fail("tasks", "must not be empty");
    std::set<std::string> seen;
    for (const auto& t : c.tasks) {
        if (std::find(known_tasks().begin(), known_tasks().end(), t) == known_tasks().end())
            fail("tasks", "unknown task '" + t + "'");
        if (!seen.insert(t).second)
            fail("tasks", "task '" + t + "' listed twice");
    }
    for (double s : c.orders)
        if (!(s > 0.0 && s < 1.0))
            fail("orders", "orders must lie in (0,1)");
    if ((seen.count("verify_spectral") || seen.count("verify_gauge_equivariance")) && c.orders.empty())
        fail("orders", "required by verify_spectral and verify_gauge_equivariance");
    if (c.samples < 1)
        fail("samples", "must be at least 1");
    if (c.blago_pairs < 1)
        fail("blago_pairs", "must be at least 1");
    for (double t : c.transmutation_times)
        if (!(t > 0.0))
            fail("transmutation_times", "times must be positive");
    for (const auto& [k, v] : c.tolerances)
        if (!(v > 0.0))
            fail("tolerances." + k, "must be positive");
    if (c.r_max < 0.0 || c.r_max > c.T)
        fail("r_max", "must lie in [0, T]");

    const DiscreteManifold m = build_manifold(ms);
    const Region u = make_region(c.region, m, ms);
    if (u.empty())
        fail("region", "region is empty");
    if (seen.count("reconstruct_distances")) {
        if (c.rays.empty())
            fail("rays", "required by reconstruct_distances");
        for (std::size_t i = 0; i < c.rays.size(); ++i) {
            const auto& r = c.rays[i];
            const std::string p = "rays[" + std::to_string(i) + "]";
            if (!u.contains(r.x) || !u.contains(r.y) || r.x == r.y)
                fail(p, "x and y must be distinct vertices of the region");
            if (r.k_min < 1 || (r.k_max >= 0 && r.k_max < r.k_min))
                fail(p + ".k_min", "need 1 <= k_min <= k_max");
        }
    }
    for (int v : c.chart)
        if (!u.contains(v))
            fail("chart", "vertex " + std::to_string(v) + " is not in the region");
}

json config_to_json(const ExperimentConfig& c)
{
    json conn = {{"kind", c.connection.kind}, {"seed", c.connection.seed}};
    if (!c.connection.transports.empty()) {
        json t = json::array();
        for (const auto& m : c.connection.transports)
            t.push_back(matrix_to_json(m));
        conn["transports"] = t;
    }
    json pot = {{"kind", c.potential.kind},
                {"seed", c.potential.seed},
                {"scale", c.potential.scale},
                {"offset", c.potential.offset}};
    if (!c.potential.values.empty()) {
        json t = json::array();
        for (const auto& m : c.potential.values)
            t.push_back(matrix_to_json(m));
        pot["values"] = t;
    }
    json region = {{"kind", c.region.kind}};
    if (c.region.kind == "arc")
        region.update({{"start", c.region.start}, {"length", c.region.length}});
    else if (c.region.kind == "ball")
        region.update({{"center", c.region.center}, {"radius", c.region.radius}});
    else if (c.region.kind == "grid_block")
        region.update({{"i0", c.region.i0}, {"j0", c.region.j0}, {"ni", c.region.ni}, {"nj", c.region.nj}});
    else if (c.region.kind == "vertices")
        region["vertices"] = c.region.vertices;
    json rays = json::array();
    for (const auto& r : c.rays)
        rays.push_back({{"x", r.x}, {"y", r.y}, {"k_min", r.k_min}, {"k_max", r.k_max}});
    json probe = json::object();
    for (const auto& [k, f] : probe_fields())
        probe[k] = c.probe.*f;
    return {{"name", c.name},
            {"manifold", {{"kind", c.manifold.kind}, {"counts", c.manifold.counts}, {"lengths", c.manifold.lengths}}},
            {"bundle", {{"rank", c.rank}, {"connection", conn}, {"potential", pot}}},
            {"orders", c.orders},
            {"T", c.T},
            {"dt", c.dt},
            {"region", region},
            {"seed", c.seed},
            {"tolerances", c.tolerances},
            {"tasks", c.tasks},
            {"output_dir", c.output_dir},
            {"samples", c.samples},
            {"blago_pairs", c.blago_pairs},
            {"transmutation_times", c.transmutation_times},
            {"rays", rays},
            {"r_max", c.r_max},
            {"chart", c.chart},
            {"probe", probe}};
}

void apply_seed_override(ExperimentConfig& cfg, std::uint64_t k)
{
    cfg.seed = k;
    cfg.connection.seed = k + 1;
    cfg.potential.seed = k + 2;
}

// ---------------------------------------------------------------------------------------------
// report serialization

json report_to_json(const Report& r)
{
    json tasks = json::array();
    for (const auto& t : r.tasks) {
        json metrics = json::array();
        for (const auto& m : t.metrics)
            metrics.push_back({{"name", m.name}, {"value", m.value}, {"tol", m.tol}, {"upper", m.upper},
                               {"pass", m.pass}});
        tasks.push_back({{"task", t.task},
                         {"status", t.status},
                         {"runtime_s", t.runtime_s},
                         {"metrics", metrics},
                         {"info", t.info},
                         {"artifacts", t.artifacts},
                         {"error", t.error}});
    }
    return {{"schema", "fcl-report/1"}, {"name", r.name},       {"status", r.status}, {"seed", r.seed},
            {"workers", r.workers},     {"runtime_s", r.runtime_s}, {"config", r.config}, {"tasks", tasks}};
}

Report report_from_json(const json& j)
{
    if (j.at("schema") != "fcl-report/1")
        throw std::invalid_argument("report_from_json: unknown schema");
    Report r;
    r.name = j.at("name").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.workers = j.at("workers").get<int>();
    r.runtime_s = j.at("runtime_s").get<double>();
    r.config = j.at("config");
    for (const auto& t : j.at("tasks")) {
        TaskReport tr;
        tr.task = t.at("task").get<std::string>();
        tr.status = t.at("status").get<std::string>();
        tr.runtime_s = t.at("runtime_s").get<double>();
        for (const auto& m : t.at("metrics"))
            tr.metrics.push_back({m.at("name").get<std::string>(), m.at("value").get<double>(),
                                  m.at("tol").get<double>(), m.at("upper").get<bool>(), m.at("pass").get<bool>()});
        tr.info = t.at("info").get<std::map<std::string, double>>();
        tr.artifacts = t.at("artifacts").get<std::vector<std::string>>();
        tr.error = t.at("error").get<std::string>();
        r.tasks.push_back(std::move(tr));
    }
    return r;
}

// ---------------------------------------------------------------------------------------------
// tasks

namespace {

class Scene {
public:
    explicit Scene(const ExperimentConfig& c)
        : cfg(c), m(build_manifold(c.manifold)), b(build_bundle(m, c.rank, c.connection, c.potential)),
          u(make_region(c.region, m, c.manifold))
    {
    }

    const SpectralOperator& op()
    {
        if (!op_)
            op_.emplace(b);
        return *op_;
    }
    const WaveMapData& wave()
    {
        if (!wave_)
            wave_ = wave_map_assemble(op(), u, TimeGrid(2.0 * cfg.T, cfg.dt));
        return *wave_;
    }
    int nT() const { return static_cast<int>(std::llround(cfg.T / cfg.dt)); }

    const ExperimentConfig& cfg;
    DiscreteManifold m;
    HermitianBundle b;
    Region u;

private:
    std::optional<SpectralOperator> op_;
    std::optional<WaveMapData> wave_;
};

struct TaskContext {
    Scene& scene;
    TaskReport& out;
    std::string dir;

    double tol(const std::string& k) const { return scene.cfg.tolerances.at(k); }
    void metric(const std::string& name, double value, const std::string& tol_key, bool upper = true)
    {
        const double t = tol(tol_key);
        const bool pass = std::isfinite(value) && (upper ? value <= t : value >= t);
        out.metrics.push_back({name, value, t, upper, pass});
    }
    std::string artifact(const std::string& file)
    {
        std::string p = (fs::path(dir) / file).string();
        out.artifacts.push_back(p);
        return p;
    }
};

double rel_l2(const HermitianBundle& b, const Section& a, const Section& ref)
{
    return l2_norm(b, a - ref) / l2_norm(b, ref);
}

void task_spectral(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const SpectralOperator& op = sc.op();
    const auto& V = op.eigensections();
    const auto& lam = op.eigenvalues();
    const double scale = std::max(1.0, std::abs(op.lambda_max()));

    double eig = 0.0;
    Eigen::MatrixXcd PV = op.matrix() * V;
    for (int k = 0; k < op.dim(); ++k)
        eig = std::max(eig, (PV.col(k) - lam(k) * V.col(k)).norm() / (scale * V.col(k).norm()));
    Eigen::VectorXd mu(op.dim());
    for (int x = 0; x < sc.m.num_vertices(); ++x)
        mu.segment(x * op.rank(), op.rank()).setConstant(sc.m.volume(x));
    Eigen::MatrixXcd gram = V.adjoint() * mu.cast<cplx>().asDiagonal() * V;
    const double ortho = (gram - Eigen::MatrixXcd::Identity(op.dim(), op.dim())).cwiseAbs().maxCoeff();
    ctx.metric("eigen_residual", eig, "eigen_residual");
    ctx.metric("orthonormality", ortho, "orthonormality");

    const Eigen::MatrixXcd Pc = op.kernel_projector().complement;
    double rt = 0.0, gr = 0.0;
    int evaluations = 0;
    for (std::size_t o = 0; o < sc.cfg.orders.size(); ++o) {
        const double s = sc.cfg.orders[o];
        for (int i = 0; i < sc.cfg.samples; ++i) {
            Section f = Pc * random_vector(op.dim(), mix(sc.cfg.seed, 1000 * o + i));
            Section g = fractional_inverse_spectral(op, s, f);
            rt = std::max(rt, rel_l2(sc.b, fractional_power(op, s, g), f));
            QuadResult q = fractional_inverse_quadrature(op, s, f);
            evaluations += q.evaluations;
            gr = std::max(gr, rel_l2(sc.b, q.value, g));
        }
    }
    ctx.metric("fractional_roundtrip", rt, "fractional_roundtrip");
    ctx.metric("gamma_route", gr, "gamma_route");
    ctx.out.info["quadrature_evaluations"] = evaluations;

    Section u0 = random_vector(op.dim(), mix(sc.cfg.seed, 1)), u1 = random_vector(op.dim(), mix(sc.cfg.seed, 2));
    const double e0 = wave_energy(op, u0, u1, 0.0);
    double drift = 0.0;
    for (int k = 1; k <= 2 * sc.nT(); ++k)
        drift = std::max(drift, std::abs(wave_energy(op, u0, u1, k * sc.cfg.dt) - e0) / std::abs(e0));
    ctx.metric("energy_drift", drift, "energy_drift");

    double semi = 0.0;
    const double T = sc.cfg.T, dt = sc.cfg.dt;
    for (auto [s, t] : {std::pair{dt, 2 * dt}, std::pair{0.25 * T, 0.5 * T}, std::pair{0.5 * T, T}, std::pair{T, T}}) {
        Section lhs = heat_apply(op, s + t, u0);
        Section rhs = heat_apply(op, s, heat_apply(op, t, u0));
        semi = std::max(semi, rel_l2(sc.b, rhs, lhs));
    }
    ctx.metric("semigroup", semi, "semigroup");

    ctx.out.info["lambda_min"] = op.lambda_min();
    ctx.out.info["lambda_max"] = op.lambda_max();
    ctx.out.info["kernel_dim"] = op.kernel_dim();
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < op.dim(); ++k)
        rows.push_back({double(k), lam(k), op.is_kernel_mode(k) ? 1.0 : 0.0});
    write_csv(ctx.artifact("spectrum.csv"), {"k", "lambda", "kernel"}, rows);
}

void task_transmutation(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const SpectralOperator& op = sc.op();
    Section u = random_vector(op.dim(), mix(sc.cfg.seed, 3));
    double worst = 0.0;
    std::vector<std::vector<double>> rows;
    for (double t : sc.cfg.transmutation_times) {
        TransmutationReport r = transmutation_residual(op, t, u);
        worst = std::max(worst, r.max_mode_error);
        char key[64];
        std::snprintf(key, sizeof key, "printed_residual_t%g", t);
        ctx.out.info[key] = r.printed_residual;
        std::snprintf(key, sizeof key, "gaussian_residual_t%g", t);
        ctx.out.info[key] = r.gaussian_residual;
        for (int k = 0; k < op.dim(); ++k) {
            const double l = op.eigenvalues()(k);
            rows.push_back({t, l, std::exp(-t * l), gaussian_transmutation(t, l), printed_transmutation(t, l)});
        }
    }
    ctx.metric("gaussian_mode_error", worst, "transmutation");
    write_csv(ctx.artifact("transmutation.csv"), {"t", "lambda", "heat", "gaussian", "printed"}, rows);
}

void task_blago(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const SpectralOperator& op = sc.op();
    const WaveMapData& d = sc.wave();
    const int nT = sc.nT(), bd = d.block_dim();
    BlagoEngine eng(d, sc.cfg.T);
    const TimeGrid grid(sc.cfg.T, sc.cfg.dt);
    auto source = [&](std::uint64_t seed) {
        Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(bd, d.steps + 1);
        std::mt19937_64 g(seed);
        std::normal_distribution<double> nd;
        for (int n = 1; n < nT; ++n)
            for (int i = 0; i < bd; ++i)
                f(i, n) = cplx(nd(g), nd(g));
        return f;
    };
    auto state = [&](const Eigen::MatrixXcd& f) {
        Eigen::MatrixXcd full = extend_from_region(f.leftCols(nT + 1), sc.u, op.rank(), sc.m.num_vertices());
        return Section(duhamel_solve(op, full, grid).col(nT));
    };
    const int np = sc.cfg.blago_pairs;
    std::vector<double> rel(np), relnorm(np);
    parallel_for(np, [&](int p) {
        Eigen::MatrixXcd f = source(mix(sc.cfg.seed, 10000 + 2 * p)), h = source(mix(sc.cfg.seed, 10001 + 2 * p));
        Section wf = state(f), wh = state(h);
        cplx direct = l2_inner(sc.b, wf, wh);
        cplx blago = eng.inner(f, h);
        rel[p] = std::abs(blago - direct) / std::abs(direct);
        relnorm[p] = std::abs(blago - direct) / (l2_norm(sc.b, wf) * l2_norm(sc.b, wh));
    });
    ctx.metric("blago_relative", *std::max_element(rel.begin(), rel.end()), "blago");
    ctx.out.info["blago_relative_to_norms"] = *std::max_element(relnorm.begin(), relnorm.end());
    ctx.out.info["hermitian_defect"] = eng.hermitian_defect();
    ctx.out.info["pairs"] = np;
}

void task_gauge(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const SpectralOperator& op1 = sc.op();
    const int n = sc.m.num_vertices(), r = sc.cfg.rank;
    StructureIso iso = random_structure_iso(n, r, mix(sc.cfg.seed, 4));
    DiscreteManifold m2 = relabel_manifold(sc.m, iso.psi);
    HermitianBundle b2 = pullback_bundle(iso, sc.b, m2);
    SpectralOperator op2(b2);
    std::vector<int> v2;
    for (int x = 0; x < n; ++x)
        if (sc.u.contains(iso.psi[x]))
            v2.push_back(x);
    Region u2(v2);

    // restricted pullback: rows U2, columns U1
    Eigen::MatrixXcd Pm = Eigen::MatrixXcd::Zero(u2.size() * r, sc.u.size() * r);
    for (int i = 0; i < u2.size(); ++i)
        Pm.block(i * r, sc.u.index_of(iso.psi[u2[i]]) * r, r, r) = iso.fiber[u2[i]].adjoint();
    auto dev = [&](const Eigen::MatrixXcd& k1, const Eigen::MatrixXcd& k2) {
        return (Pm * k1 * Pm.adjoint() - k2).cwiseAbs().maxCoeff() / std::max(1e-300, k1.cwiseAbs().maxCoeff());
    };

    double blocks = 0.0;
    for (double s : sc.cfg.orders)
        blocks = std::max(blocks, dev(frac_map_assemble(op1, sc.u, s).kernel, frac_map_assemble(op2, u2, s).kernel));
    ctx.out.info["fractional_block_deviation"] = blocks;
    const WaveMapData& w1 = sc.wave();
    WaveMapData w2 = wave_map_assemble(op2, u2, TimeGrid(2.0 * sc.cfg.T, sc.cfg.dt));
    double wave = 0.0;
    for (int k = 1; k <= w1.steps; ++k)
        wave = std::max(wave, dev(w1.samples[k], w2.samples[k]));
    for (int k = 0; k < w1.steps; ++k)
        for (int q = 0; q < 5; ++q)
            wave = std::max(wave, dev(w1.moments[k][q], w2.moments[k][q]));
    ctx.out.info["wave_block_deviation"] = wave;
    ctx.metric("map_blocks", std::max(blocks, wave), "gauge_blocks");

    double heat = 0.0;
    for (int k = 0; k <= w1.steps; ++k) {
        const double t = k * sc.cfg.dt;
        auto phi = [t](double l) { return std::exp(-t * l); };
        heat = std::max(heat, dev(op1.kernel_block(phi, sc.u, sc.u), op2.kernel_block(phi, u2, u2)));
    }
    ctx.metric("heat_kernel", heat, "heat_kernel");
    ctx.out.info["isometry"] = iso_is_isometry(iso, m2, sc.m) ? 1.0 : 0.0;
}

// Writes the inverse-problem inputs and reads them back, so reconstruction sees only serialized map data.
ReconstructionInputs boundary_roundtrip(TaskContext& ctx, const WaveMapData& w, const HermitianBundle& b,
                                        const Region& u, const std::string& file)
{
    ReconstructionInputs in{w, extract_local_structure(b, u), ctx.scene.cfg.T};
    const std::string path = ctx.artifact(file);
    write_json_file(path, to_json(in));
    return reconstruction_inputs_from_json(read_json_file(path));
}

double sup_rel(const Eigen::VectorXd& p, const Eigen::VectorXd& o) { return (p - o).cwiseAbs().maxCoeff() / o.maxCoeff(); }

void task_distances(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const ExperimentConfig& c = sc.cfg;
    ReconstructionInputs in = boundary_roundtrip(ctx, sc.wave(), sc.b, sc.u, "distance_inputs.json");
    Reconstructor rc(in.wave, in.local, in.T, c.probe);
    const double h = rc.mesh();
    const double r_max = c.r_max > 0.0 ? c.r_max : c.T - 3.0 * h;
    std::vector<double> r_grid;
    for (double r = 0.5 * h; r < r_max; r += 0.5 * h)
        r_grid.push_back(r);
    std::vector<RayPlan> plan;
    for (const auto& ry : c.rays) {
        RayPlan p;
        p.x = ry.x;
        p.y = ry.y;
        p.r_grid = r_grid;
        for (int k = ry.k_min; ry.k_max < 0 ? k * h < r_max : k <= ry.k_max; ++k)
            p.r_primes.push_back(k * h);
        plan.push_back(p);
    }

    // oracle side
    const Eigen::MatrixXd D = shortest_distances(sc.m);
    const auto& uv = sc.u.vertices();
    const int nU = sc.u.size();

    const Eigen::MatrixXd FA = rc.first_arrival_matrix();
    double fa = 0.0;
    for (int i = 0; i < nU; ++i)
        for (int j = 0; j < nU; ++j) {
            const double d = D(uv[i], uv[j]);
            if (i != j && d >= 3.0 * h - 1e-9)
                fa = std::max(fa, std::abs(FA(i, j) - d) / d);
        }
    ctx.metric("first_arrival_relative", fa, "first_arrival");

    DistanceProfileSet set = rc.distance_family(plan);

    double cut_err = 0.0;
    std::vector<std::vector<double>> cut_rows;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        const int steps = static_cast<int>(std::ceil(c.T / h)) + 2;
        auto walk = ray_walk(c.manifold, sc.m, plan[k].x, plan[k].y, steps);
        double truth = kInf, arc = 0.0;
        for (int i = 1; i <= steps; ++i) {
            const double next = arc + sc.m.edge(sc.m.find_edge(walk[i - 1], walk[i])).length;
            if (D(walk[0], walk[i]) < next - 1e-9) {
                truth = arc;
                break;
            }
            arc = next;
        }
        const double est = set.ray_cut[k];
        const double e = std::isfinite(truth) ? std::abs(est - truth) / truth : (std::isfinite(est) ? 1.0 : 0.0);
        cut_err = std::max(cut_err, e);
        cut_rows.push_back({double(plan[k].x), double(plan[k].y), set.ray_s[k], est, truth});
    }
    ctx.metric("cut_time_relative", cut_err, "cut_time");

    std::vector<Eigen::VectorXd> oracle;
    for (int p = 0; p < sc.m.num_vertices(); ++p) {
        Eigen::VectorXd o(nU);
        for (int z = 0; z < nU; ++z)
            o(z) = D(p, uv[z]);
        oracle.push_back(o);
    }
    double separation = kInf;
    for (std::size_t p = 0; p < oracle.size(); ++p)
        for (std::size_t q = p + 1; q < oracle.size(); ++q)
            separation = std::min(separation, (oracle[p] - oracle[q]).cwiseAbs().maxCoeff());
    ctx.out.info["oracle_profile_min_separation"] = separation;
    ctx.out.info["oracle_profiles_distinct"] = separation > 0.0 ? 1.0 : 0.0;
    const double ptol = ctx.tol("profile_sup");
    int ext = 0, ext_ok = 0, all_ok = 0;
    double worst_best = 0.0;
    std::vector<std::vector<double>> match_rows;
    for (std::size_t i = 0; i < set.profiles.size(); ++i) {
        double best = kInf;
        int arg = -1;
        for (int p = 0; p < static_cast<int>(oracle.size()); ++p) {
            const double e = sup_rel(set.profiles[i], oracle[p]);
            if (e < best) {
                best = e;
                arg = p;
            }
        }
        const bool is_ray = set.provenance[i].kind == "ray";
        ext += is_ray;
        ext_ok += is_ray && best <= ptol;
        all_ok += best <= ptol;
        worst_best = std::max(worst_best, best);
        match_rows.push_back({double(i), is_ray ? 1.0 : 0.0, double(arg), best});
    }
    int covered = 0;
    for (const auto& o : oracle) {
        double best = kInf;
        for (const auto& p : set.profiles)
            best = std::min(best, sup_rel(p, o));
        covered += best <= ptol;
    }
    ctx.metric("oracle_profile_coverage", double(covered) / oracle.size(), "profile_fraction", false);
    ctx.metric("exterior_profile_precision", ext ? double(ext_ok) / ext : 0.0, "profile_fraction", false);
    ctx.out.info["exterior_profiles"] = ext;
    ctx.out.info["profiles"] = static_cast<double>(set.profiles.size());
    ctx.out.info["profile_fraction_all"] = set.profiles.empty() ? 0.0 : double(all_ok) / set.profiles.size();
    ctx.out.info["oracle_points_covered"] = covered;
    ctx.out.info["oracle_points"] = static_cast<double>(oracle.size());
    ctx.out.info["worst_profile_error"] = worst_best;
    ctx.out.info["rejected_lipschitz"] = set.rejected_lipschitz;
    ctx.out.info["rejected_unreachable"] = set.rejected_unreachable;
    ctx.out.info["merged"] = set.merged;

    std::vector<std::vector<double>> fa_rows;
    for (int i = 0; i < nU; ++i)
        fa_rows.emplace_back(FA.row(i).data(), FA.row(i).data() + nU);
    std::vector<std::string> header;
    for (int v : uv)
        header.push_back("u" + std::to_string(v));
    write_csv(ctx.artifact("first_arrival.csv"), header, fa_rows);
    write_profiles_csv(ctx.artifact("distances.csv"), set);
    write_provenance_csv(ctx.artifact("distance_provenance.csv"), set);
    write_csv(ctx.artifact("profile_matches.csv"), {"profile", "is_ray", "oracle_point", "sup_rel"}, match_rows);
    write_csv(ctx.artifact("cut_times.csv"), {"x", "y", "s", "cut_estimate", "cut_oracle"}, cut_rows);
    std::vector<std::vector<double>> res_rows;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        auto res = rc.cut_residuals(plan[k].x, plan[k].y, set.ray_s[k], r_grid);
        for (std::size_t g = 0; g < r_grid.size(); ++g)
            res_rows.push_back({double(k), r_grid[g], res[g]});
    }
    write_csv(ctx.artifact("cut_residuals.csv"), {"ray", "r", "residual"}, res_rows);
}

LocalConnection truth_connection(const HermitianBundle& b, const Region& chart)
{
    LocalConnection c;
    c.rank = b.rank();
    for (const Edge& e : b.manifold().edges())
        if (chart.contains(e.a) && chart.contains(e.b))
            c.set_transport(e.a, e.b, b.transport(e.a, e.b));
    for (int x : chart.vertices())
        c.potentials[x] = b.potential(x);
    return c;
}

void task_operator(TaskContext& ctx)
{
    Scene& sc = ctx.scene;
    const ExperimentConfig& c = sc.cfg;
    ReconstructionInputs in = boundary_roundtrip(ctx, sc.wave(), sc.b, sc.u, "operator_inputs.json");

    Region chart;
    if (!c.chart.empty()) {
        chart = Region(c.chart);
    } else {
        std::vector<int> v;
        for (int x : sc.u.vertices()) {
            bool inside = true;
            for (const Edge& e : in.local.edges)
                if ((e.a == x && !sc.u.contains(e.b)) || (e.b == x && !sc.u.contains(e.a)))
                    inside = false;
            if (inside)
                v.push_back(x);
        }
        chart = Region(v);
    }
    if (chart.empty())
        throw std::invalid_argument("reconstruct_operator: no chart vertex has all neighbors in U");

    std::vector<std::vector<int>> loops;
    if (c.manifold.kind == "torus_grid")
        for (auto& l : torus_loops(c.manifold.counts[0], c.manifold.counts[1])) {
            bool ok = true;
            for (int v : l)
                ok = ok && chart.contains(v);
            if (ok)
                loops.push_back(l);
        }
    else if (chart.size() == sc.m.num_vertices()) {
        std::vector<int> all(chart.vertices());
        loops.push_back(all);
    }

    Reconstructor rc(in.wave, in.local, in.T, c.probe);
    RecoveredOperator rec = rc.recover_local_operator(chart);
    LocalConnection truth = truth_connection(sc.b, chart);
    GaugeReport rep = gauge_invariant_compare(rec.connection, truth, loops, ctx.tol("gauge_invariants"));
    ctx.metric("holonomy_deviation", rep.holonomy_deviation, "gauge_invariants");
    ctx.metric("potential_spectrum_deviation", rep.potential_deviation, "gauge_invariants");
    ctx.out.info["loops"] = rep.loops;
    ctx.out.info["chart_vertices"] = chart.size();
    ctx.out.info["fit_residual"] = rec.fit_residual;
    ctx.out.info["unitarity_defect"] = rec.unitarity_defect;
    ctx.out.info["hermiticity_defect"] = rec.hermiticity_defect;
    ctx.out.info["reverse_mismatch"] = rec.reverse_mismatch;

    double frame = 0.0, cond = 0.0;
    for (int x : chart.vertices()) {
        FiberProbe fp = rc.recover_fiber_frame(x);
        frame = std::max(frame, fp.frame_defect);
        cond = std::max(cond, fp.condition);
    }
    ctx.out.info["frame_defect"] = frame;
    ctx.out.info["frame_condition"] = cond;

    // same pipeline on map data of a gauge-transformed bundle
    HermitianBundle bg = apply_gauge(sc.b, random_gauge(sc.m.num_vertices(), c.rank, mix(c.seed, 5)));
    SpectralOperator opg(bg);
    WaveMapData wg = wave_map_assemble(opg, sc.u, TimeGrid(2.0 * c.T, c.dt));
    ReconstructionInputs ing = boundary_roundtrip(ctx, wg, bg, sc.u, "operator_inputs_gauged.json");
    Reconstructor rcg(ing.wave, ing.local, ing.T, c.probe);
    RecoveredOperator recg = rcg.recover_local_operator(chart);
    GaugeReport cross = gauge_invariant_compare(recg.connection, rec.connection, loops, ctx.tol("gauge_rerun"));
    ctx.metric("gauge_rerun_deviation", std::max(cross.holonomy_deviation, cross.potential_deviation), "gauge_rerun");

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rep.holonomy_truth.size(); ++i)
        rows.push_back({double(i), rep.holonomy_recovered[i].real(), rep.holonomy_recovered[i].imag(),
                        rep.holonomy_truth[i].real(), rep.holonomy_truth[i].imag(),
                        cross.holonomy_recovered[i].real(), cross.holonomy_recovered[i].imag()});
    write_csv(ctx.artifact("holonomies.csv"),
              {"loop", "recovered_re", "recovered_im", "truth_re", "truth_im", "gauged_re", "gauged_im"}, rows);
}

} // namespace

Report run_experiment(const ExperimentConfig& cfg)
{
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    auto since = [](auto t) { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count(); };
    Report rep;
    rep.name = cfg.name;
    rep.seed = cfg.seed;
    rep.workers = worker_count();
    rep.config = config_to_json(cfg);
    const std::string dir = cfg.output_dir.empty() ? "." : cfg.output_dir;
    fs::create_directories(dir);

    Scene scene(cfg);
    bool all = true;
    for (const auto& name : cfg.tasks) {
        TaskReport tr;
        tr.task = name;
        const auto t1 = std::chrono::steady_clock::now();
        TaskContext ctx{scene, tr, dir};
        try {
            if (name == "verify_spectral")
                task_spectral(ctx);
            else if (name == "verify_transmutation")
                task_transmutation(ctx);
            else if (name == "verify_blago")
                task_blago(ctx);
            else if (name == "verify_gauge_equivariance")
                task_gauge(ctx);
            else if (name == "reconstruct_distances")
                task_distances(ctx);
            else
                task_operator(ctx);
            tr.status = std::all_of(tr.metrics.begin(), tr.metrics.end(), [](const Metric& m) { return m.pass; })
                            ? "pass"
                            : "fail";
        } catch (const std::exception& e) {
            tr.status = "error";
            tr.error = e.what();
        }
        tr.runtime_s = since(t1);
        all = all && tr.status == "pass";
        rep.tasks.push_back(std::move(tr));
    }
    rep.status = all ? "pass" : "fail";
    rep.runtime_s = since(t0);
    return rep;
}

std::vector<std::string> emit_report(const Report& r, const std::string& dir, const std::vector<std::string>& formats)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create " + dir + ": " + ec.message());
    std::vector<std::string> out;
    for (const auto& f : formats) {
        if (f == "json") {
            const std::string p = (fs::path(dir) / "report.json").string();
            write_json_file(p, report_to_json(r));
            out.push_back(p);
        } else if (f == "csv") {
            const std::string p = (fs::path(dir) / "summary.csv").string();
            std::ofstream s(p);
            if (!s)
                throw std::runtime_error("cannot write " + p);
            s << std::setprecision(17) << "task,status,metric,value,tol,bound,pass\n";
            for (const auto& t : r.tasks) {
                if (t.metrics.empty())
                    s << t.task << ',' << t.status << ",,,,,\n";
                for (const auto& m : t.metrics)
                    s << t.task << ',' << t.status << ',' << m.name << ',' << m.value << ',' << m.tol << ','
                      << (m.upper ? "max" : "min") << ',' << (m.pass ? 1 : 0) << '\n';
            }
            if (!s)
                throw std::runtime_error("write failed: " + p);
            out.push_back(p);
        } else {
            throw std::invalid_argument("emit_report: unknown format '" + f + "'");
        }
    }
    return out;
}

} // namespace fcl
