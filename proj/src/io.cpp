#include "fcl/io.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace fcl {

json matrix_to_json(const Eigen::MatrixXcd& m)
{
    std::vector<double> re, im;
    re.reserve(m.size());
    im.reserve(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            re.push_back(m(i, k).real());
            im.push_back(m(i, k).imag());
        }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"re", re}, {"im", im}};
}

Eigen::MatrixXcd matrix_from_json(const json& j)
{
    const Eigen::Index r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    const auto& re = j.at("re");
    const auto& im = j.at("im");
    if (r < 0 || c < 0 || re.size() != static_cast<std::size_t>(r * c) || im.size() != re.size())
        throw std::invalid_argument("matrix_from_json: entry count does not match the shape");
    Eigen::MatrixXcd m(r, c);
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k, ++n)
            m(i, k) = cplx(re[n].get<double>(), im[n].get<double>());
    return m;
}

json region_to_json(const Region& u) { return u.vertices(); }

Region region_from_json(const json& j) { return Region(j.get<std::vector<int>>()); }

json to_json(const WaveMapData& d)
{
    json samples = json::array(), moments = json::array();
    for (const auto& k : d.samples)
        samples.push_back(matrix_to_json(k));
    for (const auto& m : d.moments) {
        json five = json::array();
        for (const auto& b : m)
            five.push_back(matrix_to_json(b));
        moments.push_back(five);
    }
    return {{"kind", "wave_map"}, {"region", region_to_json(d.region)}, {"rank", d.rank},
            {"volumes", d.volumes}, {"dt", d.dt}, {"steps", d.steps},
            {"samples", samples}, {"moments", moments}};
}

WaveMapData wave_map_from_json(const json& j)
{
    if (j.at("kind") != "wave_map")
        throw std::invalid_argument("wave_map_from_json: not a wave map record");
    WaveMapData d;
    d.region = region_from_json(j.at("region"));
    d.rank = j.at("rank").get<int>();
    d.volumes = j.at("volumes").get<std::vector<double>>();
    d.dt = j.at("dt").get<double>();
    d.steps = j.at("steps").get<int>();
    for (const auto& s : j.at("samples"))
        d.samples.push_back(matrix_from_json(s));
    for (const auto& m : j.at("moments")) {
        if (m.size() != 5)
            throw std::invalid_argument("wave_map_from_json: five moments per interval expected");
        std::array<Eigen::MatrixXcd, 5> five;
        for (int q = 0; q < 5; ++q)
            five[q] = matrix_from_json(m[q]);
        d.moments.push_back(std::move(five));
    }
    if (static_cast<int>(d.samples.size()) != d.steps + 1 || static_cast<int>(d.moments.size()) != d.steps)
        throw std::invalid_argument("wave_map_from_json: sample count does not match steps");
    return d;
}

json to_json(const FracMapData& d)
{
    return {{"kind", "fractional_map"}, {"region", region_to_json(d.region)}, {"rank", d.rank},
            {"order", d.order}, {"volumes", d.volumes}, {"kernel", matrix_to_json(d.kernel)}};
}

FracMapData frac_map_from_json(const json& j)
{
    if (j.at("kind") != "fractional_map")
        throw std::invalid_argument("frac_map_from_json: not a fractional map record");
    FracMapData d;
    d.region = region_from_json(j.at("region"));
    d.rank = j.at("rank").get<int>();
    d.order = j.at("order").get<double>();
    d.volumes = j.at("volumes").get<std::vector<double>>();
    d.kernel = matrix_from_json(j.at("kernel"));
    return d;
}

json to_json(const LocalStructure& ls)
{
    json edges = json::array();
    for (const Edge& e : ls.edges)
        edges.push_back({{"a", e.a}, {"b", e.b}, {"length", e.length}, {"conductance", e.conductance}});
    return {{"kind", "local_structure"}, {"region", region_to_json(ls.region)}, {"rank", ls.rank},
            {"volumes", ls.volumes}, {"edges", edges}};
}

LocalStructure local_structure_from_json(const json& j)
{
    if (j.at("kind") != "local_structure")
        throw std::invalid_argument("local_structure_from_json: not a local structure record");
    LocalStructure ls;
    ls.region = region_from_json(j.at("region"));
    ls.rank = j.at("rank").get<int>();
    ls.volumes = j.at("volumes").get<std::vector<double>>();
    for (const auto& e : j.at("edges"))
        ls.edges.push_back({e.at("a").get<int>(), e.at("b").get<int>(), e.at("length").get<double>(),
                            e.at("conductance").get<double>()});
    return ls;
}

json to_json(const ReconstructionInputs& in)
{
    return {{"kind", "reconstruction_inputs"}, {"T", in.T}, {"wave_map", to_json(in.wave)},
            {"local_structure", to_json(in.local)}};
}

ReconstructionInputs reconstruction_inputs_from_json(const json& j)
{
    if (j.at("kind") != "reconstruction_inputs")
        throw std::invalid_argument("reconstruction_inputs_from_json: wrong record kind");
    ReconstructionInputs in;
    in.T = j.at("T").get<double>();
    in.wave = wave_map_from_json(j.at("wave_map"));
    in.local = local_structure_from_json(j.at("local_structure"));
    return in;
}

json read_json_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const json& j)
{
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << '\n';
    if (!f)
        throw std::runtime_error("write failed: " + path);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    f << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < header.size(); ++i)
        f << (i ? "," : "") << header[i];
    f << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i)
            f << (i ? "," : "") << r[i];
        f << '\n';
    }
    if (!f)
        throw std::runtime_error("write failed: " + path);
}

void write_profiles_csv(const std::string& path, const DistanceProfileSet& set)
{
    std::vector<std::string> header;
    for (int v : set.region.vertices())
        header.push_back("u" + std::to_string(v));
    std::vector<std::vector<double>> rows;
    for (const auto& p : set.profiles)
        rows.emplace_back(p.data(), p.data() + p.size());
    write_csv(path, header, rows);
}

void write_provenance_csv(const std::string& path, const DistanceProfileSet& set)
{
    std::vector<std::vector<double>> rows;
    for (const auto& s : set.provenance)
        rows.push_back({s.kind == "ray" ? 1.0 : 0.0, double(s.x), double(s.y), double(s.point), s.s, s.r_prime});
    write_csv(path, {"is_ray", "x", "y", "point", "s", "r_prime"}, rows);
}

} // namespace fcl
