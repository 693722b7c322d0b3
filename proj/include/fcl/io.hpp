#pragma once

#include "fcl/reconstruction.hpp"
#include "fcl/wave_data.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace fcl {

using json = nlohmann::json;

// Complex matrices as {"rows", "cols", "re", "im"} with row-major entries.
json matrix_to_json(const Eigen::MatrixXcd& m);
Eigen::MatrixXcd matrix_from_json(const json& j);

json region_to_json(const Region& u);
Region region_from_json(const json& j);

json to_json(const WaveMapData& d);
WaveMapData wave_map_from_json(const json& j);
json to_json(const FracMapData& d);
FracMapData frac_map_from_json(const json& j);
json to_json(const LocalStructure& ls);
LocalStructure local_structure_from_json(const json& j);

// Everything the inverse pipeline is allowed to see.
struct ReconstructionInputs {
    WaveMapData wave;
    LocalStructure local;
    double T = 0.0;
};
json to_json(const ReconstructionInputs& in);
ReconstructionInputs reconstruction_inputs_from_json(const json& j);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

// Plain numeric table with a header row. Throws std::runtime_error naming the path on IO failure.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
// Distance profiles: one row per reconstructed point, one column per region vertex.
void write_profiles_csv(const std::string& path, const DistanceProfileSet& set);
void write_provenance_csv(const std::string& path, const DistanceProfileSet& set);

} // namespace fcl
