#pragma once

#include "grasp/dataset.hpp"
#include "grasp/evalkit.hpp"
#include "grasp/model.hpp"
#include "grasp/training.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace grasp {

// Everything a run needs. Loaded from a JSON file ({"seed", "data", "model",
// "train", "eval", "probe"} sections, all optional); command-line flags win.
struct RunConfig
{
    std::uint64_t seed = 0;
    SceneConfig data;
    GraspConfig model;
    TrainConfig train;
    EvalOptions eval;
    double probe_lambda = 1.0;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Seeds used by `grasp train` for a given base seed.
std::uint64_t init_seed_for(std::uint64_t seed);

// Exit codes: 0 success, 1 I/O, integrity or numeric failure, 2 usage or
// configuration error. Failures print one "error kind=... message=..." line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

} // namespace grasp
