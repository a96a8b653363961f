#pragma once

#include "grasp/synthdata.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace grasp {

inline constexpr const char* kDatasetVersion = "grasp-dataset/1";

nlohmann::json to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const nlohmann::json& j, SceneConfig base = {});

struct ManifestEntry
{
    std::size_t id = 0;
    std::string image;
    std::string visible;
    std::string amodal;
    ShapeClass shape_class = ShapeClass::Rectangle;
    double occ_ratio = 0.0;
    std::uint64_t seed = 0;
    std::size_t scene = 0;
    std::size_t object = 0;
};

struct DatasetManifest
{
    std::string version = kDatasetVersion;
    std::size_t height = 0;
    std::size_t width = 0;
    std::string split = "train";
    std::uint64_t base_seed = 0;
    std::size_t scenes = 0;
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<ManifestEntry> entries;
};

struct Dataset
{
    DatasetManifest manifest;
    std::vector<SceneInstance> instances;
};

// Scenes base_seed + i for i in [0, scenes); instances with fewer than
// config.min_visible_pixels visible pixels are dropped.
Dataset make_dataset(std::uint64_t base_seed, std::size_t scenes, const SceneConfig& config,
                     const std::string& split = "train");

// Layout: manifest.json, img_%06d.pgm, vis_%06d.pgm, amo_%06d.pgm. The
// manifest is written last.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

std::string instance_file_name(const char* prefix, std::size_t id);

} // namespace grasp
