#include "grasp/dataset.hpp"

#include "grasp/errors.hpp"
#include "grasp/parallel.hpp"
#include "grasp/pgm.hpp"

#include <cstdio>
#include <fstream>

namespace grasp {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const SceneConfig& c)
{
    return {{"image_size", c.image_size},
            {"min_objects", c.min_objects},
            {"max_objects", c.max_objects},
            {"min_half_extent", c.min_half_extent},
            {"max_half_extent", c.max_half_extent},
            {"center_margin", c.center_margin},
            {"background", c.background},
            {"noise_std", c.noise_std},
            {"intensity_lo", c.intensity_lo},
            {"intensity_hi", c.intensity_hi},
            {"min_intensity_gap", c.min_intensity_gap},
            {"class_weights", c.class_weights},
            {"min_visible_pixels", c.min_visible_pixels}};
}

SceneConfig scene_config_from_json(const json& j, SceneConfig c)
{
    try {
        c.image_size = j.value("image_size", c.image_size);
        c.min_objects = j.value("min_objects", c.min_objects);
        c.max_objects = j.value("max_objects", c.max_objects);
        c.min_half_extent = j.value("min_half_extent", c.min_half_extent);
        c.max_half_extent = j.value("max_half_extent", c.max_half_extent);
        c.center_margin = j.value("center_margin", c.center_margin);
        c.background = j.value("background", c.background);
        c.noise_std = j.value("noise_std", c.noise_std);
        c.intensity_lo = j.value("intensity_lo", c.intensity_lo);
        c.intensity_hi = j.value("intensity_hi", c.intensity_hi);
        c.min_intensity_gap = j.value("min_intensity_gap", c.min_intensity_gap);
        c.class_weights = j.value("class_weights", c.class_weights);
        c.min_visible_pixels = j.value("min_visible_pixels", c.min_visible_pixels);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string instance_file_name(const char* prefix, std::size_t id)
{
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%s_%06zu.pgm", prefix, id);
    return buffer;
}

Dataset make_dataset(std::uint64_t base_seed, std::size_t scenes, const SceneConfig& config, const std::string& split)
{
    config.validate();
    std::vector<std::vector<SceneInstance>> per_scene(scenes);
    parallel_for(scenes, [&](std::size_t i) {
        per_scene[i] = generate_scene(base_seed + i, config);
        for (auto& inst : per_scene[i])
            inst.scene = i;
    });

    Dataset dataset;
    auto& m = dataset.manifest;
    m.height = m.width = config.image_size;
    m.split = split;
    m.base_seed = base_seed;
    m.scenes = scenes;
    for (auto& scene : per_scene)
        for (auto& inst : scene) {
            if (inst.visible.count() < config.min_visible_pixels)
                continue;
            ManifestEntry e;
            e.id = dataset.instances.size();
            inst.id = e.id;
            e.image = instance_file_name("img", e.id);
            e.visible = instance_file_name("vis", e.id);
            e.amodal = instance_file_name("amo", e.id);
            e.shape_class = inst.shape_class;
            e.occ_ratio = inst.occ_ratio;
            e.seed = inst.seed;
            e.scene = inst.scene;
            e.object = inst.object;
            m.entries.push_back(e);
            dataset.instances.push_back(std::move(inst));
        }
    return dataset;
}

void write_dataset(const fs::path& dir, const Dataset& dataset)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    const auto& m = dataset.manifest;
    if (m.entries.size() != dataset.instances.size())
        throw IntegrityError("manifest lists " + std::to_string(m.entries.size()) + " instances, dataset holds " +
                             std::to_string(dataset.instances.size()));

    const std::string tag = std::string(kDatasetVersion);
    parallel_for(dataset.instances.size(), [&](std::size_t i) {
        const auto& inst = dataset.instances[i];
        const auto& e = m.entries[i];
        write_image(dir / e.image, *inst.image, tag);
        write_mask(dir / e.visible, inst.visible, tag);
        write_mask(dir / e.amodal, inst.amodal, tag);
    });

    json j;
    j["version"] = m.version;
    j["height"] = m.height;
    j["width"] = m.width;
    j["split"] = m.split;
    j["base_seed"] = m.base_seed;
    j["scenes"] = m.scenes;
    j["instance_count"] = m.entries.size();
    j["provenance"] = m.provenance;
    json entries = json::array();
    for (const auto& e : m.entries)
        entries.push_back({{"id", e.id},
                           {"image", e.image},
                           {"visible", e.visible},
                           {"amodal", e.amodal},
                           {"shape_class", to_string(e.shape_class)},
                           {"occ_ratio", e.occ_ratio},
                           {"seed", e.seed},
                           {"scene", e.scene},
                           {"object", e.object}});
    j["instances"] = std::move(entries);

    std::ofstream out(dir / "manifest.json");
    if (!out)
        throw IoError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(1) << '\n';
}

Dataset read_dataset(const fs::path& dir)
{
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw IoError("manifest missing: " + manifest_path.string());
    std::ifstream in(manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("corrupt manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset dataset;
    auto& m = dataset.manifest;
    try {
        m.version = j.at("version").get<std::string>();
        m.height = j.at("height").get<std::size_t>();
        m.width = j.at("width").get<std::size_t>();
        m.split = j.at("split").get<std::string>();
        m.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.scenes = j.at("scenes").get<std::size_t>();
        m.provenance = j.value("provenance", json::object());
        for (const auto& je : j.at("instances")) {
            ManifestEntry e;
            e.id = je.at("id").get<std::size_t>();
            e.image = je.at("image").get<std::string>();
            e.visible = je.at("visible").get<std::string>();
            e.amodal = je.at("amodal").get<std::string>();
            e.shape_class = shape_class_from_string(je.at("shape_class").get<std::string>());
            e.occ_ratio = je.at("occ_ratio").get<double>();
            e.seed = je.at("seed").get<std::uint64_t>();
            e.scene = je.at("scene").get<std::size_t>();
            e.object = je.at("object").get<std::size_t>();
            m.entries.push_back(e);
        }
        if (j.at("instance_count").get<std::size_t>() != m.entries.size())
            throw IntegrityError("manifest instance_count does not match its instance list");
    } catch (const json::exception& e) {
        throw IoError("corrupt manifest " + manifest_path.string() + ": " + e.what());
    }
    if (m.version != kDatasetVersion)
        throw IntegrityError("unsupported dataset version '" + m.version + "'");

    dataset.instances.resize(m.entries.size());
    parallel_for(m.entries.size(), [&](std::size_t i) {
        const auto& e = m.entries[i];
        auto& inst = dataset.instances[i];
        auto image = std::make_shared<GrayImage>(read_image(dir / e.image));
        inst.visible = read_mask(dir / e.visible);
        inst.amodal = read_mask(dir / e.amodal);
        auto check = [&](std::size_t h, std::size_t w, const std::string& file) {
            if (h != m.height || w != m.width)
                throw IntegrityError(file + " is " + std::to_string(h) + "x" + std::to_string(w) +
                                     ", manifest says " + std::to_string(m.height) + "x" + std::to_string(m.width));
        };
        check(image->height, image->width, e.image);
        check(inst.visible.height(), inst.visible.width(), e.visible);
        check(inst.amodal.height(), inst.amodal.width(), e.amodal);
        if (!is_subset(inst.visible, inst.amodal))
            throw IntegrityError(e.visible + " is not contained in " + e.amodal);
        inst.image = std::move(image);
        inst.occluded = mask_diff(inst.amodal, inst.visible);
        const std::size_t area = inst.amodal.count();
        const double ratio = area ? static_cast<double>(inst.occluded.count()) / static_cast<double>(area) : 0.0;
        if (ratio != e.occ_ratio)
            throw IntegrityError("occ_ratio of instance " + std::to_string(e.id) + " does not match its masks");
        inst.occ_ratio = e.occ_ratio;
        inst.shape_class = e.shape_class;
        inst.seed = e.seed;
        inst.scene = e.scene;
        inst.object = e.object;
        inst.id = e.id;
    });

    // Instances of one scene share their image.
    for (std::size_t i = 1; i < dataset.instances.size(); ++i) {
        auto& prev = dataset.instances[i - 1];
        auto& cur = dataset.instances[i];
        if (prev.scene == cur.scene && *prev.image == *cur.image)
            cur.image = prev.image;
    }
    return dataset;
}

} // namespace grasp
