#pragma once

#include "grasp/geometry.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace grasp {

enum class ShapeClass
{
    Rectangle,
    Ellipse,
    Triangle,
    LShape,
};

std::string to_string(ShapeClass shape);
ShapeClass shape_class_from_string(const std::string& name);

struct SceneConfig
{
    std::size_t image_size = 64;
    std::size_t min_objects = 2;
    std::size_t max_objects = 4;
    // Half-extent range of an object's bounding box, in pixels.
    double min_half_extent = 7.0;
    double max_half_extent = 16.0;
    // Object centers are drawn from [margin, size - margin] on both axes.
    double center_margin = 18.0;
    double background = 0.1;
    double noise_std = 0.02;
    double intensity_lo = 0.35;
    double intensity_hi = 1.0;
    double min_intensity_gap = 0.08;
    // Relative weights of rectangle, ellipse, triangle, L-shape.
    std::array<double, 4> class_weights{1.0, 1.0, 1.0, 1.0};
    // Instances with fewer visible pixels are left out of datasets.
    std::size_t min_visible_pixels = 16;

    void validate() const;
};

// One parametric object. `orientation` selects the triangle apex side or
// the missing L-shape quadrant (0..3).
struct ObjectSpec
{
    ShapeClass shape = ShapeClass::Rectangle;
    double center_row = 0.0;
    double center_col = 0.0;
    double half_height = 1.0;
    double half_width = 1.0;
    int orientation = 0;
    double intensity = 1.0;
};

BinaryMask rasterize(const ObjectSpec& object, std::size_t height, std::size_t width);

struct SceneInstance
{
    std::shared_ptr<const GrayImage> image;
    BinaryMask visible;
    BinaryMask amodal;
    BinaryMask occluded;  // amodal \ visible
    double occ_ratio = 0.0;
    ShapeClass shape_class = ShapeClass::Rectangle;
    std::uint64_t seed = 0;  // seed of the scene the instance belongs to
    std::size_t scene = 0;
    std::size_t object = 0;  // index in far-to-near depth order
    std::size_t id = 0;      // position in its dataset
};

bool same_instance(const SceneInstance& a, const SceneInstance& b);

// Renders objects listed far to near. Each amodal mask is the full silhouette;
// the visible mask removes every pixel covered by a strictly nearer object.
std::vector<SceneInstance> render_scene(const std::vector<ObjectSpec>& far_to_near, const SceneConfig& config,
                                        std::uint64_t seed);

// Samples 2-4 objects and a random total depth order from `seed`, then renders.
std::vector<SceneInstance> generate_scene(std::uint64_t seed, const SceneConfig& config);

// ---- visible-mask noise -----------------------------------------------------

enum class Morphology
{
    None,
    Dilate,
    Erode,
};

struct VmPerturbation
{
    bool translate = false;
    int dy = 0;
    int dx = 0;
    Morphology morphology = Morphology::None;
    int radius = 1;
};

// All random draws happen up front, so the perturbation is a pure function of
// the seed.
VmPerturbation draw_perturbation(std::uint64_t seed);
BinaryMask apply_perturbation(const BinaryMask& v, const VmPerturbation& p);
BinaryMask perturb_vm(const BinaryMask& v, std::uint64_t seed);

// Perturbed visible mask with probability noise_probability, clean otherwise.
bool training_vm_is_clean(std::uint64_t seed, double noise_probability = 0.5);
BinaryMask training_vm(const SceneInstance& instance, std::uint64_t seed, double noise_probability = 0.5);

} // namespace grasp
