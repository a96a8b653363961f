#include "grasp/synthdata.hpp"

#include "grasp/errors.hpp"
#include "grasp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace grasp {

std::string to_string(ShapeClass shape)
{
    switch (shape) {
    case ShapeClass::Rectangle: return "rectangle";
    case ShapeClass::Ellipse: return "ellipse";
    case ShapeClass::Triangle: return "triangle";
    case ShapeClass::LShape: return "l-shape";
    }
    return "rectangle";
}

ShapeClass shape_class_from_string(const std::string& name)
{
    if (name == "rectangle")
        return ShapeClass::Rectangle;
    if (name == "ellipse")
        return ShapeClass::Ellipse;
    if (name == "triangle")
        return ShapeClass::Triangle;
    if (name == "l-shape")
        return ShapeClass::LShape;
    throw IntegrityError("unknown shape class '" + name + "'");
}

void SceneConfig::validate() const
{
    if (min_objects == 0 || max_objects == 0)
        throw ConfigError("scene config needs at least one object per scene");
    if (min_objects > max_objects)
        throw ConfigError("scene config: min_objects > max_objects");
    if (image_size == 0)
        throw ConfigError("scene config: image_size must be positive");
    if (min_half_extent <= 0.0 || min_half_extent > max_half_extent)
        throw ConfigError("scene config: invalid half-extent range");
    if (center_margin < 0.0 || 2.0 * center_margin > static_cast<double>(image_size))
        throw ConfigError("scene config: center margin does not fit the image");
    if (std::accumulate(class_weights.begin(), class_weights.end(), 0.0) <= 0.0)
        throw ConfigError("scene config: shape class weights sum to zero");
}

namespace {

bool inside(const ObjectSpec& o, double row, double col)
{
    // Local coordinates in [-1, 1] across the bounding box.
    const double y = (row - o.center_row) / o.half_height;
    const double x = (col - o.center_col) / o.half_width;
    if (std::abs(y) > 1.0 || std::abs(x) > 1.0)
        return false;
    switch (o.shape) {
    case ShapeClass::Rectangle:
        return true;
    case ShapeClass::Ellipse:
        return y * y + x * x <= 1.0;
    case ShapeClass::Triangle: {
        // Isosceles, apex on one side of the box, base on the opposite side.
        double along = 0.0, across = 0.0;
        switch (o.orientation & 3) {
        case 0: along = (y + 1.0) / 2.0; across = x; break;   // apex up
        case 1: along = (1.0 - y) / 2.0; across = x; break;   // apex down
        case 2: along = (x + 1.0) / 2.0; across = y; break;   // apex left
        default: along = (1.0 - x) / 2.0; across = y; break;  // apex right
        }
        return std::abs(across) <= along;
    }
    case ShapeClass::LShape: {
        // Bounding box with one quadrant removed.
        switch (o.orientation & 3) {
        case 0: return !(y < 0.0 && x > 0.0);
        case 1: return !(y < 0.0 && x < 0.0);
        case 2: return !(y > 0.0 && x < 0.0);
        default: return !(y > 0.0 && x > 0.0);
        }
    }
    }
    return false;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

} // namespace

BinaryMask rasterize(const ObjectSpec& object, std::size_t height, std::size_t width)
{
    BinaryMask mask(height, width);
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c)
            if (inside(object, static_cast<double>(r), static_cast<double>(c)))
                mask.set(r, c);
    return mask;
}

bool same_instance(const SceneInstance& a, const SceneInstance& b)
{
    const bool images = (a.image && b.image) ? *a.image == *b.image : a.image == b.image;
    return images && a.visible == b.visible && a.amodal == b.amodal && a.occluded == b.occluded &&
           a.occ_ratio == b.occ_ratio && a.shape_class == b.shape_class && a.seed == b.seed && a.scene == b.scene &&
           a.object == b.object && a.id == b.id;
}

std::vector<SceneInstance> render_scene(const std::vector<ObjectSpec>& far_to_near, const SceneConfig& config,
                                        std::uint64_t seed)
{
    if (far_to_near.empty())
        throw ConfigError("a scene needs at least one object");
    const std::size_t size = config.image_size;
    Rng noise(derive_seed(seed, "render"));

    std::vector<BinaryMask> silhouettes;
    silhouettes.reserve(far_to_near.size());
    for (const auto& o : far_to_near)
        silhouettes.push_back(rasterize(o, size, size));

    auto image = std::make_shared<GrayImage>(size, size, config.background);
    for (std::size_t k = 0; k < far_to_near.size(); ++k)
        for (std::size_t i = 0; i < image->pixels.size(); ++i)
            if (silhouettes[k][i])
                image->pixels[i] = far_to_near[k].intensity;
    for (auto& p : image->pixels)
        p = quantize(p + noise.normal(0.0, config.noise_std));

    std::vector<SceneInstance> instances;
    instances.reserve(far_to_near.size());
    BinaryMask nearer(size, size);
    std::vector<BinaryMask> visible(far_to_near.size());
    for (std::size_t k = far_to_near.size(); k-- > 0;) {
        visible[k] = mask_diff(silhouettes[k], nearer);
        nearer = mask_union(nearer, silhouettes[k]);
    }
    for (std::size_t k = 0; k < far_to_near.size(); ++k) {
        SceneInstance inst;
        inst.image = image;
        inst.amodal = silhouettes[k];
        inst.visible = visible[k];
        inst.occluded = mask_diff(inst.amodal, inst.visible);
        const std::size_t area = inst.amodal.count();
        inst.occ_ratio = area ? static_cast<double>(inst.occluded.count()) / static_cast<double>(area) : 0.0;
        inst.shape_class = far_to_near[k].shape;
        inst.seed = seed;
        inst.object = k;
        instances.push_back(std::move(inst));
    }
    return instances;
}

std::vector<SceneInstance> generate_scene(std::uint64_t seed, const SceneConfig& config)
{
    config.validate();
    Rng rng(seed);
    const auto count = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(config.min_objects), static_cast<std::int64_t>(config.max_objects)));
    const double total_weight = std::accumulate(config.class_weights.begin(), config.class_weights.end(), 0.0);
    const double size = static_cast<double>(config.image_size);

    std::vector<double> intensities;
    std::vector<ObjectSpec> objects;
    for (std::size_t k = 0; k < count; ++k) {
        ObjectSpec o;
        double pick = rng.uniform() * total_weight;
        std::size_t cls = 0;
        while (cls + 1 < config.class_weights.size() && pick >= config.class_weights[cls]) {
            pick -= config.class_weights[cls];
            ++cls;
        }
        o.shape = static_cast<ShapeClass>(cls);
        o.half_height = rng.uniform(config.min_half_extent, config.max_half_extent);
        o.half_width = rng.uniform(config.min_half_extent, config.max_half_extent);
        // Keep the whole bounding box on the image.
        const double lo_r = std::max(config.center_margin, o.half_height);
        const double hi_r = std::min(size - 1.0 - config.center_margin, size - 1.0 - o.half_height);
        const double lo_c = std::max(config.center_margin, o.half_width);
        const double hi_c = std::min(size - 1.0 - config.center_margin, size - 1.0 - o.half_width);
        o.center_row = hi_r > lo_r ? rng.uniform(lo_r, hi_r) : (size - 1.0) / 2.0;
        o.center_col = hi_c > lo_c ? rng.uniform(lo_c, hi_c) : (size - 1.0) / 2.0;
        o.orientation = static_cast<int>(rng.uniform_int(0, 3));

        // Distinct intensities, well separated from the background and from each other.
        double value = 0.0;
        for (int attempt = 0; attempt < 64; ++attempt) {
            value = rng.uniform(config.intensity_lo, config.intensity_hi);
            bool ok = std::abs(value - config.background) >= config.min_intensity_gap;
            for (double other : intensities)
                ok = ok && std::abs(value - other) >= config.min_intensity_gap;
            if (ok)
                break;
        }
        intensities.push_back(value);
        o.intensity = value;
        objects.push_back(o);
    }

    // Random total depth order (Fisher-Yates), listed far to near.
    for (std::size_t i = objects.size(); i-- > 1;) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
        std::swap(objects[i], objects[j]);
    }
    return render_scene(objects, config, seed);
}

// ---- visible-mask noise -----------------------------------------------------

VmPerturbation draw_perturbation(std::uint64_t seed)
{
    Rng rng(seed);
    VmPerturbation p;
    p.translate = rng.bernoulli(0.5);
    p.dy = static_cast<int>(rng.uniform_int(-2, 2));
    p.dx = static_cast<int>(rng.uniform_int(-2, 2));
    p.morphology = static_cast<Morphology>(rng.uniform_int(0, 2));
    p.radius = static_cast<int>(rng.uniform_int(1, 3));
    return p;
}

BinaryMask apply_perturbation(const BinaryMask& v, const VmPerturbation& p)
{
    BinaryMask out = v;
    if (p.translate) {
        BinaryMask shifted = translate(out, p.dy, p.dx);
        if (shifted.any())
            out = std::move(shifted);
    }
    switch (p.morphology) {
    case Morphology::None:
        break;
    case Morphology::Dilate:
        out = dilate(out, p.radius);
        break;
    case Morphology::Erode: {
        BinaryMask eroded = erode(out, p.radius);
        if (eroded.any())
            out = std::move(eroded);
        break;
    }
    }
    return out;
}

BinaryMask perturb_vm(const BinaryMask& v, std::uint64_t seed) { return apply_perturbation(v, draw_perturbation(seed)); }

bool training_vm_is_clean(std::uint64_t seed, double noise_probability)
{
    Rng rng(seed);
    return !rng.bernoulli(noise_probability);
}

BinaryMask training_vm(const SceneInstance& instance, std::uint64_t seed, double noise_probability)
{
    if (training_vm_is_clean(seed, noise_probability))
        return instance.visible;
    return perturb_vm(instance.visible, derive_seed(seed, "perturb"));
}

} // namespace grasp
