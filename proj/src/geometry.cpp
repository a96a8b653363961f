#include "grasp/geometry.hpp"

#include "grasp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace grasp {

BinaryMask::BinaryMask(std::size_t height, std::size_t width, bool fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0)
{
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits))
{
    if (bits_.size() != height_ * width_)
        throw DimensionError("mask of " + std::to_string(height_) + "x" + std::to_string(width_) + " given " +
                             std::to_string(bits_.size()) + " values");
    for (auto& b : bits_)
        b = b ? 1 : 0;
}

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool BinaryMask::any() const { return std::find(bits_.begin(), bits_.end(), std::uint8_t{1}) != bits_.end(); }

BinaryMask BinaryMask::complement() const
{
    BinaryMask out(height_, width_);
    for (std::size_t i = 0; i < bits_.size(); ++i)
        out.bits_[i] = bits_[i] ? 0 : 1;
    return out;
}

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* op)
{
    if (a.height() != b.height() || a.width() != b.width())
        throw DimensionError(std::string(op) + ": mask dimensions differ, " + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()));
}

template <class F>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, const char* op, F&& f)
{
    require_same_dims(a, b, op);
    std::vector<std::uint8_t> bits(a.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = f(a[i], b[i]) ? 1 : 0;
    return BinaryMask(a.height(), a.width(), std::move(bits));
}

} // namespace

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b)
{
    return combine(a, b, "mask_union", [](bool x, bool y) { return x || y; });
}

BinaryMask mask_diff(const BinaryMask& a, const BinaryMask& b)
{
    return combine(a, b, "mask_diff", [](bool x, bool y) { return x && !y; });
}

BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b)
{
    return combine(a, b, "mask_intersect", [](bool x, bool y) { return x && y; });
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer)
{
    require_same_dims(inner, outer, "is_subset");
    for (std::size_t i = 0; i < inner.size(); ++i)
        if (inner[i] && !outer[i])
            return false;
    return true;
}

double iou(const BinaryMask& a, const BinaryMask& b)
{
    require_same_dims(a, b, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] && b[i]) ? 1 : 0;
        uni += (a[i] || b[i]) ? 1 : 0;
    }
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask translate(const BinaryMask& mask, int dy, int dx)
{
    const auto h = static_cast<long>(mask.height());
    const auto w = static_cast<long>(mask.width());
    BinaryMask out(mask.height(), mask.width());
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
            const long sr = r - dy, sc = c - dx;
            if (sr >= 0 && sr < h && sc >= 0 && sc < w && mask.get(sr, sc))
                out.set(r, c);
        }
    return out;
}

namespace {

// Pixels outside the grid count as background for both operations.
BinaryMask morph(const BinaryMask& mask, int radius, bool dilation)
{
    if (radius < 0)
        throw ConfigError("morphology radius must be non-negative");
    const auto h = static_cast<long>(mask.height());
    const auto w = static_cast<long>(mask.width());
    std::vector<std::pair<int, int>> disc;
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            if (y * y + x * x <= radius * radius)
                disc.emplace_back(y, x);
    BinaryMask out(mask.height(), mask.width());
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
            bool hit = !dilation;
            for (auto [y, x] : disc) {
                const long rr = r + y, cc = c + x;
                const bool inside = rr >= 0 && rr < h && cc >= 0 && cc < w && mask.get(rr, cc);
                if (dilation && inside) {
                    hit = true;
                    break;
                }
                if (!dilation && !inside) {
                    hit = false;
                    break;
                }
            }
            if (hit)
                out.set(r, c);
        }
    return out;
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, int radius) { return morph(mask, radius, true); }
BinaryMask erode(const BinaryMask& mask, int radius) { return morph(mask, radius, false); }

// ---- distance transform -------------------------------------------------------

namespace {

// Intersection abscissa of two parabolas as an exact fraction num / den, den > 0.
struct Fraction
{
    std::int64_t num;
    std::int64_t den;
};

bool less_equal(const Fraction& a, const Fraction& b) { return a.num * b.den <= b.num * a.den; }

// 1-D lower envelope of parabolas f[site] + (q - site)^2 over the given sites,
// evaluated at every q in [0, n).
void lower_envelope(const std::vector<std::int64_t>& f, const std::vector<std::int64_t>& sites, std::size_t n,
                    std::int64_t* out, std::size_t stride)
{
    std::vector<std::int64_t> v(sites.size());
    std::vector<Fraction> z(sites.size() + 1);
    std::size_t k = 0;
    v[0] = sites[0];
    auto intersect = [&](std::int64_t u, std::int64_t q) {
        return Fraction{(f[q] + q * q) - (f[u] + u * u), 2 * (q - u)};
    };
    for (std::size_t i = 1; i < sites.size(); ++i) {
        const std::int64_t q = sites[i];
        Fraction s = intersect(v[k], q);
        while (k > 0 && less_equal(s, z[k])) {
            --k;
            s = intersect(v[k], q);
        }
        ++k;
        v[k] = q;
        z[k] = s;
    }
    const std::size_t count = k + 1;
    k = 0;
    for (std::size_t qi = 0; qi < n; ++qi) {
        const auto q = static_cast<std::int64_t>(qi);
        while (k + 1 < count && z[k + 1].num < q * z[k + 1].den)
            ++k;
        const std::int64_t d = q - v[k];
        out[qi * stride] = d * d + f[v[k]];
    }
}

} // namespace

std::vector<std::int64_t> squared_distance_to(const BinaryMask& features)
{
    const std::size_t h = features.height(), w = features.width();
    if (!features.any())
        return {};
    constexpr std::int64_t kMissing = -1;

    // Pass 1: vertical distance to the nearest feature in the same column.
    std::vector<std::int64_t> vertical(h * w, kMissing);
    for (std::size_t c = 0; c < w; ++c) {
        long last = -1;
        for (std::size_t r = 0; r < h; ++r) {
            if (features.get(r, c))
                last = static_cast<long>(r);
            if (last >= 0)
                vertical[r * w + c] = static_cast<long>(r) - last;
        }
        last = -1;
        for (std::size_t r = h; r-- > 0;) {
            if (features.get(r, c))
                last = static_cast<long>(r);
            if (last >= 0) {
                const std::int64_t d = last - static_cast<long>(r);
                auto& slot = vertical[r * w + c];
                if (slot == kMissing || d < slot)
                    slot = d;
            }
        }
    }

    // Pass 2: lower envelope along each row over columns that have a feature.
    std::vector<std::int64_t> out(h * w);
    std::vector<std::int64_t> f(w);
    std::vector<std::int64_t> sites;
    for (std::size_t r = 0; r < h; ++r) {
        sites.clear();
        for (std::size_t c = 0; c < w; ++c) {
            const std::int64_t d = vertical[r * w + c];
            if (d != kMissing) {
                f[c] = d * d;
                sites.push_back(static_cast<std::int64_t>(c));
            }
        }
        // Every row sees the same set of non-empty columns; at least one exists.
        lower_envelope(f, sites, w, out.data() + r * w, 1);
    }
    return out;
}

double image_diagonal(std::size_t height, std::size_t width)
{
    return std::sqrt(static_cast<double>(height * height + width * width));
}

DistanceMap edt(const BinaryMask& mask)
{
    const std::size_t h = mask.height(), w = mask.width();
    DistanceMap map;
    map.height = h;
    map.width = w;
    map.squared.assign(h * w, static_cast<std::int64_t>(h * h + w * w));

    const auto to_true = squared_distance_to(mask);
    const auto to_false = squared_distance_to(mask.complement());
    if (!to_true.empty() && !to_false.empty())
        for (std::size_t i = 0; i < h * w; ++i)
            map.squared[i] = mask[i] ? to_false[i] : to_true[i];

    map.distance.resize(h * w);
    for (std::size_t i = 0; i < h * w; ++i)
        map.distance[i] = std::sqrt(static_cast<double>(map.squared[i]));
    return map;
}

SdfField sdf(const BinaryMask& mask)
{
    const DistanceMap dist = edt(mask);
    SdfField field;
    field.height = mask.height();
    field.width = mask.width();
    field.diagonal = image_diagonal(field.height, field.width);
    field.values.resize(mask.size());
    field.normalized.resize(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        field.values[i] = mask[i] ? -dist.distance[i] : dist.distance[i];
        field.normalized[i] = field.values[i] / field.diagonal;
    }
    return field;
}

namespace {

template <class Get>
std::vector<double> pool_cells(std::size_t height, std::size_t width, std::size_t grid_h, std::size_t grid_w,
                               Get&& get)
{
    if (grid_h == 0 || grid_w == 0 || height % grid_h != 0 || width % grid_w != 0)
        throw ConfigError("cannot pool " + std::to_string(height) + "x" + std::to_string(width) + " onto a " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    const std::size_t ch = height / grid_h, cw = width / grid_w;
    std::vector<double> out(grid_h * grid_w, 0.0);
    for (std::size_t gr = 0; gr < grid_h; ++gr)
        for (std::size_t gc = 0; gc < grid_w; ++gc) {
            double total = 0.0;
            for (std::size_t r = gr * ch; r < (gr + 1) * ch; ++r)
                for (std::size_t c = gc * cw; c < (gc + 1) * cw; ++c)
                    total += get(r * width + c);
            out[gr * grid_w + gc] = total / static_cast<double>(ch * cw);
        }
    return out;
}

} // namespace

std::vector<double> pool_to_grid(const SdfField& field, std::size_t grid_h, std::size_t grid_w)
{
    return pool_cells(field.height, field.width, grid_h, grid_w, [&](std::size_t i) { return field.normalized[i]; });
}

std::vector<double> occupancy_grid(const BinaryMask& mask, std::size_t grid_h, std::size_t grid_w)
{
    return pool_cells(mask.height(), mask.width(), grid_h, grid_w,
                      [&](std::size_t i) { return mask[i] ? 1.0 : 0.0; });
}

} // namespace grasp
