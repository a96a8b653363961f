#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace grasp {

// Row-major boolean grid. Houses visible, amodal and occluded masks.
class BinaryMask
{
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, bool fill = false);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool get(std::size_t row, std::size_t col) const { return bits_[row * width_ + col] != 0; }
    void set(std::size_t row, std::size_t col, bool value = true) { bits_[row * width_ + col] = value ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    std::size_t count() const;
    bool any() const;
    bool none() const { return !any(); }
    BinaryMask complement() const;

    bool operator==(const BinaryMask& other) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;  // 0 or 1
};

// Grayscale image with intensities in [0, 1].
struct GrayImage
{
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

    double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
    double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }

    bool operator==(const GrayImage& other) const = default;
};

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_diff(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_intersect(const BinaryMask& a, const BinaryMask& b);
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

// Shift by (dy, dx); pixels moved off the grid are dropped.
BinaryMask translate(const BinaryMask& mask, int dy, int dx);
// Morphology with the disc {(y, x) : y^2 + x^2 <= radius^2}.
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);

// Distance from every pixel center to the nearest pixel center of the
// opposite class. When one class is empty the distance of every pixel is the
// image diagonal sqrt(h^2 + w^2).
struct DistanceMap
{
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::int64_t> squared;  // exact integers
    std::vector<double> distance;       // sqrt(squared)
};

DistanceMap edt(const BinaryMask& mask);

// Squared distance from every pixel to the nearest true pixel of `features`
// (zero on features), by two separable lower-envelope passes. Returns an
// empty vector when `features` has no true pixel.
std::vector<std::int64_t> squared_distance_to(const BinaryMask& features);

// Signed distance to the mask: positive outside, negative inside, magnitude
// from edt(); normalized = values / diagonal, so |normalized| <= 1.
struct SdfField
{
    std::size_t height = 0;
    std::size_t width = 0;
    double diagonal = 0.0;
    std::vector<double> values;
    std::vector<double> normalized;
};

double image_diagonal(std::size_t height, std::size_t width);
SdfField sdf(const BinaryMask& mask);

// Mean of the normalized field inside each cell of a grid_h x grid_w grid,
// in row-major cell order.
std::vector<double> pool_to_grid(const SdfField& field, std::size_t grid_h, std::size_t grid_w);

// Fraction of true pixels in each cell of a grid_h x grid_w grid.
std::vector<double> occupancy_grid(const BinaryMask& mask, std::size_t grid_h, std::size_t grid_w);

} // namespace grasp
