#pragma once

#include "grasp/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grasp {

// 8-bit binary PGM (P5). Header comments are written on request and skipped
// when reading.
struct PgmImage
{
    std::size_t height = 0;
    std::size_t width = 0;
    unsigned maxval = 255;
    std::vector<std::uint8_t> pixels;
};

PgmImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const PgmImage& image, const std::string& comment = {});

// Masks: 0 = false, 255 = true. Any nonzero sample reads as true.
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask, const std::string& comment = {});

// Images: intensity v stored as round(255 v); reads back as sample / maxval.
GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const GrayImage& image, const std::string& comment = {});

// Linear heatmap of values mapped from [lo, hi] onto [0, 255], clamped.
void write_heatmap(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<double>& values, double lo, double hi, const std::string& comment = {});

} // namespace grasp
