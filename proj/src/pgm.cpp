#include "grasp/pgm.hpp"

#include "grasp/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace grasp {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::filesystem::path& path)
{
    std::string token;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n')
                ;
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty())
                return token;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    if (token.empty())
        throw IoError("truncated PGM header in " + path.string());
    return token;
}

std::size_t parse_positive(const std::string& token, const std::filesystem::path& path)
{
    std::size_t value = 0;
    for (char c : token) {
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw IoError("malformed PGM header field '" + token + "' in " + path.string());
        value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    if (value == 0)
        throw IoError("zero PGM header field in " + path.string());
    return value;
}

} // namespace

PgmImage read_pgm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    if (next_token(in, path) != "P5")
        throw IoError("not a binary PGM (P5): " + path.string());
    PgmImage image;
    image.width = parse_positive(next_token(in, path), path);
    image.height = parse_positive(next_token(in, path), path);
    image.maxval = static_cast<unsigned>(parse_positive(next_token(in, path), path));
    if (image.maxval > 255)
        throw IoError("16-bit PGM is not supported: " + path.string());
    image.pixels.resize(image.height * image.width);
    in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(image.pixels.size()))
        throw IoError("truncated PGM data in " + path.string());
    return image;
}

void write_pgm(const std::filesystem::path& path, const PgmImage& image, const std::string& comment)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "P5\n";
    if (!comment.empty())
        out << "# " << comment << '\n';
    out << image.width << ' ' << image.height << '\n' << image.maxval << '\n';
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

BinaryMask read_mask(const std::filesystem::path& path)
{
    PgmImage image = read_pgm(path);
    return BinaryMask(image.height, image.width, std::move(image.pixels));
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask, const std::string& comment)
{
    PgmImage image{mask.height(), mask.width(), 255, std::vector<std::uint8_t>(mask.size())};
    for (std::size_t i = 0; i < mask.size(); ++i)
        image.pixels[i] = mask[i] ? 255 : 0;
    write_pgm(path, image, comment);
}

GrayImage read_image(const std::filesystem::path& path)
{
    const PgmImage image = read_pgm(path);
    GrayImage out(image.height, image.width);
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        out.pixels[i] = static_cast<double>(image.pixels[i]) / static_cast<double>(image.maxval);
    return out;
}

void write_image(const std::filesystem::path& path, const GrayImage& image, const std::string& comment)
{
    PgmImage out{image.height, image.width, 255, std::vector<std::uint8_t>(image.pixels.size())};
    for (std::size_t i = 0; i < image.pixels.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
    write_pgm(path, out, comment);
}

void write_heatmap(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<double>& values, double lo, double hi, const std::string& comment)
{
    if (values.size() != height * width)
        throw DimensionError("heatmap: " + std::to_string(values.size()) + " values for " + std::to_string(height) +
                             "x" + std::to_string(width));
    PgmImage out{height, width, 255, std::vector<std::uint8_t>(values.size())};
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp((values[i] - lo) / span, 0.0, 1.0) * 255.0));
    write_pgm(path, out, comment);
}

} // namespace grasp
