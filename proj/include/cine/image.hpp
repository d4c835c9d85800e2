#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cine {

// Dense 8-bit RGB raster. Row-major, interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3 bytes

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(std::size_t(w) * h * 3, 0) {}

    std::uint8_t* at(int x, int y) { return pixels.data() + (std::size_t(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (std::size_t(y) * width + x) * 3;
    }

    void fill_rect(int x0, int y0, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    bool operator==(const Image& other) const = default;
};

// Reference to an image file plus its pixel dimensions.
struct ImageHandle {
    std::string path;
    int width = 0;
    int height = 0;

    double ratio() const { return height > 0 ? double(width) / double(height) : 0.0; }

    // Reads the header of a PNG on disk. Throws UnreadableImage.
    static ImageHandle from_file(const std::string& path);
};

// PNG codec, 8-bit RGB. All throw UnreadableImage / IoFailure on failure.
Image read_png(const std::string& path);
Image decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::string& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

}  // namespace cine
