#include "cine/image.hpp"

#include <png.h>

#include <cstring>

#include "cine/errors.hpp"

namespace cine {

void Image::fill_rect(int x0, int y0, int w, int h, std::uint8_t r, std::uint8_t g,
                      std::uint8_t b) {
    for (int y = y0; y < y0 + h && y < height; ++y) {
        for (int x = x0; x < x0 + w && x < width; ++x) {
            std::uint8_t* p = at(x, y);
            p[0] = r;
            p[1] = g;
            p[2] = b;
        }
    }
}

ImageHandle ImageHandle::from_file(const std::string& path) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str())) {
        png_image_free(&im);
        throw UnreadableImage(path);
    }
    ImageHandle h{path, static_cast<int>(im.width), static_cast<int>(im.height)};
    png_image_free(&im);
    return h;
}

namespace {

Image finish_read(png_image& im, const std::string& what) {
    im.format = PNG_FORMAT_RGB;
    Image img(static_cast<int>(im.width), static_cast<int>(im.height));
    if (!png_image_finish_read(&im, nullptr, img.pixels.data(), 0, nullptr)) {
        png_image_free(&im);
        throw UnreadableImage(what);
    }
    return img;
}

}  // namespace

Image read_png(const std::string& path) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str())) {
        png_image_free(&im);
        throw UnreadableImage(path);
    }
    return finish_read(im, path);
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&im, bytes.data(), bytes.size())) {
        png_image_free(&im);
        throw UnreadableImage("<memory>");
    }
    return finish_read(im, "<memory>");
}

void write_png(const std::string& path, const Image& img) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width);
    im.height = static_cast<png_uint_32>(img.height);
    im.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&im, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        png_image_free(&im);
        throw IoFailure("writing PNG " + path);
    }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    png_image im;
    std::memset(&im, 0, sizeof(im));
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(img.width);
    im.height = static_cast<png_uint_32>(img.height);
    im.format = PNG_FORMAT_RGB;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&im, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        png_image_free(&im);
        throw IoFailure("sizing PNG buffer");
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&im, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        png_image_free(&im);
        throw IoFailure("encoding PNG");
    }
    out.resize(size);
    return out;
}

}  // namespace cine
