#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dirguide {

/// Interleaved RGB8 raster.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width*height*3 bytes, row major

    static Image solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
};

struct ImageSize {
    int width = 0;
    int height = 0;
};

/// Decodes a JPEG or binary PPM (P6) file. Throws DecodeError naming the path.
Image load_image(const std::filesystem::path& path);

/// Header-only probe of image dimensions, no full decode.
ImageSize read_image_size(const std::filesystem::path& path);

/// Baseline JPEG, default quality 95, no source metadata carried over.
void save_jpeg(const Image& img, const std::filesystem::path& path, int quality = 95);

void save_ppm(const Image& img, const std::filesystem::path& path);

}  // namespace dirguide
