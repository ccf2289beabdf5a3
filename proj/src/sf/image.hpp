#pragma once

#include <string>
#include <vector>

#include "sf/common.hpp"

namespace sf {

// Interleaved float image, row-major, top row first.
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<real> px;  // height * width * channels

    Image() = default;
    Image(int w, int h, int c)
        : width(w), height(h), channels(c),
          px(static_cast<std::size_t>(w) * h * c, 0) {}

    real& at(int x, int y, int c) {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    real at(int x, int y, int c) const {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// 8-bit PNG; 1 channel writes grayscale, 3 writes RGB. Values are clamped to
// [0,1] and rounded. Reading maps back to [0,1].
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

// PFM, 32-bit float. Scale header is -1.0 (little-endian); rows are stored
// bottom-up as the format requires while Image stays top-down in memory.
// 1 channel -> "Pf", 3 channels -> "PF".
void write_pfm(const Image& img, const std::string& path);
Image read_pfm(const std::string& path);

}  // namespace sf
