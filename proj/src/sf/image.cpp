#include "sf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "sf/binio.hpp"

namespace sf {

namespace {

void check_channels(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw ProtocolError("image for " + path + " must have 1 or 3 channels");
    if (img.width <= 0 || img.height <= 0)
        throw ProtocolError("image for " + path + " is empty");
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
    check_channels(img, path);
    auto f = binio::open_write(path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ProtocolError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ProtocolError("libpng write failed for " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                real v = img.at(x, y, c);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    auto f = binio::open_read(path);

    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw ProtocolError(path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ProtocolError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ProtocolError("libpng read failed for " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // normalize any input to 8-bit gray or RGB
    png_set_strip_16(png);
    png_set_packing(png);
    int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    int ch = static_cast<int>(png_get_channels(png, info));
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ProtocolError(path + " decoded to unsupported channel count");
    }

    Image img(w, h, ch);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * ch);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                img.at(x, y, c) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_pfm(const Image& img, const std::string& path) {
    check_channels(img, path);
    auto f = binio::open_write(path);
    std::string header = std::string(img.channels == 3 ? "PF" : "Pf") + "\n" +
                         std::to_string(img.width) + " " + std::to_string(img.height) +
                         "\n-1.0\n";
    binio::write_exact(f.get(), header.data(), header.size(), path);
    std::vector<float> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = img.height - 1; y >= 0; --y) {  // bottom-up raster
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<float>(img.at(x, y, c));
        binio::write_exact(f.get(), row.data(), row.size() * sizeof(float), path);
    }
}

Image read_pfm(const std::string& path) {
    auto f = binio::open_read(path);
    char kind[3] = {0, 0, 0};
    int w = 0, h = 0;
    double scale = 0;
    if (std::fscanf(f.get(), "%2s %d %d %lf", kind, &w, &h, &scale) != 4)
        throw ProtocolError("bad PFM header in " + path);
    if (std::fgetc(f.get()) != '\n') throw ProtocolError("bad PFM header in " + path);
    int ch;
    if (std::strcmp(kind, "PF") == 0)
        ch = 3;
    else if (std::strcmp(kind, "Pf") == 0)
        ch = 1;
    else
        throw ProtocolError(path + " is not a PFM file");
    if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
        throw ProtocolError("implausible PFM size in " + path);
    if (scale >= 0) throw ProtocolError("big-endian PFM not supported: " + path);

    Image img(w, h, ch);
    std::vector<float> row(static_cast<std::size_t>(w) * ch);
    for (int y = h - 1; y >= 0; --y) {
        binio::read_exact(f.get(), row.data(), row.size() * sizeof(float), path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                img.at(x, y, c) = row[static_cast<std::size_t>(x) * ch + c];
    }
    return img;
}

}  // namespace sf
