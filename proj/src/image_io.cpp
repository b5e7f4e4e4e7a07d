#include "sp4d/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace sp4d {

namespace {

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    explicit PngReader(const std::string& path) {
        fp = std::fopen(path.c_str(), "rb");
        if (!fp) throw std::runtime_error("cannot open PNG: " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG read error: " + path);
        png_init_io(png, fp);
        png_read_info(png, info);
    }
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    explicit PngWriter(const std::string& path) {
        fp = std::fopen(path.c_str(), "wb");
        if (!fp) throw std::runtime_error("cannot write PNG: " + path);
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (setjmp(png_jmpbuf(png))) throw std::runtime_error("PNG write error: " + path);
        png_init_io(png, fp);
    }
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, &info);
        if (fp) std::fclose(fp);
    }
};

}  // namespace

ImageU8 read_png_rgb8(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    png_set_palette_to_rgb(r.png);
    png_set_expand_gray_1_2_4_to_8(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);
    const int w = png_get_image_width(r.png, r.info);
    const int h = png_get_image_height(r.png, r.info);
    if (png_get_channels(r.png, r.info) != 3)
        throw std::runtime_error("PNG did not decode to RGB: " + path);
    ImageU8 img(w, h, 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = img.data.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(r.png, rows.data());
    return img;
}

void write_png_rgb8(const std::string& path, const ImageU8& img) {
    PngWriter wtr(path);
    if (setjmp(png_jmpbuf(wtr.png))) throw std::runtime_error("PNG write error: " + path);
    png_set_IHDR(wtr.png, wtr.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_sRGB_gAMA_and_cHRM(wtr.png, wtr.info, PNG_sRGB_INTENT_PERCEPTUAL);
    png_write_info(wtr.png, wtr.info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.width * 3);
    png_write_image(wtr.png, rows.data());
    png_write_end(wtr.png, nullptr);
}

Image<uint16_t> read_png_gray16(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    const int depth = png_get_bit_depth(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    if (color != PNG_COLOR_TYPE_GRAY)
        throw std::runtime_error("expected grayscale PNG: " + path);
    if (depth < 16) png_set_expand_gray_1_2_4_to_8(r.png);
    png_read_update_info(r.png, r.info);
    const int w = png_get_image_width(r.png, r.info);
    const int h = png_get_image_height(r.png, r.info);
    Image<uint16_t> img(w, h, 1);
    if (depth == 16) {
        // libpng delivers big-endian 16-bit samples
        std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 2);
        std::vector<png_bytep> rows(h);
        for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * w * 2;
        png_read_image(r.png, rows.data());
        for (size_t i = 0; i < img.data.size(); ++i)
            img.data[i] = static_cast<uint16_t>((raw[i * 2] << 8) | raw[i * 2 + 1]);
    } else {
        std::vector<uint8_t> raw(static_cast<size_t>(w) * h);
        std::vector<png_bytep> rows(h);
        for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * w;
        png_read_image(r.png, rows.data());
        for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = raw[i];
    }
    return img;
}

void write_png_gray16(const std::string& path, const Image<uint16_t>& img) {
    PngWriter wtr(path);
    if (setjmp(png_jmpbuf(wtr.png))) throw std::runtime_error("PNG write error: " + path);
    png_set_IHDR(wtr.png, wtr.info, img.width, img.height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wtr.png, wtr.info);
    std::vector<uint8_t> raw(static_cast<size_t>(img.width) * img.height * 2);
    for (size_t i = 0; i < img.data.size(); ++i) {
        raw[i * 2] = static_cast<uint8_t>(img.data[i] >> 8);
        raw[i * 2 + 1] = static_cast<uint8_t>(img.data[i] & 0xff);
    }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = raw.data() + static_cast<size_t>(y) * img.width * 2;
    png_write_image(wtr.png, rows.data());
    png_write_end(wtr.png, nullptr);
}

ImageU8 read_png_gray8(const std::string& path) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG read error: " + path);
    png_set_expand_gray_1_2_4_to_8(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_rgb_to_gray(r.png, 1, -1, -1);
    png_read_update_info(r.png, r.info);
    const int w = png_get_image_width(r.png, r.info);
    const int h = png_get_image_height(r.png, r.info);
    ImageU8 img(w, h, 1);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = img.data.data() + static_cast<size_t>(y) * w;
    png_read_image(r.png, rows.data());
    return img;
}

void write_png_gray8(const std::string& path, const ImageU8& img) {
    PngWriter wtr(path);
    if (setjmp(png_jmpbuf(wtr.png))) throw std::runtime_error("PNG write error: " + path);
    png_set_IHDR(wtr.png, wtr.info, img.width, img.height, 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wtr.png, wtr.info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() + static_cast<size_t>(y) * img.width);
    png_write_image(wtr.png, rows.data());
    png_write_end(wtr.png, nullptr);
}

Image<float> read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open PFM: " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    f >> magic >> w >> h >> scale;
    if (magic != "Pf" || w <= 0 || h <= 0)
        throw std::runtime_error("malformed PFM header: " + path);
    f.get(); // single whitespace after the scale
    Image<float> img(w, h, 1);
    std::vector<float> row(w);
    for (int y = h - 1; y >= 0; --y) { // bottom-up storage
        f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(w) * 4);
        if (!f) throw std::runtime_error("truncated PFM: " + path);
        if (scale > 0) // big-endian file
            for (float& v : row) {
                uint32_t u;
                std::memcpy(&u, &v, 4);
                u = __builtin_bswap32(u);
                std::memcpy(&v, &u, 4);
            }
        std::memcpy(&img.at(0, y), row.data(), static_cast<size_t>(w) * 4);
    }
    return img;
}

void write_pfm(const std::string& path, const Image<float>& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write PFM: " + path);
    f << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
    for (int y = img.height - 1; y >= 0; --y)
        f.write(reinterpret_cast<const char*>(img.data.data() +
                                              static_cast<size_t>(y) * img.width),
                static_cast<std::streamsize>(img.width) * 4);
}

}  // namespace sp4d
