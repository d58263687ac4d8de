#include "image/image.hpp"

#include <png.h>

#include <cstring>

namespace dreampast {

namespace {

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* f = nullptr;

    PngWriter(const fs::path& p, int w, int h, int bit_depth, int color_type) {
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        f = std::fopen(p.c_str(), "wb");
        if (!f) throw RuntimeError("cannot write " + p.string());
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (setjmp(png_jmpbuf(png))) throw RuntimeError("png encode failed: " + p.string());
        png_init_io(png, f);
        // fixed encoder settings keep byte output deterministic
        png_set_compression_level(png, 6);
        png_set_filter(png, 0, PNG_FILTER_NONE);
        png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
    }
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, &info);
        if (f) std::fclose(f);
    }
};

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* f = nullptr;
    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;

    explicit PngReader(const fs::path& p) {
        f = std::fopen(p.c_str(), "rb");
        if (!f) throw RuntimeError("cannot open " + p.string());
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (setjmp(png_jmpbuf(png))) throw RuntimeError("png decode failed: " + p.string());
        png_init_io(png, f);
        png_read_info(png, info);
        png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    }
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png_rgb(const fs::path& p, const Image& img) {
    PngWriter wr(p, img.w, img.h, 8, PNG_COLOR_TYPE_RGB);
    if (setjmp(png_jmpbuf(wr.png))) throw RuntimeError("png encode failed: " + p.string());
    std::vector<uint8_t> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) row[size_t(x) * 3 + c] = quant8(img.at(c, y, x));
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

Image read_png_rgb(const fs::path& p) {
    PngReader rd(p);
    if (setjmp(png_jmpbuf(rd.png))) throw RuntimeError("png decode failed: " + p.string());
    if (rd.bit_depth != 8) png_set_strip_16(rd.png);
    if (rd.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(rd.png);
    if (rd.color_type == PNG_COLOR_TYPE_GRAY || rd.color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(rd.png);
    png_set_strip_alpha(rd.png);
    png_read_update_info(rd.png, rd.info);

    Image img(int(rd.h), int(rd.w));
    std::vector<uint8_t> row(size_t(rd.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[size_t(x) * 3 + c] / 255.0;
    }
    return img;
}

void write_png_mask(const fs::path& p, const Mask& m) {
    PngWriter wr(p, m.w, m.h, 8, PNG_COLOR_TYPE_GRAY);
    if (setjmp(png_jmpbuf(wr.png))) throw RuntimeError("png encode failed: " + p.string());
    std::vector<uint8_t> row(size_t(m.w));
    for (int y = 0; y < m.h; ++y) {
        for (int x = 0; x < m.w; ++x) {
            int32_t v = m.at(y, x);
            if (v < 0 || v > 255) throw RuntimeError("mask label out of 8-bit range");
            row[size_t(x)] = uint8_t(v);
        }
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

Mask read_png_mask(const fs::path& p) {
    PngReader rd(p);
    if (setjmp(png_jmpbuf(rd.png))) throw RuntimeError("png decode failed: " + p.string());
    if (rd.color_type != PNG_COLOR_TYPE_GRAY || rd.bit_depth != 8)
        throw RuntimeError("mask png must be 8-bit gray: " + p.string());
    Mask m(int(rd.h), int(rd.w));
    std::vector<uint8_t> row(size_t(rd.w));
    for (int y = 0; y < m.h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < m.w; ++x) m.at(y, x) = row[size_t(x)];
    }
    return m;
}

void write_png_edge(const fs::path& p, const EdgeMap& e) {
    PngWriter wr(p, e.w, e.h, 1, PNG_COLOR_TYPE_GRAY);
    if (setjmp(png_jmpbuf(wr.png))) throw RuntimeError("png encode failed: " + p.string());
    std::vector<uint8_t> row((size_t(e.w) + 7) / 8);
    for (int y = 0; y < e.h; ++y) {
        std::memset(row.data(), 0, row.size());
        for (int x = 0; x < e.w; ++x)
            if (e.at(y, x)) row[size_t(x) / 8] |= uint8_t(0x80u >> (x % 8));
        png_write_row(wr.png, row.data());
    }
    png_write_end(wr.png, nullptr);
}

EdgeMap read_png_edge(const fs::path& p) {
    PngReader rd(p);
    if (setjmp(png_jmpbuf(rd.png))) throw RuntimeError("png decode failed: " + p.string());
    if (rd.color_type != PNG_COLOR_TYPE_GRAY || rd.bit_depth != 1)
        throw RuntimeError("edge png must be 1-bit gray: " + p.string());
    EdgeMap e(int(rd.h), int(rd.w));
    std::vector<uint8_t> row((size_t(rd.w) + 7) / 8);
    for (int y = 0; y < e.h; ++y) {
        png_read_row(rd.png, row.data(), nullptr);
        for (int x = 0; x < e.w; ++x)
            e.at(y, x) = (row[size_t(x) / 8] >> (7 - x % 8)) & 1u;
    }
    return e;
}

}  // namespace dreampast
