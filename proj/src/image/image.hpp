#ifndef DREAMPAST_IMAGE_HPP
#define DREAMPAST_IMAGE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "util/common.hpp"

namespace dreampast {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// RGB image, values nominally in [0,1]. Stored as a (3 x H*W) matrix:
// row = channel, column = pixel (row-major pixel order, y*w + x).
struct Image {
    int h = 0, w = 0;
    Mat px;  // 3 x (h*w)

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(Mat::Zero(3, size_t(h_) * w_)) {}
    double& at(int c, int y, int x) { return px(c, size_t(y) * w + x); }
    double at(int c, int y, int x) const { return px(c, size_t(y) * w + x); }
    size_t npx() const { return size_t(h) * w; }
};

// dense integer label map, one class id per pixel
struct Mask {
    int h = 0, w = 0;
    std::vector<int32_t> v;

    Mask() = default;
    Mask(int h_, int w_, int32_t fill = 0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {}
    int32_t& at(int y, int x) { return v[size_t(y) * w + x]; }
    int32_t at(int y, int x) const { return v[size_t(y) * w + x]; }
    bool operator==(const Mask& o) const { return h == o.h && w == o.w && v == o.v; }
};

// binary edge map (0/1 per pixel)
struct EdgeMap {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    EdgeMap() = default;
    EdgeMap(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * w_, 0) {}
    uint8_t& at(int y, int x) { return v[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[size_t(y) * w + x]; }
    bool operator==(const EdgeMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

// PNG round trips: images are 8-bit RGB, masks 8-bit gray (label = gray value),
// edges 1-bit gray. Encoding is fixed-settings libpng, so identical pixels
// produce identical files.
void write_png_rgb(const fs::path& p, const Image& img);
Image read_png_rgb(const fs::path& p);
void write_png_mask(const fs::path& p, const Mask& m);
Mask read_png_mask(const fs::path& p);
void write_png_edge(const fs::path& p, const EdgeMap& e);
EdgeMap read_png_edge(const fs::path& p);

// u8 quantization used by the PNG writer, exposed for tests
inline uint8_t quant8(double x) {
    double q = x * 255.0 + 0.5;
    if (q < 0) q = 0;
    if (q > 255) q = 255;
    return uint8_t(q);
}

}  // namespace dreampast

#endif
