#include "edge/canny.hpp"

#include <cmath>

#include "util/common.hpp"

namespace dreampast {

CannyParams CannyParams::from_json(const json& j) {
    CannyParams p;
    p.sigma = j.value("sigma", p.sigma);
    p.low = j.value("low", p.low);
    p.high = j.value("high", p.high);
    return p;
}

json CannyParams::to_json() const {
    return json{{"sigma", sigma}, {"low", low}, {"high", high}};
}

void CannyParams::validate() const {
    if (sigma <= 0.0) throw UsageError("canny sigma must be > 0");
    if (!(0.0 <= low && low < high && high <= 1.0))
        throw UsageError("canny thresholds need 0 <= low < high <= 1");
}

std::vector<double> luma(const Image& img) {
    std::vector<double> out(img.npx());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = 0.299 * img.px(0, i) + 0.587 * img.px(1, i) + 0.114 * img.px(2, i);
    return out;
}

namespace {

// mirror index for reflect padding: -1 -> 0, n -> n-1
inline int reflect(int i, int n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
}

std::vector<double> gauss_kernel(double sigma) {
    int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

void gaussian_blur(std::vector<double>& plane, int h, int w, double sigma) {
    auto k = gauss_kernel(sigma);
    int radius = int(k.size() / 2);
    std::vector<double> tmp(plane.size());
    // horizontal
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * plane[size_t(y) * w + reflect(x + i, w)];
            tmp[size_t(y) * w + x] = s;
        }
    // vertical
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * tmp[size_t(reflect(y + i, h)) * w + x];
            plane[size_t(y) * w + x] = s;
        }
}

void sobel(const std::vector<double>& plane, int h, int w,
           std::vector<double>& gx, std::vector<double>& gy) {
    gx.assign(plane.size(), 0.0);
    gy.assign(plane.size(), 0.0);
    auto at = [&](int y, int x) { return plane[size_t(reflect(y, h)) * w + reflect(x, w)]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double tl = at(y - 1, x - 1), tc = at(y - 1, x), tr = at(y - 1, x + 1);
            double ml = at(y, x - 1), mr = at(y, x + 1);
            double bl = at(y + 1, x - 1), bc = at(y + 1, x), br = at(y + 1, x + 1);
            gx[size_t(y) * w + x] = (tr + 2 * mr + br) - (tl + 2 * ml + bl);
            gy[size_t(y) * w + x] = (bl + 2 * bc + br) - (tl + 2 * tc + tr);
        }
}

EdgeMap canny(const Image& img, const CannyParams& p) {
    p.validate();
    int h = img.h, w = img.w;
    std::vector<double> plane = luma(img);
    gaussian_blur(plane, h, w, p.sigma);

    std::vector<double> gx, gy;
    sobel(plane, h, w, gx, gy);

    const double norm = 4.0 * std::sqrt(2.0);  // max magnitude a [0,1] image can produce
    std::vector<double> mag(plane.size());
    for (size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]) / norm;

    // non-maximum suppression along the gradient direction, 4 bins
    std::vector<double> nms(plane.size(), 0.0);
    auto m = [&](int y, int x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return mag[size_t(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = size_t(y) * w + x;
            if (mag[i] == 0.0) continue;
            double theta = std::atan2(gy[i], gx[i]);
            if (theta < 0) theta += M_PI;
            if (theta >= M_PI) theta -= M_PI;
            int bin = int(std::floor((theta + M_PI / 8) / (M_PI / 4))) % 4;
            double a, b;
            switch (bin) {
                case 0: a = m(y, x - 1), b = m(y, x + 1); break;        // E-W
                case 1: a = m(y - 1, x - 1), b = m(y + 1, x + 1); break;  // NW-SE
                case 2: a = m(y - 1, x), b = m(y + 1, x); break;        // N-S
                default: a = m(y - 1, x + 1), b = m(y + 1, x - 1); break; // NE-SW
            }
            // strict on one side, loose on the other: a two-wide plateau keeps one pixel
            if (mag[i] > a && mag[i] >= b) nms[i] = mag[i];
        }

    // double threshold + hysteresis (8-connectivity, stack walk from strong pixels)
    EdgeMap out(h, w);
    std::vector<uint8_t> weak(plane.size(), 0);
    std::vector<size_t> stack;
    for (size_t i = 0; i < nms.size(); ++i) {
        if (nms[i] > p.high) {
            out.v[i] = 1;
            stack.push_back(i);
        } else if (nms[i] > p.low) {
            weak[i] = 1;
        }
    }
    while (!stack.empty()) {
        size_t i = stack.back();
        stack.pop_back();
        int y = int(i / w), x = int(i % w);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                size_t ni = size_t(ny) * w + nx;
                if (weak[ni] && !out.v[ni]) {
                    out.v[ni] = 1;
                    stack.push_back(ni);
                }
            }
    }
    return out;
}

}  // namespace dreampast
