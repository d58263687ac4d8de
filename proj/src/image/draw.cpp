#include "image/draw.hpp"

#include <array>
#include <cmath>

namespace dreampast {

namespace {

const std::array<std::string, kShapeVocabularySize> kNames = {
    "circle", "square", "triangle", "star", "cross", "ring",
    "bar", "diamond", "pentagon", "hexagon", "crescent", "wedge",
};

struct P {
    double x, y;
};

// even-odd ray cast; handles the concave shapes (star) too
bool in_polygon(const P* v, int n, double x, double y) {
    bool in = false;
    for (int i = 0, j = n - 1; i < n; j = i++) {
        if ((v[i].y > y) != (v[j].y > y)) {
            double t = (y - v[j].y) / (v[i].y - v[j].y);
            double xi = v[j].x + t * (v[i].x - v[j].x);
            if (x < xi) in = !in;
        }
    }
    return in;
}

// regular n-gon with vertices on the unit circle, first vertex at angle a0
template <int N>
bool in_ngon(double a0, double x, double y) {
    P v[N];
    for (int k = 0; k < N; ++k) {
        double a = a0 + 2.0 * M_PI * k / N;
        v[k] = {std::cos(a), std::sin(a)};
    }
    return in_polygon(v, N, x, y);
}

bool in_star(double x, double y) {
    P v[10];
    for (int k = 0; k < 10; ++k) {
        double a = M_PI / 2 + M_PI * k / 5;
        double rad = (k % 2 == 0) ? 1.0 : 0.45;
        v[k] = {rad * std::cos(a), rad * std::sin(a)};
    }
    return in_polygon(v, 10, x, y);
}

// inside test in the unit frame of each shape
bool unit_contains(ShapeKind kind, double x, double y) {
    double rr = x * x + y * y;
    switch (kind) {
        case ShapeKind::circle: return rr <= 1.0;
        case ShapeKind::square: {
            double s = 1.0 / std::sqrt(2.0);
            return std::abs(x) <= s && std::abs(y) <= s;
        }
        case ShapeKind::triangle: return in_ngon<3>(M_PI / 2, x, y);
        case ShapeKind::star: return in_star(x, y);
        case ShapeKind::cross:
            return (std::abs(x) <= 1.0 && std::abs(y) <= 0.32) ||
                   (std::abs(y) <= 1.0 && std::abs(x) <= 0.32);
        case ShapeKind::ring: return rr <= 1.0 && rr >= 0.55 * 0.55;
        case ShapeKind::bar: return std::abs(x) <= 1.0 && std::abs(y) <= 0.32;
        case ShapeKind::diamond: return std::abs(x) + std::abs(y) <= 1.0;
        case ShapeKind::pentagon: return in_ngon<5>(M_PI / 2, x, y);
        case ShapeKind::hexagon: return in_ngon<6>(0.0, x, y);
        case ShapeKind::crescent: {
            double dx = x - 0.45;
            return rr <= 1.0 && dx * dx + y * y > 0.75 * 0.75;
        }
        case ShapeKind::wedge: {
            if (rr > 1.0) return false;
            double a = std::atan2(y, x);
            return a >= 0.0 && a <= 110.0 * M_PI / 180.0;
        }
    }
    return false;
}

}  // namespace

const std::string& shape_name(int id) {
    if (id < 1 || id > kShapeVocabularySize) throw RuntimeError("shape id out of range");
    return kNames[id - 1];
}

ShapeKind shape_kind(int id) {
    if (id < 1 || id > kShapeVocabularySize) throw RuntimeError("shape id out of range");
    return ShapeKind(id - 1);
}

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);  // wrap hue
    double c = v * s;
    double hp = h * 6.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp) % 6) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        case 5: r = c, b = x; break;
    }
    double m = v - c;
    return {r + m, g + m, b + m};
}

bool shape_contains(const ShapeInstance& s, double x, double y) {
    double dx = (x - s.cx) / s.r;
    double dy = (y - s.cy) / s.r;
    double ct = std::cos(-s.theta), st = std::sin(-s.theta);
    double ux = ct * dx - st * dy;
    double uy = st * dx + ct * dy;
    return unit_contains(s.kind, ux, uy);
}

void draw_shape(Image& img, Mask& mask, const ShapeInstance& s, int label,
                const Rgb& fill, double shade) {
    int x0 = std::max(0, int(std::floor(s.cx - s.r - 1)));
    int x1 = std::min(img.w - 1, int(std::ceil(s.cx + s.r + 1)));
    int y0 = std::max(0, int(std::floor(s.cy - s.r - 1)));
    int y1 = std::min(img.h - 1, int(std::ceil(s.cy + s.r + 1)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double px = x + 0.5, py = y + 0.5;
            if (!shape_contains(s, px, py)) continue;
            double dx = (px - s.cx) / s.r, dy = (py - s.cy) / s.r;
            double f = 1.0 - shade * std::min(1.0, dx * dx + dy * dy);
            img.at(0, y, x) = fill.r * f;
            img.at(1, y, x) = fill.g * f;
            img.at(2, y, x) = fill.b * f;
            mask.at(y, x) = label;
        }
    }
}

}  // namespace dreampast
