#ifndef DREAMPAST_DRAW_HPP
#define DREAMPAST_DRAW_HPP

#include <string>
#include <vector>

#include "image/image.hpp"

namespace dreampast {

// Parametric shape vocabulary. Every shape is defined inside the unit
// circle of a local frame; instances place that frame by center, radius
// (pixels) and rotation. Masks come straight from the same inside test,
// so labels are exact by construction.
enum class ShapeKind {
    circle = 0, square, triangle, star, cross, ring,
    bar, diamond, pentagon, hexagon, crescent, wedge,
};

constexpr int kShapeVocabularySize = 12;

// name of the shape with 1-based class id `id` (id 0 is background)
const std::string& shape_name(int id);
ShapeKind shape_kind(int id);

struct ShapeInstance {
    ShapeKind kind;
    double cx, cy;   // center, pixels
    double r;        // nominal radius, pixels
    double theta;    // rotation, radians
};

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v);  // h,s,v in [0,1]

// inside test in image coordinates (x,y are pixel-center positions)
bool shape_contains(const ShapeInstance& s, double x, double y);

// paint fill color (with a radial shade falloff) and write `label` into the mask
void draw_shape(Image& img, Mask& mask, const ShapeInstance& s, int label,
                const Rgb& fill, double shade = 0.25);

}  // namespace dreampast

#endif
