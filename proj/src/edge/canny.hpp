#ifndef DREAMPAST_CANNY_HPP
#define DREAMPAST_CANNY_HPP

#include <vector>

#include "image/image.hpp"
#include "util/jsonio.hpp"

namespace dreampast {

// Thresholds apply to gradient magnitude normalized into [0,1]
// (magnitude divided by the 4*sqrt(2) bound a [0,1] image can reach).
struct CannyParams {
    double sigma = 1.4;
    double low = 0.1;
    double high = 0.2;

    static CannyParams from_json(const json& j);
    json to_json() const;
    void validate() const;
};

// classic pipeline: luma -> Gaussian blur (reflect padding) -> Sobel ->
// non-maximum suppression over 4 direction bins -> double threshold with
// 8-connected hysteresis
EdgeMap canny(const Image& img, const CannyParams& p = {});

// stages exposed for direct testing
std::vector<double> luma(const Image& img);
void gaussian_blur(std::vector<double>& plane, int h, int w, double sigma);
void sobel(const std::vector<double>& plane, int h, int w,
           std::vector<double>& gx, std::vector<double>& gy);

}  // namespace dreampast

#endif
