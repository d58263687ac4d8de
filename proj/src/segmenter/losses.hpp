#ifndef DREAMPAST_LOSSES_HPP
#define DREAMPAST_LOSSES_HPP

#include <vector>

#include "image/image.hpp"
#include "util/jsonio.hpp"

namespace dreampast {

// All loss functions work in channel space: logits are (K x N), label
// maps hold channel indices with 0 = background. Each term is
// mean-normalized over its own pixel area and contributes gradient into
// `dlogits` scaled by `gscale` (the caller folds lambda and 1/batch in
// there). Empty areas yield loss 0 and no gradient.

struct LossConfig {
    double lambda_ce = 1.0;
    double lambda_ali = 1.0;
    double lambda_kd = 1.0;
    double conf_threshold = 0.7;
    bool use_pseudo_labels = true;

    static LossConfig from_json(const json& j);
    json to_json() const;
};

struct PseudoLabels {
    std::vector<int32_t> label;  // old-model argmax channel, every pixel
    std::vector<double> conf;    // old-model max softmax prob, every pixel
    std::vector<uint8_t> a_old;  // background pixels confidently claimed by an old class
};

// Carve the old-class area out of the current background: a pixel joins
// A_old iff it is background-labeled now, the old model's argmax is a
// non-background class, and its confidence clears the threshold.
PseudoLabels pseudo_label(const Mat& old_logits, const std::vector<uint8_t>& bg,
                          double conf_threshold);

// cross-entropy over `area`, target = channel index per pixel
double loss_ce(const Mat& logits, const std::vector<int32_t>& target,
               const std::vector<uint8_t>& area, Mat* dlogits, double gscale);

// cosine distance between old/new softmax distributions restricted to the
// old non-background channels (1..k_old-1), averaged over all pixels
double loss_kd(const Mat& new_logits, const Mat& old_logits, int k_old, Mat* dlogits,
               double gscale);

// unknown-area alignment over `area`: max current logit minus the
// old-posterior-weighted average of the old-channel logits
double loss_ali(const Mat& new_logits, const Mat& old_logits,
                const std::vector<uint8_t>& area, int k_old, Mat* dlogits, double gscale);

}  // namespace dreampast

#endif
