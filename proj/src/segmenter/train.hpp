#ifndef DREAMPAST_SEG_TRAIN_HPP
#define DREAMPAST_SEG_TRAIN_HPP

#include <functional>

#include "nn/segnet.hpp"
#include "segmenter/losses.hpp"

namespace dreampast {

struct SegTrainHyper {
    double base_lr = 1e-2;   // step 1
    double incr_lr = 1e-3;   // steps >= 2
    double momentum = 0.9;
    double poly_power = 0.9;
    int epochs = 40;
    int batch = 24;  // clamped to the pool size
    int log_every = 10;
    SegNetConfig net;

    static SegTrainHyper from_json(const json& j);
    json to_json() const;
};

// one training sample: pixels plus a channel-space label map
struct TrainPoolItem {
    const Image* img = nullptr;
    Mask mask_ch;        // labels are channel indices, 0 = background
    bool replay = false;
};

struct SegTrainResult {
    int64_t iters = 0;
    int64_t draws = 0;         // total samples drawn into batches
    int64_t replay_draws = 0;  // of which replay
    double final_loss = 0.0;
};

// SGD + momentum with a per-step polynomial learning-rate decay. Batches
// draw uniformly (with replacement) from the concatenated pool, each
// sample flipped horizontally with probability 1/2. With an old model the
// composite objective applies: cross-entropy on labeled + pseudo-labeled
// pixels, the unknown-area term on the remaining background, distillation
// everywhere. Without one (step 1) it is plain cross-entropy on every
// pixel. Old-model outputs are cached per (sample, flip) since that model
// is frozen.
SegTrainResult train_segmenter(SegNet& model, SegNet* old_model,
                               const std::vector<TrainPoolItem>& pool, int h, int w,
                               double lr, const SegTrainHyper& hp, const LossConfig& loss_cfg,
                               uint64_t seed,
                               const std::function<void(const json&)>& log = nullptr);

// horizontal mirror, shared by training and tests
Mat flip_image(const Mat& px, int h, int w);
Mask flip_mask(const Mask& m);

}  // namespace dreampast

#endif
