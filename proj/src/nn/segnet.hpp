#ifndef DREAMPAST_SEGNET_HPP
#define DREAMPAST_SEGNET_HPP

#include <memory>

#include "nn/nn.hpp"
#include "util/jsonio.hpp"

namespace dreampast {

// Small encoder-decoder FCN with skip connections and a 1x1 head.
// Incremental steps extend the head in place: old rows are untouched,
// so logits for existing classes are bit-identical before and after.
struct SegNetConfig {
    int in_ch = 3;
    int base = 12;  // channels at full resolution
    int groups = 4;
    double head_init_std = 1e-3;

    static SegNetConfig from_json(const json& j);
    json to_json() const;
};

class SegNet {
  public:
    SegNet(const SegNetConfig& cfg, int num_classes, Rng& rng);
    SegNet(const SegNet&) = delete;
    SegNet& operator=(const SegNet&) = delete;

    Mat forward(const Mat& x, int h, int w);  // logits, num_classes x (h*w)
    void backward(const Mat& dlogits);

    // append channels for new classes; existing head rows keep their values
    void extend_head(int n_new, Rng& rng);

    int num_classes() const { return k_; }
    const SegNetConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // meta carries the label-space bookkeeping (class ids per channel etc.)
    void save(const fs::path& p, const json& extra_meta = json::object()) const;
    static std::unique_ptr<SegNet> load(const fs::path& p, json* meta_out = nullptr);
    std::unique_ptr<SegNet> clone() const;

  private:
    void collect_params();

    SegNetConfig cfg_;
    int k_ = 0;

    struct Stage {  // conv -> GroupNorm -> SiLU
        Conv conv;
        GroupNorm gn;
        SiLU act;
        Mat forward(const Mat& x, int h, int w) { return act.forward(gn.forward(conv.forward(x, h, w))); }
        Mat backward(const Mat& dy) { return conv.backward(gn.backward(act.backward(dy))); }
    };

    Stage e0a_, e0b_, e1a_, e1b_, e2a_, e2b_, d1a_, d1b_, d0a_, d0b_;
    Conv head_;
    ParamSet params_;

    int h_ = 0, w_ = 0;
    Mat s0_, s1_;  // skip activations
};

}  // namespace dreampast

#endif
