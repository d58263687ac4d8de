#ifndef DREAMPAST_UNET_HPP
#define DREAMPAST_UNET_HPP

#include <memory>

#include "nn/nn.hpp"
#include "util/jsonio.hpp"

namespace dreampast {

// Noise-prediction U-Net. Input is RGB plus one edge-conditioning channel
// (zeroed when no edge map is attached). Conditioning enters twice:
//  - the class embedding (a table row, or an externally learned token)
//    is added to the sinusoidal timestep embedding,
//  - the combined vector feeds a small MLP whose output shifts every
//    residual block per-channel.
struct UNetConfig {
    int in_ch = 4;
    int out_ch = 3;
    int base = 16;           // channels at full resolution; doubles per level
    int cond_dim = 64;
    int groups = 8;
    int num_embeddings = 13;  // class-id-indexed rows, id 0 unused

    static UNetConfig from_json(const json& j);
    json to_json() const;
};

struct ResBlock {
    void init(int cin, int cout, int cond_dim, int groups, Rng& rng);
    void reg(ParamSet& ps, const std::string& prefix);
    Mat forward(const Mat& x, int h, int w, const Vec& cond);
    Mat backward(const Mat& dy, Vec& dcond);

    int cin = 0, cout = 0;

  private:
    GroupNorm gn1_, gn2_;
    SiLU act1_, act2_;
    Conv conv1_, conv2_, skip_;
    Linear condproj_;
    bool projected_skip_ = false;
    int h_ = 0, w_ = 0;
};

class UNet {
  public:
    UNet(const UNetConfig& cfg, Rng& rng);
    UNet(const UNet&) = delete;
    UNet& operator=(const UNet&) = delete;

    // class_id >= 1 uses (and trains) the embedding table row;
    // token != nullptr uses an external embedding (gradient via last_dcemb);
    // neither -> unconditional
    Mat forward(const Mat& x3, int h, int w, const EdgeMap* edge, int tau,
                int class_id, const Vec* token);
    void backward(const Mat& deps);

    // gradient w.r.t. the conditioning embedding of the last forward/backward
    const Vec& last_dcemb() const { return dcemb_; }

    Vec class_embedding(int class_id) const;
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const UNetConfig& config() const { return cfg_; }

    void save(const fs::path& p, const json& extra_meta = json::object()) const;
    static std::unique_ptr<UNet> load(const fs::path& p, json* meta_out = nullptr);
    std::unique_ptr<UNet> clone() const;

  private:
    UNetConfig cfg_;
    Mat emb_table_, gemb_table_;
    Linear cond1_, cond2_;
    SiLU cond_act_;
    Conv stem_, down1_, down2_, upc1_, upc2_, oconv_;
    ResBlock rb0_, rb1_, rb2_, mid_, urb1_, urb2_;
    GroupNorm ogn_;
    SiLU oact_;
    ParamSet params_;

    // state saved between forward and backward
    int h_ = 0, w_ = 0, class_id_ = -1;
    Mat a0_, a1_;  // skip activations
    Vec dcemb_;
};

}  // namespace dreampast

#endif
