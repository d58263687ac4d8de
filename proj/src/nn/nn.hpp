#ifndef DREAMPAST_NN_HPP
#define DREAMPAST_NN_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ckpt/checkpoint.hpp"
#include "image/image.hpp"
#include "util/rng.hpp"

namespace dreampast {

// Feature maps are (C x H*W) matrices (column = pixel, row-major pixel
// order). Everything runs in double; checkpoints round to float32.
//
// Layers process one sample at a time and keep whatever activations their
// backward pass needs. Gradients accumulate across samples until
// ParamSet::zero_grad(); batching is a loop plus a 1/B scale on the loss
// gradient at the top.

struct ParamRef {
    std::string name;
    double* w = nullptr;
    double* g = nullptr;
    size_t n = 0;
    std::vector<int64_t> shape;
};

class ParamSet {
  public:
    void add(const std::string& name, Mat& w, Mat& g);
    void add(const std::string& name, Vec& w, Vec& g);
    const std::vector<ParamRef>& refs() const { return refs_; }
    size_t total() const;
    void zero_grad();
    void save(CkptWriter& wr) const;
    void load(const CkptReader& rd);
    void copy_values_from(const ParamSet& o);  // same structure required
    uint64_t value_hash() const;               // over float32-rounded bytes

  private:
    std::vector<ParamRef> refs_;
};

// largest divisor of c that is <= want (GroupNorm needs c % groups == 0)
int pick_groups(int c, int want);

// ---- layers -------------------------------------------------------------

// 3x3 (pad 1) or 1x1 convolution, stride 1 or 2, via im2col + GEMM
struct Conv {
    int cin = 0, cout = 0, ksz = 3, stride = 1;
    Mat w, gw;  // cout x (cin*ksz*ksz), column u*cin+c for kernel offset u
    Vec b, gb;

    void init(int cin_, int cout_, int ksz_, int stride_, Rng& rng);
    void reg(ParamSet& ps, const std::string& prefix);
    Mat forward(const Mat& x, int h, int w);
    Mat backward(const Mat& dy);
    int hout(int h) const { return stride == 1 ? h : (h + 1) / 2; }
    int wout(int w) const { return stride == 1 ? w : (w + 1) / 2; }

  private:
    Mat col_, x1_;  // saved for backward (col for 3x3, input for 1x1)
    int hin_ = 0, win_ = 0;
};

struct GroupNorm {
    int c = 0, groups = 1;
    double eps = 1e-5;
    Vec gamma, beta, ggamma, gbeta;

    void init(int c_, int groups_);
    void reg(ParamSet& ps, const std::string& prefix);
    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);

  private:
    Mat xhat_;
    std::vector<double> invstd_;
};

struct SiLU {
    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);

  private:
    Mat x_, sig_;
};

struct Linear {
    int in = 0, out = 0;
    Mat w, gw;
    Vec b, gb;

    void init(int in_, int out_, Rng& rng);
    void reg(ParamSet& ps, const std::string& prefix);
    Vec forward(const Vec& x);
    Vec backward(const Vec& dy);

  private:
    Vec x_;
};

// nearest-neighbor 2x upsampling (free functions; no parameters)
Mat upsample2_forward(const Mat& x, int h, int w);
Mat upsample2_backward(const Mat& dy, int h, int w);  // h,w = input (small) size

// ---- optimizers -----------------------------------------------------------

struct Sgd {
    double momentum = 0.9;

    void init(const ParamSet& ps);
    void step(ParamSet& ps, double lr);

  private:
    std::vector<double> vel_;
};

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(const ParamSet& ps);
    bool initialized() const { return !m_.empty(); }
    void step(ParamSet& ps, double lr);
    int64_t t() const { return t_; }

    // moment persistence for resumable training (float32-rounded like all
    // checkpoints)
    void save(CkptWriter& wr) const;
    void load(const CkptReader& rd);

  private:
    std::vector<double> m_, v_;
    int64_t t_ = 0;
};

// polynomial decay: lr = base * (1 - iter/max_iter)^power
inline double poly_lr(double base, int64_t iter, int64_t max_iter, double power = 0.9) {
    double frac = max_iter > 0 ? double(iter) / double(max_iter) : 0.0;
    if (frac > 1.0) frac = 1.0;
    return base * std::pow(1.0 - frac, power);
}

// sinusoidal position embedding of an integer timestep
Vec sinusoidal_embedding(int tau, int dim);

}  // namespace dreampast

#endif
