#ifndef DREAMPAST_DIFFUSION_HPP
#define DREAMPAST_DIFFUSION_HPP

#include <functional>
#include <vector>

#include "nn/unet.hpp"
#include "scenario/scenario.hpp"
#include "util/rng.hpp"

namespace dreampast {

// Linear-beta noising schedule. alpha_bar[t] is the running product of
// (1 - beta); the virtual boundary below tau = 0 ("done") has alpha_bar = 1.
class Schedule {
  public:
    static Schedule linear(int n, double beta_start, double beta_end);
    static Schedule from_json(const json& j);
    json to_json() const;

    int steps() const { return int(betas_.size()); }
    double beta(int t) const { return betas_.at(t); }
    double alpha(int t) const { return 1.0 - betas_.at(t); }
    double alpha_bar(int t) const { return abar_.at(t); }
    double alpha_bar_or_done(int t) const { return t < 0 ? 1.0 : abar_.at(t); }

    // largest |alpha_bar[t] - prod_{s<=t}(1-beta_s)| recomputed in fresh
    // arithmetic; the self-consistency audit
    double max_consistency_error() const;

  private:
    std::vector<double> betas_, abar_;
};

struct DiffusionConfig {
    int num_train_steps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    int sampler_steps = 50;
    double cond_dropout = 0.1;
    int pretrain_iters = 3000;
    int batch_size = 8;
    double lr = 1e-3;
    int log_every = 50;
    UNetConfig net;

    static DiffusionConfig from_json(const json& j);
    json to_json() const;
    Schedule make_schedule() const { return Schedule::linear(num_train_steps, beta_start, beta_end); }
};

// forward noising: x_tau = sqrt(abar)*x0 + sqrt(1-abar)*eps
Mat add_noise(const Mat& x0, double abar, const Mat& eps);

// noise predictor seen by the samplers; conditioning is bound beforehand
struct EpsModel {
    virtual ~EpsModel() = default;
    virtual Mat eps(const Mat& x, int tau) = 0;
};

// UNet with fixed (edge, class/token) conditioning
class UNetEps : public EpsModel {
  public:
    UNetEps(UNet& net, int h, int w, const EdgeMap* edge, int class_id, const Vec* token)
        : net_(net), h_(h), w_(w), edge_(edge), class_id_(class_id), token_(token) {}
    Mat eps(const Mat& x, int tau) override {
        return net_.forward(x, h_, w_, edge_, tau, class_id_, token_);
    }

  private:
    UNet& net_;
    int h_, w_;
    const EdgeMap* edge_;
    int class_id_;
    const Vec* token_;
};

// evenly strided sub-schedule, ascending; last entry is num_train-1
std::vector<int> ddim_ladder(int num_train, int num_steps);

// one deterministic (eta = 0) update from tau to tau_prev;
// abar_prev = 1 finishes the trajectory
Mat ddim_step(const Mat& x, const Mat& eps, double abar_t, double abar_prev);

// full trajectory from pure noise; model evaluations = `steps`
Mat ddim_sample(EpsModel& model, int ch, int h, int w, const Schedule& sched, int steps,
                Rng& noise_rng);

// partial noising + denoising for domain alignment. `strength` picks the
// entry point: the noising level tau_s with sqrt(1 - abar) closest to
// strength. strength = 0 returns x0 untouched.
Mat ddr_refine(EpsModel& model, const Mat& x0, double strength, const Schedule& sched,
               int steps, Rng& noise_rng);

// ---- pretraining ------------------------------------------------------------

struct PretrainResult {
    json curve = json::array();  // {iter, train_loss, heldout_loss}
    double heldout_first = 0.0, heldout_last = 0.0;
    int64_t iters = 0;  // iterations executed by this call
};

// Resume support: the loop runs [start_iter, pretrain_iters) against the
// provided optimizer (its moments carry over) and calls snapshot(next)
// every snapshot_every completed iterations. Per-iteration randomness
// depends only on the iteration index, never on loop history.
struct PretrainHooks {
    int64_t start_iter = 0;
    Adam* opt = nullptr;
    std::function<void(int64_t)> snapshot;
    int64_t snapshot_every = 0;
};

// Denoising-objective training of the UNet over the pretrain corpus.
// Conditioning per sample: the image's primary-class embedding and its
// edge map, each independently dropped with cond_dropout. A fixed
// holdout slice (every 10th image per class) tracks generalization; its
// (tau, eps) draws are frozen so the curve is comparable across logs.
PretrainResult pretrain_denoiser(UNet& net, const Corpus& corpus,
                                 const std::vector<EdgeMap>& edges, const Schedule& sched,
                                 const DiffusionConfig& cfg, uint64_t seed,
                                 const std::function<void(const json&)>& log = nullptr,
                                 const PretrainHooks* hooks = nullptr);

}  // namespace dreampast

#endif
