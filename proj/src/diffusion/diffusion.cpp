#include "diffusion/diffusion.hpp"

#include <cmath>

#include "util/common.hpp"

namespace dreampast {

Schedule Schedule::linear(int n, double beta_start, double beta_end) {
    if (n < 1) throw UsageError("schedule needs at least one step");
    if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1))
        throw UsageError("schedule needs 0 < beta_start <= beta_end < 1");
    Schedule s;
    s.betas_.resize(n);
    s.abar_.resize(n);
    double acc = 1.0;
    for (int t = 0; t < n; ++t) {
        s.betas_[t] = n == 1 ? beta_start
                             : beta_start + (beta_end - beta_start) * double(t) / double(n - 1);
        acc *= 1.0 - s.betas_[t];
        s.abar_[t] = acc;
    }
    return s;
}

Schedule Schedule::from_json(const json& j) {
    Schedule s;
    s.betas_ = j.at("betas").get<std::vector<double>>();
    s.abar_.resize(s.betas_.size());
    double acc = 1.0;
    for (size_t t = 0; t < s.betas_.size(); ++t) {
        acc *= 1.0 - s.betas_[t];
        s.abar_[t] = acc;
    }
    return s;
}

json Schedule::to_json() const {
    return json{{"betas", betas_}};
}

double Schedule::max_consistency_error() const {
    double acc = 1.0, worst = 0.0;
    for (size_t t = 0; t < betas_.size(); ++t) {
        acc *= 1.0 - betas_[t];
        worst = std::max(worst, std::abs(acc - abar_[t]));
    }
    return worst;
}

DiffusionConfig DiffusionConfig::from_json(const json& j) {
    DiffusionConfig c;
    c.num_train_steps = j.value("num_train_steps", c.num_train_steps);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.sampler_steps = j.value("sampler_steps", c.sampler_steps);
    c.cond_dropout = j.value("cond_dropout", c.cond_dropout);
    c.pretrain_iters = j.value("pretrain_iters", c.pretrain_iters);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.log_every = j.value("log_every", c.log_every);
    if (j.contains("net")) c.net = UNetConfig::from_json(j["net"]);
    return c;
}

json DiffusionConfig::to_json() const {
    return json{{"num_train_steps", num_train_steps},
                {"beta_start", beta_start},
                {"beta_end", beta_end},
                {"sampler_steps", sampler_steps},
                {"cond_dropout", cond_dropout},
                {"pretrain_iters", pretrain_iters},
                {"batch_size", batch_size},
                {"lr", lr},
                {"log_every", log_every},
                {"net", net.to_json()}};
}

Mat add_noise(const Mat& x0, double abar, const Mat& eps) {
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

std::vector<int> ddim_ladder(int num_train, int num_steps) {
    if (num_steps < 1 || num_steps > num_train)
        throw UsageError("sampler steps must be in [1, num_train_steps]");
    std::vector<int> taus(num_steps);
    for (int i = 0; i < num_steps; ++i)
        taus[i] = (i + 1) * num_train / num_steps - 1;
    taus.back() = num_train - 1;
    return taus;
}

Mat ddim_step(const Mat& x, const Mat& eps, double abar_t, double abar_prev) {
    Mat x0hat = (x - std::sqrt(1.0 - abar_t) * eps) / std::sqrt(abar_t);
    return std::sqrt(abar_prev) * x0hat + std::sqrt(1.0 - abar_prev) * eps;
}

namespace {

Mat run_ladder(EpsModel& model, Mat x, const std::vector<int>& taus, const Schedule& sched) {
    for (int i = int(taus.size()) - 1; i >= 0; --i) {
        int tau = taus[i];
        int tau_prev = i > 0 ? taus[i - 1] : -1;
        Mat e = model.eps(x, tau);
        x = ddim_step(x, e, sched.alpha_bar(tau), sched.alpha_bar_or_done(tau_prev));
    }
    return x;
}

}  // namespace

Mat ddim_sample(EpsModel& model, int ch, int h, int w, const Schedule& sched, int steps,
                Rng& noise_rng) {
    Mat x(ch, size_t(h) * w);
    noise_rng.fill_normal(x.data(), size_t(x.size()));
    return run_ladder(model, std::move(x), ddim_ladder(sched.steps(), steps), sched);
}

Mat ddr_refine(EpsModel& model, const Mat& x0, double strength, const Schedule& sched,
               int steps, Rng& noise_rng) {
    if (strength < 0.0 || strength > 1.0) throw UsageError("refinement strength must be in [0,1]");
    if (strength == 0.0) return x0;

    // entry point: tau with sqrt(1-abar) closest to the requested strength
    int tau_s = 0;
    double best = 2.0;
    for (int t = 0; t < sched.steps(); ++t) {
        double d = std::abs(std::sqrt(1.0 - sched.alpha_bar(t)) - strength);
        if (d < best) best = d, tau_s = t;
    }

    Mat eps(x0.rows(), x0.cols());
    noise_rng.fill_normal(eps.data(), size_t(eps.size()));
    Mat x = add_noise(x0, sched.alpha_bar(tau_s), eps);

    // reuse the global ladder below the entry point, entering at tau_s itself
    std::vector<int> sub;
    for (int tau : ddim_ladder(sched.steps(), steps))
        if (tau < tau_s) sub.push_back(tau);
    sub.push_back(tau_s);
    return run_ladder(model, std::move(x), sub, sched);
}

PretrainResult pretrain_denoiser(UNet& net, const Corpus& corpus,
                                 const std::vector<EdgeMap>& edges, const Schedule& sched,
                                 const DiffusionConfig& cfg, uint64_t seed,
                                 const std::function<void(const json&)>& log,
                                 const PretrainHooks* hooks) {
    if (corpus.size() == 0) throw RuntimeError("pretraining needs a non-empty corpus");
    if (edges.size() != corpus.size()) throw RuntimeError("edge cache size mismatch");

    int h = corpus.height(), w = corpus.width();
    size_t npx = size_t(h) * w;
    int n_sched = sched.steps();
    Rng root(seed);

    // fixed holdout slice with frozen noise draws
    std::vector<int> train_idx, held_idx;
    for (int i = 0; i < int(corpus.size()); ++i)
        (i % 10 == 9 ? held_idx : train_idx).push_back(i);
    if (train_idx.empty()) train_idx = held_idx;

    struct HeldItem {
        int idx, tau;
        Mat eps;
    };
    std::vector<HeldItem> held;
    for (int i : held_idx) {
        Rng r = root.fork("holdout", uint64_t(i));
        HeldItem it{i, r.uniform_int(n_sched), Mat(3, npx)};
        r.fill_normal(it.eps.data(), size_t(it.eps.size()));
        held.push_back(std::move(it));
    }

    auto heldout_loss = [&]() {
        double sum = 0.0;
        for (const auto& it : held) {
            const auto& info = corpus.manifest.samples[it.idx];
            Mat xt = add_noise(corpus.images[it.idx].px, sched.alpha_bar(it.tau), it.eps);
            Mat pred = net.forward(xt, h, w, &edges[it.idx], it.tau, info.primary, nullptr);
            sum += (pred - it.eps).squaredNorm() / double(pred.size());
        }
        return held.empty() ? 0.0 : sum / double(held.size());
    };

    Adam local_opt;
    Adam& opt = hooks && hooks->opt ? *hooks->opt : local_opt;
    if (!opt.initialized()) opt.init(net.params());
    const int64_t start_iter = hooks ? hooks->start_iter : 0;

    PretrainResult out;
    out.heldout_first = heldout_loss();

    int batch = std::max(1, std::min<int>(cfg.batch_size, int(train_idx.size())));
    double running = 0.0;
    int running_n = 0;
    for (int64_t iter = start_iter; iter < cfg.pretrain_iters; ++iter) {
        Rng rit = root.fork("iter", uint64_t(iter));
        double batch_loss = 0.0;
        for (int bi = 0; bi < batch; ++bi) {
            int idx = train_idx[rit.uniform_int(int(train_idx.size()))];
            const auto& info = corpus.manifest.samples[idx];
            int tau = rit.uniform_int(n_sched);
            Mat eps(3, npx);
            rit.fill_normal(eps.data(), size_t(eps.size()));
            bool drop_class = rit.bernoulli(cfg.cond_dropout);
            bool drop_edge = rit.bernoulli(cfg.cond_dropout);

            Mat xt = add_noise(corpus.images[idx].px, sched.alpha_bar(tau), eps);
            Mat pred = net.forward(xt, h, w, drop_edge ? nullptr : &edges[idx], tau,
                                   drop_class ? -1 : info.primary, nullptr);
            Mat diff = pred - eps;
            batch_loss += diff.squaredNorm() / double(diff.size());
            Mat dpred = diff * (2.0 / (double(diff.size()) * batch));
            net.backward(dpred);
        }
        opt.step(net.params(), cfg.lr);
        net.params().zero_grad();

        running += batch_loss / batch;
        ++running_n;
        if ((iter + 1) % cfg.log_every == 0 || iter + 1 == cfg.pretrain_iters) {
            json rec{{"iter", iter + 1},
                     {"train_loss", running / running_n},
                     {"heldout_loss", heldout_loss()}};
            out.curve.push_back(rec);
            if (log) log(rec);
            running = 0.0;
            running_n = 0;
        }
        if (hooks && hooks->snapshot && hooks->snapshot_every > 0 &&
            (iter + 1) % hooks->snapshot_every == 0 && iter + 1 < cfg.pretrain_iters)
            hooks->snapshot(iter + 1);
    }
    out.heldout_last = heldout_loss();
    out.iters = cfg.pretrain_iters - start_iter;
    return out;
}

}  // namespace dreampast
