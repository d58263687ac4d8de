#include "segmenter/train.hpp"

#include <unordered_map>

#include "util/common.hpp"

namespace dreampast {

SegTrainHyper SegTrainHyper::from_json(const json& j) {
    SegTrainHyper h;
    h.base_lr = j.value("base_lr", h.base_lr);
    h.incr_lr = j.value("incr_lr", h.incr_lr);
    h.momentum = j.value("momentum", h.momentum);
    h.poly_power = j.value("poly_power", h.poly_power);
    h.epochs = j.value("epochs", h.epochs);
    h.batch = j.value("batch", h.batch);
    h.log_every = j.value("log_every", h.log_every);
    if (j.contains("net")) h.net = SegNetConfig::from_json(j["net"]);
    return h;
}

json SegTrainHyper::to_json() const {
    return json{{"base_lr", base_lr},       {"incr_lr", incr_lr},
                {"momentum", momentum},     {"poly_power", poly_power},
                {"epochs", epochs},         {"batch", batch},
                {"log_every", log_every},   {"net", net.to_json()}};
}

Mat flip_image(const Mat& px, int h, int w) {
    Mat out(px.rows(), px.cols());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.col(size_t(y) * w + x) = px.col(size_t(y) * w + (w - 1 - x));
    return out;
}

Mask flip_mask(const Mask& m) {
    Mask out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) out.at(y, x) = m.at(y, m.w - 1 - x);
    return out;
}

namespace {

// frozen-model outputs for one (pool item, flip) pair
struct OldCacheEntry {
    Mat logits;
    PseudoLabels pseudo;
};

}  // namespace

SegTrainResult train_segmenter(SegNet& model, SegNet* old_model,
                               const std::vector<TrainPoolItem>& pool, int h, int w,
                               double lr, const SegTrainHyper& hp, const LossConfig& loss_cfg,
                               uint64_t seed,
                               const std::function<void(const json&)>& log) {
    if (pool.empty()) throw RuntimeError("training pool is empty");
    size_t npx = size_t(h) * w;
    int k_new = model.num_classes();
    int k_old = old_model ? old_model->num_classes() : 0;

    int batch = std::max(1, std::min<int>(hp.batch, int(pool.size())));
    int64_t iters = int64_t(hp.epochs) * ((int64_t(pool.size()) + batch - 1) / batch);

    Sgd opt;
    opt.momentum = hp.momentum;
    opt.init(model.params());
    Rng root = Rng(seed).fork("segtrain");

    std::unordered_map<int64_t, OldCacheEntry> old_cache;
    auto old_outputs = [&](int idx, bool flip, const Mat& x,
                           const std::vector<uint8_t>& bg) -> const OldCacheEntry& {
        int64_t key = int64_t(idx) * 2 + (flip ? 1 : 0);
        auto it = old_cache.find(key);
        if (it != old_cache.end()) return it->second;
        OldCacheEntry e;
        e.logits = old_model->forward(x, h, w);
        e.pseudo = pseudo_label(e.logits, bg, loss_cfg.conf_threshold);
        return old_cache.emplace(key, std::move(e)).first->second;
    };

    SegTrainResult res;
    res.iters = iters;
    double acc_ce = 0, acc_ali = 0, acc_kd = 0;
    int acc_n = 0;

    for (int64_t iter = 0; iter < iters; ++iter) {
        Rng rit = root.fork("iter", uint64_t(iter));
        double b_ce = 0, b_ali = 0, b_kd = 0;
        for (int bi = 0; bi < batch; ++bi) {
            int idx = rit.uniform_int(int(pool.size()));
            bool flip = rit.bernoulli(0.5);
            const TrainPoolItem& item = pool[idx];
            ++res.draws;
            if (item.replay) ++res.replay_draws;

            Mat x = flip ? flip_image(item.img->px, h, w) : item.img->px;
            Mask y = flip ? flip_mask(item.mask_ch) : item.mask_ch;

            std::vector<uint8_t> bg(npx), a_new(npx);
            for (size_t j = 0; j < npx; ++j) {
                bg[j] = y.v[j] == 0;
                a_new[j] = y.v[j] != 0;
            }

            Mat logits = model.forward(x, h, w);
            Mat dlogits = Mat::Zero(k_new, npx);

            if (!old_model) {
                // base step: plain cross-entropy over every pixel
                std::vector<uint8_t> all(npx, 1);
                std::vector<int32_t> target(y.v.begin(), y.v.end());
                b_ce += loss_ce(logits, target, all, &dlogits,
                                loss_cfg.lambda_ce / batch);
            } else {
                const OldCacheEntry& oc = old_outputs(idx, flip, x, bg);

                std::vector<int32_t> target(y.v.begin(), y.v.end());
                std::vector<uint8_t> area_ce = a_new;
                std::vector<uint8_t> a_b = bg;
                if (loss_cfg.use_pseudo_labels) {
                    for (size_t j = 0; j < npx; ++j) {
                        if (oc.pseudo.a_old[j]) {
                            area_ce[j] = 1;
                            a_b[j] = 0;
                            target[j] = oc.pseudo.label[j];
                        }
                    }
                }
                if (loss_cfg.lambda_ce != 0.0)
                    b_ce += loss_ce(logits, target, area_ce, &dlogits,
                                    loss_cfg.lambda_ce / batch);
                if (loss_cfg.lambda_ali != 0.0)
                    b_ali += loss_ali(logits, oc.logits, a_b, k_old, &dlogits,
                                      loss_cfg.lambda_ali / batch);
                if (loss_cfg.lambda_kd != 0.0)
                    b_kd += loss_kd(logits, oc.logits, k_old, &dlogits,
                                    loss_cfg.lambda_kd / batch);
            }
            model.backward(dlogits);
        }
        opt.step(model.params(), poly_lr(lr, iter, iters, hp.poly_power));
        model.params().zero_grad();

        acc_ce += b_ce / batch;
        acc_ali += b_ali / batch;
        acc_kd += b_kd / batch;
        ++acc_n;
        res.final_loss = (loss_cfg.lambda_ce * b_ce + loss_cfg.lambda_ali * b_ali +
                          loss_cfg.lambda_kd * b_kd) /
                         batch;
        if (log && ((iter + 1) % hp.log_every == 0 || iter + 1 == iters)) {
            log(json{{"iter", iter + 1},
                     {"iters", iters},
                     {"lr", poly_lr(lr, iter, iters, hp.poly_power)},
                     {"loss_ce", acc_ce / acc_n},
                     {"loss_ali", acc_ali / acc_n},
                     {"loss_kd", acc_kd / acc_n}});
            acc_ce = acc_ali = acc_kd = 0;
            acc_n = 0;
        }
    }
    return res;
}

}  // namespace dreampast
