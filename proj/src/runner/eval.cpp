#include <algorithm>
#include <cmath>

#include "runner/runner.hpp"
#include "util/common.hpp"

namespace dreampast {

ConfusionMatrix evaluate(SegNet& model, const std::vector<const Image*>& images,
                         const std::vector<Mask>& masks_ch) {
    if (images.size() != masks_ch.size()) throw RuntimeError("evaluate: image/mask count mismatch");
    const int k = model.num_classes();
    ConfusionMatrix cm(k);
    for (size_t i = 0; i < images.size(); ++i) {
        const Image& img = *images[i];
        const Mask& gt = masks_ch[i];
        if (gt.h != img.h || gt.w != img.w) throw RuntimeError("evaluate: mask size mismatch");
        const Mat logits = model.forward(img.px, img.h, img.w);
        for (Eigen::Index p = 0; p < logits.cols(); ++p) {
            int pred = 0;
            for (int c = 1; c < k; ++c)
                if (logits(c, p) > logits(pred, p)) pred = c;
            const int32_t g = gt.v[size_t(p)];
            if (g < 0 || g >= k)
                throw RuntimeError("evaluate: label " + std::to_string(g) +
                                   " outside the model's " + std::to_string(k) + " channels");
            cm.add(g, pred);
        }
    }
    return cm;
}

std::pair<std::vector<const Image*>, std::vector<Mask>> build_eval_set(
    const Corpus& corpus, const std::vector<int>& indices,
    const std::vector<int>& keep_classes, const LabelMap& lm) {
    std::vector<const Image*> images;
    std::vector<Mask> masks;
    images.reserve(indices.size());
    masks.reserve(indices.size());
    for (int idx : indices) {
        images.push_back(&corpus.images[size_t(idx)]);
        masks.push_back(lm.to_channels(relabel_mask(corpus.masks[size_t(idx)], keep_classes)));
    }
    return {std::move(images), std::move(masks)};
}

namespace {

void accumulate_stat(json& agg, const std::string& key, const std::vector<double>& vals) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= double(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    const double std_dev = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
    agg[key] = {{"mean", mean}, {"std", std_dev}};
}

}  // namespace

json cmd_eval(const RunConfig& cfg, const std::vector<fs::path>& checkpoints) {
    if (checkpoints.empty()) throw UsageError("eval needs at least one checkpoint");
    cfg.validate();
    const Corpus corpus = load_corpus(cfg.paths.downstream_corpus);
    const SplitIndices split = split_corpus(corpus.manifest, cfg.val_fraction);

    json records = json::array();
    std::vector<double> base_v, novel_v, all_v, hiou_v;
    for (const fs::path& p : checkpoints) {
        json meta;
        auto model = SegNet::load(p, &meta);
        if (!meta.contains("class_ids"))
            throw RuntimeError(p.string() + " carries no class layout; reevaluate from a run");
        const std::vector<int> channel_to_class = meta.at("class_ids").get<std::vector<int>>();
        if (int(channel_to_class.size()) != model->num_classes())
            throw RuntimeError(p.string() + ": class layout lists " +
                               std::to_string(channel_to_class.size()) + " channels but the model has " +
                               std::to_string(model->num_classes()));
        const int max_id = *std::max_element(channel_to_class.begin(), channel_to_class.end());
        if (max_id > corpus.manifest.config.num_classes)
            throw RuntimeError("checkpoint covers " + std::to_string(model->num_classes()) +
                               " channels (class ids up to " + std::to_string(max_id) +
                               ") but the dataset provides only " +
                               std::to_string(corpus.manifest.config.num_classes) + " classes");

        const std::vector<int> cum(channel_to_class.begin() + 1, channel_to_class.end());
        const LabelMap lm = LabelMap::from_order(cum);
        auto [images, masks] = build_eval_set(corpus, split.val, cum, lm);
        const ConfusionMatrix cm = evaluate(*model, images, masks);

        const int n_base = meta.value("n_base", int(cum.size()));
        std::vector<int> base_ch, novel_ch;
        for (int ch = 1; ch < lm.channels(); ++ch)
            (ch <= n_base ? base_ch : novel_ch).push_back(ch);
        const int step = meta.value("step", 0);
        const MetricsRecord rec = make_record(step, cm, lm.channel_to_class, base_ch, novel_ch);

        json jr = rec.to_json();
        jr["checkpoint"] = p.string();
        records.push_back(jr);
        base_v.push_back(rec.miou_base);
        novel_v.push_back(rec.miou_novel);
        all_v.push_back(rec.miou_all);
        hiou_v.push_back(rec.hiou);
    }

    json out{{"records", records}};
    if (checkpoints.size() > 1) {
        json agg{{"n", checkpoints.size()}};
        accumulate_stat(agg, "miou_base", base_v);
        accumulate_stat(agg, "miou_novel", novel_v);
        accumulate_stat(agg, "miou_all", all_v);
        accumulate_stat(agg, "hiou", hiou_v);
        out["aggregate"] = agg;
    }
    return out;
}

}  // namespace dreampast
