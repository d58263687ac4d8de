#include "replay/replay.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "util/common.hpp"

namespace dreampast {

namespace {
constexpr int kStoreVersion = 1;
}

KnowledgeStore::KnowledgeStore(fs::path dir) : dir_(std::move(dir)) {
    const fs::path mf = dir_ / "manifest.json";
    if (!fs::exists(mf)) return;
    json j = load_json(mf);
    if (j.value("format_version", 0) != kStoreVersion)
        throw RuntimeError("knowledge store " + dir_.string() + ": unsupported format_version");
    canny_ = j.value("canny", json(nullptr));
    recorded_steps_ = j.value("steps", std::vector<int>{});
    for (const auto& [key, rec] : j.at("classes").items()) {
        ClassRec cr;
        cr.name = rec.at("name").get<std::string>();
        cr.first_step = rec.at("first_step").get<int>();
        for (const auto& e : rec.at("entries"))
            cr.entries.push_back({e.at("source_id").get<std::string>(),
                                  e.at("edge").get<std::string>(),
                                  e.at("mask").get<std::string>()});
        classes_[std::stoi(key)] = std::move(cr);
    }
    const fs::path tp = dir_ / "tokens.tbl";
    if (fs::exists(tp)) tokens_ = TokenTable::load(tp);
}

bool KnowledgeStore::step_recorded(int step) const {
    return std::find(recorded_steps_.begin(), recorded_steps_.end(), step) !=
           recorded_steps_.end();
}

std::vector<int> KnowledgeStore::class_ids() const {
    std::vector<int> ids;
    ids.reserve(classes_.size());
    for (const auto& [id, rec] : classes_) ids.push_back(id);
    return ids;
}

const std::string& KnowledgeStore::class_name(int class_id) const {
    auto it = classes_.find(class_id);
    if (it == classes_.end())
        throw RuntimeError("knowledge store: unknown class " + std::to_string(class_id));
    return it->second.name;
}

const std::vector<KnowledgeStore::Entry>& KnowledgeStore::entries(int class_id) const {
    auto it = classes_.find(class_id);
    if (it == classes_.end())
        throw RuntimeError("knowledge store: unknown class " + std::to_string(class_id));
    return it->second.entries;
}

void KnowledgeStore::update(const Corpus& corpus, const StepDataset& ds,
                            const std::vector<int>& step_classes,
                            const CannyParams& canny_params, int step) {
    canny_params.validate();
    if (canny_.is_null()) {
        canny_ = canny_params.to_json();
    } else if (canny_ != canny_params.to_json()) {
        throw RuntimeError("knowledge store: edge parameters differ from the stored ones");
    }
    if (step_recorded(step)) return;  // resume-safe: a step registers at most once

    fs::create_directories(dir_ / "edges");
    fs::create_directories(dir_ / "masks");

    for (size_t i = 0; i < ds.indices.size(); ++i) {
        const CorpusSampleInfo& info = corpus.manifest.samples[size_t(ds.indices[i])];
        const std::string edge_rel = "edges/" + info.id + ".png";
        const std::string mask_rel = "masks/s" + std::to_string(step) + "_" + info.id + ".png";
        if (!fs::exists(dir_ / edge_rel))
            write_png_edge(dir_ / edge_rel, canny(corpus.images[size_t(ds.indices[i])], canny_params));
        write_png_mask(dir_ / mask_rel, ds.masks[i]);

        std::set<int32_t> present(ds.masks[i].v.begin(), ds.masks[i].v.end());
        for (int c : step_classes) {
            if (!present.count(c)) continue;
            ClassRec& rec = classes_[c];
            if (rec.entries.empty() && rec.name.empty()) {
                rec.name = shape_name(c);
                rec.first_step = step;
            }
            rec.entries.push_back({info.id, edge_rel, mask_rel});
        }
    }
    recorded_steps_.push_back(step);
    std::sort(recorded_steps_.begin(), recorded_steps_.end());
    save();
}

void KnowledgeStore::save() {
    fs::create_directories(dir_);
    json jc = json::object();
    for (const auto& [id, rec] : classes_) {
        json entries = json::array();
        for (const Entry& e : rec.entries)
            entries.push_back({{"source_id", e.source_id}, {"edge", e.edge_rel}, {"mask", e.mask_rel}});
        jc[std::to_string(id)] = {
            {"name", rec.name}, {"first_step", rec.first_step}, {"entries", entries}};
    }
    json j = {{"format_version", kStoreVersion},
              {"canny", canny_},
              {"steps", recorded_steps_},
              {"classes", jc}};
    save_json(dir_ / "manifest.json", j);
    if (tokens_.size() > 0) tokens_.save(dir_ / "tokens.tbl");
}

// ---- replay set -------------------------------------------------------------

ReplayCfg ReplayCfg::from_json(const json& j) {
    ReplayCfg c;
    c.total = j.value("total", c.total);
    c.ddr_ratio = j.value("ddr_ratio", c.ddr_ratio);
    c.strength = j.value("strength", c.strength);
    c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
    c.sampler_steps = j.value("sampler_steps", c.sampler_steps);
    if (c.total < 0) throw UsageError("replay.total must be >= 0");
    if (c.ddr_ratio < 0.0 || c.ddr_ratio > 1.0)
        throw UsageError("replay.ddr_ratio must be in [0, 1]");
    if (c.strength < 0.0 || c.strength > 1.0)
        throw UsageError("replay.strength must be in [0, 1]");
    return c;
}

json ReplayCfg::to_json() const {
    return {{"total", total},
            {"ddr_ratio", ddr_ratio},
            {"strength", strength},
            {"conf_threshold", conf_threshold},
            {"sampler_steps", sampler_steps}};
}

std::vector<int> replay_quota(int total, int n_classes) {
    if (n_classes <= 0) throw RuntimeError("replay_quota: no classes");
    std::vector<int> q(size_t(n_classes), total / n_classes);
    for (int i = 0; i < total % n_classes; ++i) q[size_t(i)] += 1;
    return q;
}

namespace {

Image to_image(const Mat& x, int h, int w) {
    Image img(h, w);
    img.px = x.cwiseMax(0.0).cwiseMin(1.0);
    return img;
}

// label a generated image with the frozen old segmenter; pixels whose
// best class is uncertain fall back to background
Mask pseudo_mask(SegNet& old_seg, const Image& img, const std::vector<int>& channel_to_class,
                 double conf_threshold) {
    const Mat logits = old_seg.forward(img.px, img.h, img.w);
    if (logits.rows() != Eigen::Index(channel_to_class.size()))
        throw RuntimeError("replay: channel map does not match the old segmenter");
    Mask m(img.h, img.w);
    for (int i = 0; i < logits.cols(); ++i) {
        Vec p = logits.col(i);
        const double mx = p.maxCoeff();
        p = (p.array() - mx).exp();
        p /= p.sum();
        int arg = 0;
        for (int c = 1; c < p.size(); ++c)
            if (p[c] > p[arg]) arg = c;
        m.v[size_t(i)] = (arg > 0 && p[arg] > conf_threshold)
                             ? channel_to_class[size_t(arg)]
                             : 0;
    }
    return m;
}

}  // namespace

std::vector<ReplaySample> build_replay_set(const KnowledgeStore& store, UNet& denoiser,
                                           const Schedule& sched, SegNet& old_seg,
                                           const std::vector<int>& old_class_order,
                                           const std::vector<int>& channel_to_class,
                                           ReplayMode mode, const ReplayCfg& cfg, int h,
                                           int w, uint64_t seed) {
    if (old_class_order.empty()) throw RuntimeError("replay: no old classes to replay");
    const std::vector<int> quota = replay_quota(cfg.total, int(old_class_order.size()));
    const Rng root = Rng(seed).fork("replay");

    std::vector<ReplaySample> out;
    out.reserve(size_t(cfg.total));
    for (size_t ci = 0; ci < old_class_order.size(); ++ci) {
        const int c = old_class_order[ci];
        const int n = quota[ci];
        if (n == 0) continue;

        int n_ddr = 0, n_prompt = 0;
        switch (mode) {
            case ReplayMode::full: n_ddr = int(std::lround(cfg.ddr_ratio * n)); break;
            case ReplayMode::sdr_only: n_ddr = 0; break;
            case ReplayMode::ddr_only: n_ddr = n; break;
            case ReplayMode::prompt_only: n_prompt = n; break;
        }
        const int n_sdr = n - n_ddr - n_prompt;

        if (n_sdr > 0) {
            const auto& entries = store.entries(c);
            if (entries.empty())
                throw RuntimeError("replay: no stored edges for class " + std::to_string(c));
            Rng pick = root.fork("sdr", uint64_t(c));
            const size_t start = size_t(pick.uniform_int(uint64_t(entries.size())));
            for (int k = 0; k < n_sdr; ++k) {
                const auto& e = entries[(start + size_t(k)) % entries.size()];
                const EdgeMap edge = store.load_edge(e);
                UNetEps eps(denoiser, h, w, &edge, c, nullptr);
                Rng noise = root.fork("sdr_noise", uint64_t(c), uint64_t(k));
                const Mat x = ddim_sample(eps, 3, h, w, sched, cfg.sampler_steps, noise);
                out.push_back({to_image(x, h, w), store.load_mask(e), c, "sdr"});
            }
        }

        for (int k = 0; k < n_ddr; ++k) {
            // stage 1: prompt-only draft in the source domain
            UNetEps prompt_eps(denoiser, h, w, nullptr, c, nullptr);
            Rng noise = root.fork("ddr_noise", uint64_t(c), uint64_t(k));
            const Mat draft = ddim_sample(prompt_eps, 3, h, w, sched, cfg.sampler_steps, noise);
            // stage 2: partial re-noising, denoised under the learned token
            if (!store.tokens().has(c))
                throw RuntimeError("replay: no learned token for class " + std::to_string(c));
            const Vec& token = store.tokens().get(c);
            UNetEps token_eps(denoiser, h, w, nullptr, -1, &token);
            Rng rnoise = root.fork("ddr_refine", uint64_t(c), uint64_t(k));
            const Mat refined =
                ddr_refine(token_eps, draft, cfg.strength, sched, cfg.sampler_steps, rnoise);
            Image img = to_image(refined, h, w);
            Mask m = pseudo_mask(old_seg, img, channel_to_class, cfg.conf_threshold);
            out.push_back({std::move(img), std::move(m), c, "ddr"});
        }

        for (int k = 0; k < n_prompt; ++k) {
            UNetEps prompt_eps(denoiser, h, w, nullptr, c, nullptr);
            Rng noise = root.fork("prompt_noise", uint64_t(c), uint64_t(k));
            const Mat x = ddim_sample(prompt_eps, 3, h, w, sched, cfg.sampler_steps, noise);
            Image img = to_image(x, h, w);
            Mask m = pseudo_mask(old_seg, img, channel_to_class, cfg.conf_threshold);
            out.push_back({std::move(img), std::move(m), c, "prompt"});
        }
    }

    Rng shuf = root.fork("shuffle");
    shuf.shuffle(out);
    return out;
}

// ---- exemplar memory --------------------------------------------------------

ExemplarStore::ExemplarStore(fs::path dir) : dir_(std::move(dir)) {
    const fs::path mf = dir_ / "manifest.json";
    if (!fs::exists(mf)) return;
    json j = load_json(mf);
    if (j.value("format_version", 0) != kStoreVersion)
        throw RuntimeError("exemplar store " + dir_.string() + ": unsupported format_version");
    recorded_steps_ = j.value("steps", std::vector<int>{});
    for (const auto& [key, entries] : j.at("classes").items()) {
        auto& vec = classes_[std::stoi(key)];
        for (const auto& e : entries)
            vec.push_back({e.at("source_id").get<std::string>(),
                           e.at("image").get<std::string>(),
                           e.at("mask").get<std::string>()});
    }
}

bool ExemplarStore::step_recorded(int step) const {
    return std::find(recorded_steps_.begin(), recorded_steps_.end(), step) !=
           recorded_steps_.end();
}

void ExemplarStore::update(const Corpus& corpus, const StepDataset& ds,
                           const std::vector<int>& step_classes, int step) {
    if (step_recorded(step)) return;
    fs::create_directories(dir_ / "images");
    fs::create_directories(dir_ / "masks");
    for (size_t i = 0; i < ds.indices.size(); ++i) {
        const CorpusSampleInfo& info = corpus.manifest.samples[size_t(ds.indices[i])];
        const std::string stem = "s" + std::to_string(step) + "_" + info.id + ".png";
        const std::string image_rel = "images/" + stem;
        const std::string mask_rel = "masks/" + stem;
        if (!fs::exists(dir_ / image_rel))
            write_png_rgb(dir_ / image_rel, corpus.images[size_t(ds.indices[i])]);
        write_png_mask(dir_ / mask_rel, ds.masks[i]);
        std::set<int32_t> present(ds.masks[i].v.begin(), ds.masks[i].v.end());
        for (int c : step_classes)
            if (present.count(c)) classes_[c].push_back({info.id, image_rel, mask_rel});
    }
    recorded_steps_.push_back(step);
    std::sort(recorded_steps_.begin(), recorded_steps_.end());
    save();
}

void ExemplarStore::save() {
    fs::create_directories(dir_);
    json jc = json::object();
    for (const auto& [id, entries] : classes_) {
        json je = json::array();
        for (const Entry& e : entries)
            je.push_back({{"source_id", e.source_id}, {"image", e.image_rel}, {"mask", e.mask_rel}});
        jc[std::to_string(id)] = je;
    }
    save_json(dir_ / "manifest.json",
              {{"format_version", kStoreVersion}, {"steps", recorded_steps_}, {"classes", jc}});
}

std::vector<ReplaySample> ExemplarStore::sample(const std::vector<int>& old_class_order,
                                                int total, uint64_t seed) const {
    if (old_class_order.empty()) throw RuntimeError("exemplar replay: no old classes");
    const std::vector<int> quota = replay_quota(total, int(old_class_order.size()));
    const Rng root = Rng(seed).fork("exemplar_replay");

    std::vector<ReplaySample> out;
    out.reserve(size_t(total));
    for (size_t ci = 0; ci < old_class_order.size(); ++ci) {
        const int c = old_class_order[ci];
        const int n = quota[ci];
        if (n == 0) continue;
        auto it = classes_.find(c);
        if (it == classes_.end() || it->second.empty())
            throw RuntimeError("exemplar replay: no stored exemplars for class " +
                               std::to_string(c));
        const auto& entries = it->second;
        Rng pick = root.fork("exemplar", uint64_t(c));
        const size_t start = size_t(pick.uniform_int(uint64_t(entries.size())));
        for (int k = 0; k < n; ++k) {
            const Entry& e = entries[(start + size_t(k)) % entries.size()];
            out.push_back({read_png_rgb(dir_ / e.image_rel), read_png_mask(dir_ / e.mask_rel),
                           c, "exemplar"});
        }
    }
    Rng shuf = root.fork("shuffle");
    shuf.shuffle(out);
    return out;
}

}  // namespace dreampast
