#include "scenario/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace dreampast {

CorpusStyle style_from_string(const std::string& s) {
    if (s == "pretrain") return CorpusStyle::pretrain;
    if (s == "downstream") return CorpusStyle::downstream;
    throw UsageError("unknown corpus style '" + s + "' (expected pretrain|downstream)");
}

std::string style_to_string(CorpusStyle s) {
    return s == CorpusStyle::pretrain ? "pretrain" : "downstream";
}

CorpusConfig CorpusConfig::from_json(const json& j) {
    CorpusConfig c;
    c.num_classes = j.value("num_classes", c.num_classes);
    c.images_per_class = j.value("images_per_class", c.images_per_class);
    if (j.contains("image_size")) {
        c.height = j["image_size"].at(0).get<int>();
        c.width = j["image_size"].at(1).get<int>();
    }
    if (j.contains("style")) c.style = style_from_string(j["style"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    return c;
}

json CorpusConfig::to_json() const {
    return json{{"num_classes", num_classes},
                {"images_per_class", images_per_class},
                {"image_size", {height, width}},
                {"style", style_to_string(style)},
                {"seed", seed}};
}

void CorpusConfig::validate() const {
    if (num_classes < 1 || num_classes > kShapeVocabularySize)
        throw UsageError("num_classes must be in [1," + std::to_string(kShapeVocabularySize) +
                         "] (size of the shape vocabulary)");
    if (images_per_class < 1) throw UsageError("images_per_class must be >= 1");
    if (height < 16 || width < 16) throw UsageError("image size too small");
}

json CorpusManifest::to_json() const {
    json samp = json::array();
    for (const auto& s : samples)
        samp.push_back(json{{"id", s.id},
                            {"image", s.image_rel},
                            {"mask", s.mask_rel},
                            {"primary", s.primary},
                            {"classes", s.classes}});
    return json{{"format_version", format_version},
                {"config", config.to_json()},
                {"class_names", class_names},
                {"samples", samp}};
}

CorpusManifest CorpusManifest::from_json(const json& j) {
    CorpusManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) throw RuntimeError("unsupported corpus format version");
    m.config = CorpusConfig::from_json(j.at("config"));
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
        CorpusSampleInfo info;
        info.id = s.at("id").get<std::string>();
        info.image_rel = s.at("image").get<std::string>();
        info.mask_rel = s.at("mask").get<std::string>();
        info.primary = s.at("primary").get<int>();
        info.classes = s.at("classes").get<std::vector<int>>();
        m.samples.push_back(std::move(info));
    }
    return m;
}

namespace {

struct Palette {
    double bg_hue_lo, bg_hue_hi, bg_sat_lo, bg_sat_hi, bg_val_lo, bg_val_hi;
    double fg_hue_lo, fg_hue_hi;
    double grad_amp, noise_amp;
};

// the two styles live in disjoint hue ranges for both background and fill
Palette palette_for(CorpusStyle s) {
    if (s == CorpusStyle::pretrain)
        return {0.52, 0.70, 0.25, 0.50, 0.30, 0.55, 0.25, 0.45, 0.12, 0.03};
    return {0.05, 0.16, 0.35, 0.65, 0.55, 0.85, 0.78, 0.98, 0.05, 0.10};
}

void paint_background(Image& img, const Palette& pal, Rng& r) {
    Rgb base = hsv_to_rgb(r.uniform(pal.bg_hue_lo, pal.bg_hue_hi),
                          r.uniform(pal.bg_sat_lo, pal.bg_sat_hi),
                          r.uniform(pal.bg_val_lo, pal.bg_val_hi));
    double gx = r.uniform(-1.0, 1.0), gy = r.uniform(-1.0, 1.0);
    double norm = std::max(1e-9, std::sqrt(gx * gx + gy * gy));
    gx /= norm, gy /= norm;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double u = (double(x) / img.w - 0.5) * gx + (double(y) / img.h - 0.5) * gy;
            double g = pal.grad_amp * u;
            double n = pal.noise_amp * (r.uniform() - 0.5) * 2.0;
            img.at(0, y, x) = std::clamp(base.r + g + n, 0.0, 1.0);
            img.at(1, y, x) = std::clamp(base.g + g + n, 0.0, 1.0);
            img.at(2, y, x) = std::clamp(base.b + g + n, 0.0, 1.0);
        }
    }
}

void render_sample(const CorpusConfig& cfg, int primary, int j, Image& img, Mask& mask) {
    Rng r = Rng(cfg.seed).fork("image", uint64_t(primary), uint64_t(j));
    Palette pal = palette_for(cfg.style);
    img = Image(cfg.height, cfg.width);
    mask = Mask(cfg.height, cfg.width, 0);
    paint_background(img, pal, r);

    // 0-2 extra shapes first, primary drawn last so it always stays visible
    int n_extra = r.uniform_int(3);
    std::vector<int> order;
    for (int e = 0; e < n_extra; ++e) order.push_back(1 + r.uniform_int(cfg.num_classes));
    order.push_back(primary);

    double dim = std::min(cfg.height, cfg.width);
    for (int cls : order) {
        ShapeInstance inst;
        inst.kind = shape_kind(cls);
        inst.cx = r.uniform(0.25, 0.75) * cfg.width;
        inst.cy = r.uniform(0.25, 0.75) * cfg.height;
        inst.r = r.uniform(0.14, 0.26) * dim;
        inst.theta = r.uniform(0.0, 2.0 * M_PI);
        Rgb fill = hsv_to_rgb(r.uniform(pal.fg_hue_lo, pal.fg_hue_hi),
                              r.uniform(0.55, 0.90), r.uniform(0.70, 1.00));
        draw_shape(img, mask, inst, cls, fill);
    }
}

}  // namespace

void generate_corpus(const CorpusConfig& cfg, const fs::path& out_dir, bool force) {
    cfg.validate();
    fs::path manifest_path = out_dir / "manifest.json";
    if (fs::exists(manifest_path) && !force)
        throw RuntimeError("corpus already exists at " + out_dir.string() +
                           " (use force to overwrite)");
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");

    CorpusManifest m;
    m.config = cfg;
    m.class_names.push_back("background");  // index = class id
    for (int c = 1; c <= cfg.num_classes; ++c) m.class_names.push_back(shape_name(c));

    char buf[64];
    for (int c = 1; c <= cfg.num_classes; ++c) {
        for (int j = 0; j < cfg.images_per_class; ++j) {
            Image img;
            Mask mask;
            render_sample(cfg, c, j, img, mask);

            CorpusSampleInfo info;
            std::snprintf(buf, sizeof(buf), "img_%02d_%03d", c, j);
            info.id = buf;
            info.image_rel = "images/" + info.id + ".png";
            info.mask_rel = "masks/" + info.id + ".png";
            info.primary = c;
            std::set<int> present(mask.v.begin(), mask.v.end());
            present.erase(0);
            info.classes.assign(present.begin(), present.end());

            write_png_rgb(out_dir / info.image_rel, img);
            write_png_mask(out_dir / info.mask_rel, mask);
            m.samples.push_back(std::move(info));
        }
    }
    // manifest last: its presence marks a complete corpus
    save_json(manifest_path, m.to_json());
}

Corpus load_corpus(const fs::path& dir) {
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path))
        throw RuntimeError("no corpus manifest at " + manifest_path.string());
    Corpus c;
    c.dir = dir;
    c.manifest = CorpusManifest::from_json(load_json(manifest_path));
    c.images.reserve(c.manifest.samples.size());
    c.masks.reserve(c.manifest.samples.size());
    for (const auto& s : c.manifest.samples) {
        c.images.push_back(read_png_rgb(dir / s.image_rel));
        c.masks.push_back(read_png_mask(dir / s.mask_rel));
        const Image& img = c.images.back();
        if (img.h != c.manifest.config.height || img.w != c.manifest.config.width)
            throw RuntimeError("corpus image size mismatch: " + s.id);
    }
    return c;
}

ScenarioSpec ScenarioSpec::from_json(const json& j) {
    ScenarioSpec s;
    s.n_base = j.value("n_base", s.n_base);
    s.per_step = j.value("per_step", s.per_step);
    s.steps = j.value("steps", s.steps);
    if (j.contains("order")) s.order = j["order"].get<std::vector<int>>();
    return s;
}

json ScenarioSpec::to_json() const {
    json j{{"n_base", n_base}, {"per_step", per_step}, {"steps", steps}};
    if (!order.empty()) j["order"] = order;
    return j;
}

void ScenarioSpec::validate(int available_classes) const {
    if (n_base < 1 || per_step < 1 || steps < 1)
        throw UsageError("scenario needs n_base >= 1, per_step >= 1, steps >= 1");
    if (total_classes() > available_classes)
        throw UsageError("scenario needs " + std::to_string(total_classes()) +
                         " classes but corpus has " + std::to_string(available_classes));
    if (!order.empty()) {
        if (int(order.size()) < total_classes())
            throw UsageError("scenario order shorter than total class count");
        std::set<int> seen;
        for (int c : order) {
            if (c < 1 || c > available_classes) throw UsageError("scenario order has bad class id");
            if (!seen.insert(c).second) throw UsageError("scenario order has duplicate class id");
        }
    }
}

std::vector<int> ScenarioSpec::classes_at(int t) const {
    if (t < 1 || t > steps) throw RuntimeError("scenario step out of range");
    auto id = [&](int i) { return order.empty() ? i + 1 : order[i]; };
    std::vector<int> out;
    if (t == 1) {
        for (int i = 0; i < n_base; ++i) out.push_back(id(i));
    } else {
        int begin = n_base + (t - 2) * per_step;
        for (int i = begin; i < begin + per_step; ++i) out.push_back(id(i));
    }
    return out;
}

std::vector<int> ScenarioSpec::cum_classes(int t) const {
    std::vector<int> out;
    for (int s = 1; s <= t; ++s) {
        auto cs = classes_at(s);
        out.insert(out.end(), cs.begin(), cs.end());
    }
    return out;
}

SplitIndices split_corpus(const CorpusManifest& m, double val_fraction) {
    if (val_fraction <= 0.0 || val_fraction > 0.5)
        throw UsageError("val_fraction must be in (0, 0.5]");
    int k = int(std::lround(1.0 / val_fraction));
    if (m.config.images_per_class < k)
        throw UsageError("images_per_class too small for the validation split");
    SplitIndices out;
    std::map<int, int> seen;  // running count per primary class
    for (int i = 0; i < int(m.samples.size()); ++i) {
        int j = seen[m.samples[i].primary]++;
        if (j % k == k - 1)
            out.val.push_back(i);
        else
            out.train.push_back(i);
    }
    return out;
}

Mask relabel_mask(const Mask& m, const std::vector<int>& keep) {
    std::set<int> keepset(keep.begin(), keep.end());
    Mask out(m.h, m.w, 0);
    for (size_t i = 0; i < m.v.size(); ++i)
        if (keepset.count(m.v[i])) out.v[i] = m.v[i];
    return out;
}

StepDataset build_step_dataset(const Corpus& corpus, const std::vector<int>& candidates,
                               const std::vector<int>& step_classes) {
    std::set<int> want(step_classes.begin(), step_classes.end());
    StepDataset out;
    for (int idx : candidates) {
        const auto& info = corpus.manifest.samples[idx];
        bool hit = std::any_of(info.classes.begin(), info.classes.end(),
                               [&](int c) { return want.count(c) > 0; });
        if (!hit) continue;
        out.indices.push_back(idx);
        out.masks.push_back(relabel_mask(corpus.masks[idx], step_classes));
    }
    return out;
}

void ChannelMeanHist::add(const Image& img) {
    for (int c = 0; c < 3; ++c) {
        double mean = img.px.row(c).mean();
        int b = std::clamp(int(mean * 16.0), 0, 15);
        bins[c][b] += 1.0;
    }
    ++count;
}

void ChannelMeanHist::normalize() {
    if (!count) return;
    for (auto& ch : bins)
        for (auto& b : ch) b /= count;
}

double hist_l1(const ChannelMeanHist& a, const ChannelMeanHist& b) {
    double d = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) d += std::abs(a.bins[c][i] - b.bins[c][i]);
    return d;
}

}  // namespace dreampast
