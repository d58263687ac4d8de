#ifndef DREAMPAST_SCENARIO_HPP
#define DREAMPAST_SCENARIO_HPP

#include <array>
#include <string>
#include <vector>

#include "image/draw.hpp"
#include "image/image.hpp"
#include "util/jsonio.hpp"
#include "util/rng.hpp"

namespace dreampast {

// Two visually disjoint rendering styles. "pretrain" images feed the
// denoiser's pretraining; "downstream" images form the incremental
// task. Background and fill palettes do not overlap between the two,
// which is what makes distribution-shift measurements meaningful.
enum class CorpusStyle { pretrain, downstream };

CorpusStyle style_from_string(const std::string& s);  // UsageError on unknown style
std::string style_to_string(CorpusStyle s);

struct CorpusConfig {
    int num_classes = 8;        // uses class ids 1..num_classes of the shape vocabulary
    int images_per_class = 25;
    int height = 64, width = 64;
    CorpusStyle style = CorpusStyle::pretrain;
    uint64_t seed = 0;

    static CorpusConfig from_json(const json& j);
    json to_json() const;
    void validate() const;
};

struct CorpusSampleInfo {
    std::string id;
    std::string image_rel, mask_rel;  // paths relative to the corpus dir
    int primary = 0;                  // the class this image was generated for
    std::vector<int> classes;         // class ids present in the final mask
};

struct CorpusManifest {
    int format_version = 1;
    CorpusConfig config;
    std::vector<std::string> class_names;
    std::vector<CorpusSampleInfo> samples;

    json to_json() const;
    static CorpusManifest from_json(const json& j);
};

// Render the corpus to out_dir (images/, masks/, manifest.json). Refuses
// to overwrite an existing corpus unless force is set. Fully seeded:
// identical config+seed produce byte-identical trees.
void generate_corpus(const CorpusConfig& cfg, const fs::path& out_dir, bool force = false);

// corpus with pixels loaded
struct Corpus {
    fs::path dir;
    CorpusManifest manifest;
    std::vector<Image> images;
    std::vector<Mask> masks;

    int height() const { return manifest.config.height; }
    int width() const { return manifest.config.width; }
    size_t size() const { return manifest.samples.size(); }
};

Corpus load_corpus(const fs::path& dir);

// class-incremental protocol: n_base classes at step 1, then per_step new
// classes for each of the remaining steps, following `order`
struct ScenarioSpec {
    int n_base = 15;
    int per_step = 1;
    int steps = 6;
    std::vector<int> order;  // class ids in learning order; default 1..n

    static ScenarioSpec from_json(const json& j);
    json to_json() const;
    void validate(int available_classes) const;

    int total_classes() const { return n_base + per_step * (steps - 1); }
    std::vector<int> classes_at(int t) const;   // C_t, t in [1, steps]
    std::vector<int> cum_classes(int t) const;  // C_{1:t}
};

// deterministic per-class holdout: every k-th image of each class goes to
// validation, k = round(1/val_fraction)
struct SplitIndices {
    std::vector<int> train, val;
};
SplitIndices split_corpus(const CorpusManifest& m, double val_fraction);

// keep labels in `keep`, relabel everything else to background (0)
Mask relabel_mask(const Mask& m, const std::vector<int>& keep);

// overlapped-setting slice: an image belongs to step t iff its original
// mask contains at least one pixel of a step-t class; its mask is
// relabeled so only step-t classes survive
struct StepDataset {
    std::vector<int> indices;  // into the corpus
    std::vector<Mask> masks;   // relabeled, aligned with indices
};
StepDataset build_step_dataset(const Corpus& corpus, const std::vector<int>& candidates,
                               const std::vector<int>& step_classes);

// 16-bin histogram of per-image channel means; the style fingerprint used
// by corpus tests and replay distribution audits
struct ChannelMeanHist {
    std::array<std::array<double, 16>, 3> bins{};
    int count = 0;

    void add(const Image& img);
    void normalize();
};
double hist_l1(const ChannelMeanHist& a, const ChannelMeanHist& b);

}  // namespace dreampast

#endif
