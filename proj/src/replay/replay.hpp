#ifndef DREAMPAST_REPLAY_HPP
#define DREAMPAST_REPLAY_HPP

#include <map>

#include "diffusion/diffusion.hpp"
#include "edge/canny.hpp"
#include "inversion/inversion.hpp"
#include "nn/segnet.hpp"

namespace dreampast {

// Directory-backed memory of everything the pipeline may keep about past
// steps: per-class edge maps and step masks (never raw images), class
// prompts, and the learned token table. Updates are idempotent per step,
// which makes resumed runs safe.
class KnowledgeStore {
  public:
    struct Entry {
        std::string source_id;
        std::string edge_rel, mask_rel;
    };

    explicit KnowledgeStore(fs::path dir);

    // register edges + masks + prompts for every image of the step dataset
    void update(const Corpus& corpus, const StepDataset& ds,
                const std::vector<int>& step_classes, const CannyParams& canny_params,
                int step);
    bool step_recorded(int step) const;

    bool has_class(int class_id) const { return classes_.count(class_id) > 0; }
    std::vector<int> class_ids() const;
    const std::string& class_name(int class_id) const;
    const std::vector<Entry>& entries(int class_id) const;

    EdgeMap load_edge(const Entry& e) const { return read_png_edge(dir_ / e.edge_rel); }
    Mask load_mask(const Entry& e) const { return read_png_mask(dir_ / e.mask_rel); }

    TokenTable& tokens() { return tokens_; }
    const TokenTable& tokens() const { return tokens_; }
    void set_token(int class_id, Vec token, int step) {
        tokens_.set(class_id, std::move(token), step);
    }

    void save();
    const fs::path& dir() const { return dir_; }

  private:
    struct ClassRec {
        std::string name;
        int first_step = 0;
        std::vector<Entry> entries;
    };

    fs::path dir_;
    json canny_ = nullptr;  // pinned on first update
    std::vector<int> recorded_steps_;
    std::map<int, ClassRec> classes_;
    TokenTable tokens_;
};

// generator composition for the replay set
enum class ReplayMode { full, sdr_only, ddr_only, prompt_only };

struct ReplayCfg {
    int total = 100;
    double ddr_ratio = 0.8;
    double strength = 0.6;
    double conf_threshold = 0.7;
    int sampler_steps = 50;

    static ReplayCfg from_json(const json& j);
    json to_json() const;
};

// even split of the budget across classes; the remainder goes to the
// earliest-learned classes
std::vector<int> replay_quota(int total, int n_classes);

struct ReplaySample {
    Image img;
    Mask mask;            // class-id labels
    int class_id = 0;     // the class this sample was generated for
    std::string origin;   // "sdr" | "ddr" | "prompt"
};

// Generate the step-t replay set for the old classes (in learning order).
//  - SDR: edge-conditioned samples with the base class embedding; the
//    stored mask is reused verbatim.
//  - DDR: prompt-only sample, partially re-noised at `strength`, then
//    denoised under the learned token; labeled by the old segmenter with
//    low-confidence pixels mapped to background.
//  - prompt_only: the DDR pipeline without noising/token (ablation).
// `channel_to_class` maps old-model channels to class ids (index 0 = bg).
std::vector<ReplaySample> build_replay_set(const KnowledgeStore& store, UNet& denoiser,
                                           const Schedule& sched, SegNet& old_seg,
                                           const std::vector<int>& old_class_order,
                                           const std::vector<int>& channel_to_class,
                                           ReplayMode mode, const ReplayCfg& cfg, int h,
                                           int w, uint64_t seed);

// Real-image memory backing the exemplar_memory baseline. Kept separate
// from the knowledge store so that one retains its no-raw-images
// property. Same idempotent-per-step update discipline.
class ExemplarStore {
  public:
    explicit ExemplarStore(fs::path dir);

    void update(const Corpus& corpus, const StepDataset& ds,
                const std::vector<int>& step_classes, int step);
    bool step_recorded(int step) const;
    bool has_class(int class_id) const { return classes_.count(class_id) > 0; }

    // budget-limited draw over the stored exemplars, mirroring the replay
    // quota rules; origin = "exemplar"
    std::vector<ReplaySample> sample(const std::vector<int>& old_class_order, int total,
                                     uint64_t seed) const;

  private:
    struct Entry {
        std::string source_id, image_rel, mask_rel;
    };

    void save();

    fs::path dir_;
    std::vector<int> recorded_steps_;
    std::map<int, std::vector<Entry>> classes_;
};

}  // namespace dreampast

#endif
