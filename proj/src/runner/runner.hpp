#ifndef DREAMPAST_RUNNER_HPP
#define DREAMPAST_RUNNER_HPP

#include <optional>

#include "metrics/metrics.hpp"
#include "runner/config.hpp"

namespace dreampast {

// channel layout of the segmenter head: channel 0 = background, then the
// classes in learning order
struct LabelMap {
    std::vector<int> channel_to_class;
    std::map<int, int> class_to_channel;

    static LabelMap from_order(const std::vector<int>& class_order);
    int channels() const { return int(channel_to_class.size()); }
    Mask to_channels(const Mask& class_mask) const;  // class-id labels -> channel labels
};

// render one corpus from the config; returns the directory written
fs::path cmd_gen_corpus(const RunConfig& cfg, CorpusStyle style, fs::path out_dir,
                        std::optional<uint64_t> seed_override, bool force);

// pretrain (or resume pretraining) the denoiser; writes denoiser.ckpt,
// pretrain_state.ckpt and pretrain_log.json under run_dir, returns the
// summary JSON
json cmd_pretrain(const RunConfig& cfg, const fs::path& run_dir, bool resume);

struct RunResult {
    fs::path run_dir;
    std::vector<MetricsRecord> records;  // one per step
    int steps_executed = 0;              // freshly computed (not resumed)

    json to_json() const;
};

// the full incremental protocol; resumable at step boundaries
RunResult cmd_run(const RunConfig& cfg, const fs::path& run_dir, bool resume);

// evaluate checkpoints against the cumulative validation split their
// class layout implies; several checkpoints aggregate to mean/std
json cmd_eval(const RunConfig& cfg, const std::vector<fs::path>& checkpoints);

// evaluation core: confusion over a set of (image, channel-space mask) pairs
ConfusionMatrix evaluate(SegNet& model, const std::vector<const Image*>& images,
                         const std::vector<Mask>& masks_ch);

// corpus slice for evaluation: labels restricted to keep_classes, then
// mapped into channel space
std::pair<std::vector<const Image*>, std::vector<Mask>> build_eval_set(
    const Corpus& corpus, const std::vector<int>& indices,
    const std::vector<int>& keep_classes, const LabelMap& lm);

// scan one run dir (or a directory of run dirs) and emit CSV tables +
// raster plots into out_dir (default: <dir>/report); returns a summary
json cmd_report(const fs::path& dir, fs::path out_dir);

}  // namespace dreampast

#endif
