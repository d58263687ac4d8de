#ifndef DREAMPAST_CONFIG_HPP
#define DREAMPAST_CONFIG_HPP

#include "diffusion/diffusion.hpp"
#include "edge/canny.hpp"
#include "inversion/inversion.hpp"
#include "replay/replay.hpp"
#include "segmenter/train.hpp"

namespace dreampast {

// training regime for an incremental run; mirrors the ablation rows
enum class RunMode {
    full,               // edge-conditioned + domain-aligned replay
    no_replay,          // plain fine-tuning, generator never touched
    sdr_only,           // edge-conditioned source-domain replay only
    ddr_only,           // domain-aligned replay only
    prompt_only_replay, // class-prompt samples + pseudo-labels, no edge/token
    exemplar_memory,    // replay real stored exemplars instead of generations
};

RunMode run_mode_from_string(const std::string& s);  // UsageError on unknown mode
std::string run_mode_to_string(RunMode m);

struct RunPaths {
    fs::path pretrain_corpus = "corpus_pretrain";
    fs::path downstream_corpus = "corpus_downstream";
    fs::path denoiser;  // empty -> <run_dir>/denoiser.ckpt
};

// One JSON document drives every subcommand. Defaults describe a small
// five-step scenario over the eight-class default corpus; any field can
// be overridden from a config file or dotted --set keys.
struct RunConfig {
    uint64_t seed = 0;
    double val_fraction = 0.2;
    RunMode mode = RunMode::full;
    bool replay_dump = false;

    CorpusConfig pretrain_corpus;
    CorpusConfig downstream_corpus;
    RunPaths paths;
    ScenarioSpec scenario;
    DiffusionConfig diffusion;
    TokenLearnConfig token;
    ReplayCfg replay;
    LossConfig loss;
    SegTrainHyper seg;
    CannyParams canny;

    RunConfig();

    // missing keys fall back to the defaults above (deep merge)
    static RunConfig from_json(const json& j);
    json to_json() const;  // complete: from_json(to_json()) round-trips
    void validate() const;

    fs::path denoiser_path(const fs::path& run_dir) const {
        return paths.denoiser.empty() ? run_dir / "denoiser.ckpt" : paths.denoiser;
    }
};

RunConfig load_run_config(const fs::path& p);

// `--set a.b.c=value` support: walk/create the dotted path and assign the
// value (parsed as JSON when possible, kept as a string otherwise)
void apply_override(json& root, const std::string& dotted_key, const std::string& value);

}  // namespace dreampast

#endif
