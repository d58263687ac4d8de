#include "runner/config.hpp"

#include "util/common.hpp"

namespace dreampast {

RunMode run_mode_from_string(const std::string& s) {
    if (s == "full") return RunMode::full;
    if (s == "no_replay") return RunMode::no_replay;
    if (s == "sdr_only") return RunMode::sdr_only;
    if (s == "ddr_only") return RunMode::ddr_only;
    if (s == "prompt_only_replay") return RunMode::prompt_only_replay;
    if (s == "exemplar_memory") return RunMode::exemplar_memory;
    throw UsageError("unknown mode '" + s +
                     "' (expected full|no_replay|sdr_only|ddr_only|prompt_only_replay|"
                     "exemplar_memory)");
}

std::string run_mode_to_string(RunMode m) {
    switch (m) {
        case RunMode::full: return "full";
        case RunMode::no_replay: return "no_replay";
        case RunMode::sdr_only: return "sdr_only";
        case RunMode::ddr_only: return "ddr_only";
        case RunMode::prompt_only_replay: return "prompt_only_replay";
        case RunMode::exemplar_memory: return "exemplar_memory";
    }
    throw RuntimeError("unreachable");
}

RunConfig::RunConfig() {
    pretrain_corpus.style = CorpusStyle::pretrain;
    pretrain_corpus.seed = 11;
    downstream_corpus.style = CorpusStyle::downstream;
    downstream_corpus.seed = 22;
    scenario.n_base = 4;
    scenario.per_step = 1;
    scenario.steps = 5;
}

namespace {

// reject unknown keys (and nulls) so typos cannot silently fall back to
// defaults; `effective` is the fully-populated default document
void check_keys(const json& user, const json& effective, const std::string& path) {
    for (const auto& [key, val] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (val.is_null()) throw UsageError("config key '" + here + "' must not be null");
        if (!effective.is_object() || !effective.contains(key))
            throw UsageError("unknown config key '" + here + "'");
        if (val.is_object()) check_keys(val, effective.at(key), here);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    json merged = RunConfig().to_json();
    check_keys(j, merged, "");
    merged.merge_patch(j);

    RunConfig c;
    c.seed = merged.at("seed").get<uint64_t>();
    c.val_fraction = merged.at("val_fraction").get<double>();
    c.mode = run_mode_from_string(merged.at("mode").get<std::string>());
    c.replay_dump = merged.at("replay_dump").get<bool>();
    c.pretrain_corpus = CorpusConfig::from_json(merged.at("pretrain_corpus"));
    c.downstream_corpus = CorpusConfig::from_json(merged.at("downstream_corpus"));
    const json& jp = merged.at("paths");
    c.paths.pretrain_corpus = jp.at("pretrain_corpus").get<std::string>();
    c.paths.downstream_corpus = jp.at("downstream_corpus").get<std::string>();
    c.paths.denoiser = jp.value("denoiser", std::string());
    c.scenario = ScenarioSpec::from_json(merged.at("scenario"));
    c.diffusion = DiffusionConfig::from_json(merged.at("diffusion"));
    c.token = TokenLearnConfig::from_json(merged.at("token"));
    // the replay sampler follows the diffusion sampler unless pinned explicitly
    json jr = merged.at("replay");
    if (!j.contains("replay") || !j.at("replay").contains("sampler_steps"))
        jr["sampler_steps"] = c.diffusion.sampler_steps;
    c.replay = ReplayCfg::from_json(jr);
    c.loss = LossConfig::from_json(merged.at("loss"));
    c.seg = SegTrainHyper::from_json(merged.at("seg"));
    c.canny = CannyParams::from_json(merged.at("canny"));
    return c;
}

json RunConfig::to_json() const {
    return {{"seed", seed},
            {"val_fraction", val_fraction},
            {"mode", run_mode_to_string(mode)},
            {"replay_dump", replay_dump},
            {"pretrain_corpus", pretrain_corpus.to_json()},
            {"downstream_corpus", downstream_corpus.to_json()},
            {"paths",
             {{"pretrain_corpus", paths.pretrain_corpus.string()},
              {"downstream_corpus", paths.downstream_corpus.string()},
              {"denoiser", paths.denoiser.string()}}},
            {"scenario", scenario.to_json()},
            {"diffusion", diffusion.to_json()},
            {"token", token.to_json()},
            {"replay", replay.to_json()},
            {"loss", loss.to_json()},
            {"seg", seg.to_json()},
            {"canny", canny.to_json()}};
}

void RunConfig::validate() const {
    pretrain_corpus.validate();
    downstream_corpus.validate();
    scenario.validate(downstream_corpus.num_classes);
    canny.validate();
    if (val_fraction <= 0.0 || val_fraction > 0.5)
        throw UsageError("val_fraction must be in (0, 0.5]");
    if (diffusion.num_train_steps < 1) throw UsageError("diffusion.num_train_steps must be >= 1");
    if (diffusion.sampler_steps < 1 || diffusion.sampler_steps > diffusion.num_train_steps)
        throw UsageError("diffusion.sampler_steps must be in [1, num_train_steps]");
    if (replay.sampler_steps < 1 || replay.sampler_steps > diffusion.num_train_steps)
        throw UsageError("replay.sampler_steps must be in [1, num_train_steps]");
    if (diffusion.batch_size < 1) throw UsageError("diffusion.batch_size must be >= 1");
    if (diffusion.pretrain_iters < 0) throw UsageError("diffusion.pretrain_iters must be >= 0");
    if (diffusion.cond_dropout < 0.0 || diffusion.cond_dropout > 1.0)
        throw UsageError("diffusion.cond_dropout must be in [0, 1]");
    if (token.iters < 0 || token.few_shot < 1)
        throw UsageError("token.iters must be >= 0 and token.few_shot >= 1");
    if (loss.lambda_ce < 0 || loss.lambda_ali < 0 || loss.lambda_kd < 0)
        throw UsageError("loss weights must be >= 0");
    if (loss.conf_threshold < 0.0 || loss.conf_threshold > 1.0)
        throw UsageError("loss.conf_threshold must be in [0, 1]");
    if (seg.epochs < 1 || seg.batch < 1) throw UsageError("seg.epochs and seg.batch must be >= 1");
    if (downstream_corpus.height % 4 != 0 || downstream_corpus.width % 4 != 0 ||
        pretrain_corpus.height % 4 != 0 || pretrain_corpus.width % 4 != 0)
        throw UsageError("corpus height/width must be divisible by 4");
    if (pretrain_corpus.height != downstream_corpus.height ||
        pretrain_corpus.width != downstream_corpus.width)
        throw UsageError("pretrain and downstream corpora must share image dimensions");
}

RunConfig load_run_config(const fs::path& p) {
    RunConfig c = RunConfig::from_json(load_json(p));
    c.validate();
    return c;
}

void apply_override(json& root, const std::string& dotted_key, const std::string& value) {
    if (dotted_key.empty()) throw UsageError("--set key must not be empty");
    json* node = &root;
    size_t start = 0;
    while (true) {
        const size_t dot = dotted_key.find('.', start);
        const std::string part = dotted_key.substr(start, dot - start);
        if (part.empty()) throw UsageError("--set key '" + dotted_key + "' has an empty segment");
        if (dot == std::string::npos) {
            (*node)[part] = json::accept(value) ? json::parse(value) : json(value);
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null())
            throw UsageError("--set key '" + dotted_key + "': '" + part + "' is not an object");
        start = dot + 1;
    }
}

}  // namespace dreampast
