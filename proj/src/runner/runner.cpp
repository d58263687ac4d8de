#include "runner/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "util/common.hpp"

namespace dreampast {

LabelMap LabelMap::from_order(const std::vector<int>& class_order) {
    LabelMap lm;
    lm.channel_to_class.push_back(0);
    lm.class_to_channel[0] = 0;
    for (int c : class_order) {
        if (lm.class_to_channel.count(c))
            throw RuntimeError("duplicate class id " + std::to_string(c) + " in label map");
        lm.class_to_channel[c] = int(lm.channel_to_class.size());
        lm.channel_to_class.push_back(c);
    }
    return lm;
}

Mask LabelMap::to_channels(const Mask& class_mask) const {
    Mask out(class_mask.h, class_mask.w);
    for (size_t i = 0; i < class_mask.v.size(); ++i) {
        auto it = class_to_channel.find(class_mask.v[i]);
        if (it == class_to_channel.end())
            throw RuntimeError("mask label " + std::to_string(class_mask.v[i]) +
                               " outside the current class set");
        out.v[i] = it->second;
    }
    return out;
}

// ---- gen-corpus -------------------------------------------------------------

fs::path cmd_gen_corpus(const RunConfig& cfg, CorpusStyle style, fs::path out_dir,
                        std::optional<uint64_t> seed_override, bool force) {
    CorpusConfig cc = style == CorpusStyle::pretrain ? cfg.pretrain_corpus : cfg.downstream_corpus;
    cc.style = style;
    if (seed_override) cc.seed = *seed_override;
    if (out_dir.empty())
        out_dir = style == CorpusStyle::pretrain ? cfg.paths.pretrain_corpus
                                                 : cfg.paths.downstream_corpus;
    generate_corpus(cc, out_dir, force);
    return out_dir;
}

// ---- pretrain ---------------------------------------------------------------

namespace {

// refuse to mix artifacts produced under different configurations
void pin_config(const fs::path& run_dir, const json& cfg_json) {
    const fs::path p = run_dir / "config.json";
    if (fs::exists(p)) {
        if (load_json(p) != cfg_json)
            throw RuntimeError(run_dir.string() +
                               " was created with a different config; use a fresh directory");
    } else {
        save_json(p, cfg_json);
    }
}

std::vector<EdgeMap> edge_cache(const Corpus& corpus, const CannyParams& p) {
    std::vector<EdgeMap> edges;
    edges.reserve(corpus.size());
    for (const Image& img : corpus.images) edges.push_back(canny(img, p));
    return edges;
}

}  // namespace

json cmd_pretrain(const RunConfig& cfg, const fs::path& run_dir, bool resume) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg.paths.pretrain_corpus);
    if (corpus.height() % 4 != 0 || corpus.width() % 4 != 0)
        throw RuntimeError("pretrain corpus dimensions must be divisible by 4");
    if (corpus.manifest.config.num_classes >= cfg.diffusion.net.num_embeddings)
        throw RuntimeError("denoiser embedding table too small for this corpus");

    fs::create_directories(run_dir);
    pin_config(run_dir, cfg.to_json());
    const fs::path ckpt_path = cfg.denoiser_path(run_dir);
    const fs::path state_path = run_dir / "pretrain_state.ckpt";
    const fs::path log_path = run_dir / "pretrain_log.json";

    const Schedule sched = cfg.diffusion.make_schedule();
    Rng init_rng = Rng(cfg.seed).fork("denoiser_init");
    std::unique_ptr<UNet> net = std::make_unique<UNet>(cfg.diffusion.net, init_rng);

    Adam opt;
    PretrainHooks hooks;
    hooks.opt = &opt;
    json curve = json::array();
    double heldout_init = 0.0;
    bool have_init = false;

    if (resume && fs::exists(state_path) && fs::exists(ckpt_path)) {
        net = UNet::load(ckpt_path);
        CkptReader rd(state_path);
        if (rd.kind() != "pretrain_state")
            throw RuntimeError(state_path.string() + " is not a pretrain state file");
        opt.load(rd);
        hooks.start_iter = rd.meta().at("iter").get<int64_t>();
        if (fs::exists(log_path)) {
            json prev = load_json(log_path);
            curve = prev.value("curve", json::array());
            heldout_init = prev.value("heldout_first", 0.0);
            have_init = prev.contains("heldout_first");
        }
    }

    const json base_meta{{"schedule", sched.to_json()},
                         {"seed", cfg.seed},
                         {"iters", cfg.diffusion.pretrain_iters}};
    auto snapshot = [&](int64_t next_iter) {
        net->save(ckpt_path, base_meta);
        CkptWriter wr("pretrain_state", json{{"iter", next_iter}});
        opt.save(wr);
        wr.write(state_path);
    };
    hooks.snapshot = snapshot;
    hooks.snapshot_every = std::max<int64_t>(cfg.diffusion.log_every, 250);

    auto log = [&](const json& rec) {
        curve.push_back(rec);
        std::fprintf(stderr, "[dreampast] pretrain iter %lld train %.5f heldout %.5f\n",
                     (long long)rec.at("iter").get<int64_t>(),
                     rec.at("train_loss").get<double>(), rec.at("heldout_loss").get<double>());
    };

    const PretrainResult res =
        pretrain_denoiser(*net, corpus, edge_cache(corpus, cfg.canny), sched, cfg.diffusion,
                          cfg.seed, log, &hooks);
    if (!have_init) heldout_init = res.heldout_first;

    snapshot(cfg.diffusion.pretrain_iters);  // final weights + state at the end mark
    json summary{{"checkpoint", ckpt_path.string()},
                 {"iters", cfg.diffusion.pretrain_iters},
                 {"resumed_from", hooks.start_iter},
                 {"heldout_first", heldout_init},
                 {"heldout_last", res.heldout_last},
                 {"curve", curve}};
    save_json(log_path, summary);
    return summary;
}

// ---- run --------------------------------------------------------------------

namespace {

struct RunState {
    std::vector<int> completed;

    bool done(int t) const {
        return std::find(completed.begin(), completed.end(), t) != completed.end();
    }
    static RunState load(const fs::path& p) {
        RunState s;
        if (fs::exists(p)) s.completed = load_json(p).value("completed_steps", std::vector<int>{});
        return s;
    }
    void save(const fs::path& p) const {
        save_json(p, json{{"format_version", 1}, {"completed_steps", completed}});
    }
};

void write_metrics_line(const fs::path& step_dir, const MetricsRecord& rec) {
    const fs::path tmp = step_dir / "metrics.jsonl.tmp";
    write_file(tmp, rec.to_json().dump() + "\n");
    fs::rename(tmp, step_dir / "metrics.jsonl");
}

MetricsRecord read_metrics_line(const fs::path& step_dir) {
    return MetricsRecord::from_json(json::parse(read_text(step_dir / "metrics.jsonl")));
}

void dump_replay(const fs::path& dir, const std::vector<ReplaySample>& replay) {
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    json entries = json::array();
    for (size_t i = 0; i < replay.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "r_%04zu", i);
        const std::string image_rel = "images/" + std::string(id) + ".png";
        const std::string mask_rel = "masks/" + std::string(id) + ".png";
        write_png_rgb(dir / image_rel, replay[i].img);
        write_png_mask(dir / mask_rel, replay[i].mask);
        entries.push_back({{"id", id},
                           {"origin", replay[i].origin},
                           {"class_id", replay[i].class_id},
                           {"image", image_rel},
                           {"mask", mask_rel}});
    }
    save_json(dir / "manifest.json", json{{"format_version", 1}, {"samples", entries}});
}

std::vector<const Image*> pick_shots(const Corpus& corpus, const StepDataset& ds, int class_id,
                                     int few_shot, Rng rng) {
    std::vector<int> cands;
    for (size_t i = 0; i < ds.indices.size(); ++i) {
        const auto& v = ds.masks[i].v;
        if (std::find(v.begin(), v.end(), class_id) != v.end()) cands.push_back(ds.indices[i]);
    }
    if (cands.empty())
        throw RuntimeError("no training images contain class " + std::to_string(class_id));
    rng.shuffle(cands);
    if (int(cands.size()) > few_shot) cands.resize(size_t(few_shot));
    std::vector<const Image*> shots;
    for (int idx : cands) shots.push_back(&corpus.images[size_t(idx)]);
    return shots;
}

void write_run_metrics(const fs::path& run_dir, const std::vector<MetricsRecord>& records,
                       const ScenarioSpec& sc) {
    std::string jsonl;
    for (const auto& r : records) jsonl += r.to_json().dump() + "\n";
    write_file(run_dir / "metrics.jsonl", jsonl);

    // one row per step; fixed per-class columns over the scenario's classes
    std::vector<int> cols = {0};
    const std::vector<int> all = sc.cum_classes(sc.steps);
    cols.insert(cols.end(), all.begin(), all.end());
    std::string csv = "step,miou_base,miou_novel,miou_all,hiou,pixels";
    for (int c : cols) csv += ",iou_" + std::to_string(c);
    csv += "\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    for (const auto& r : records) {
        csv += std::to_string(r.step) + "," + num(r.miou_base) + "," + num(r.miou_novel) + "," +
               num(r.miou_all) + "," + num(r.hiou) + "," + std::to_string(r.pixels);
        for (int c : cols) {
            auto it = r.per_class_iou.find(c);
            csv += it == r.per_class_iou.end() ? "," : "," + num(it->second);
        }
        csv += "\n";
    }
    write_file(run_dir / "metrics.csv", csv);
}

}  // namespace

json RunResult::to_json() const {
    json recs = json::array();
    for (const auto& r : records) recs.push_back(r.to_json());
    return {{"run_dir", run_dir.string()},
            {"steps_executed", steps_executed},
            {"records", recs}};
}

RunResult cmd_run(const RunConfig& cfg, const fs::path& run_dir, bool resume) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg.paths.downstream_corpus);
    cfg.scenario.validate(corpus.manifest.config.num_classes);
    const int h = corpus.height(), w = corpus.width();
    if (h % 4 != 0 || w % 4 != 0)
        throw RuntimeError("downstream corpus dimensions must be divisible by 4");

    fs::create_directories(run_dir);
    pin_config(run_dir, cfg.to_json());
    const fs::path state_path = run_dir / "state.json";
    if (!resume && fs::exists(state_path))
        throw RuntimeError(run_dir.string() +
                           " already contains a run; resume it or use a fresh directory");
    RunState state = resume ? RunState::load(state_path) : RunState{};

    const SplitIndices split = split_corpus(corpus.manifest, cfg.val_fraction);
    const ScenarioSpec& sc = cfg.scenario;

    // generator artifacts load lazily so baselines that never need the
    // denoiser never open its checkpoint
    std::unique_ptr<UNet> denoiser;
    Schedule sched = cfg.diffusion.make_schedule();
    auto ensure_denoiser = [&]() -> UNet& {
        if (!denoiser) {
            const fs::path p = cfg.denoiser_path(run_dir);
            if (!fs::exists(p))
                throw RuntimeError("denoiser checkpoint missing: " + p.string() +
                                   " (run the pretrain command first)");
            json meta;
            denoiser = UNet::load(p, &meta);
            if (meta.contains("schedule")) sched = Schedule::from_json(meta.at("schedule"));
        }
        return *denoiser;
    };

    KnowledgeStore store(run_dir / "knowledge");
    ExemplarStore exemplars(run_dir / "exemplars");
    const bool uses_store = cfg.mode == RunMode::full || cfg.mode == RunMode::sdr_only ||
                            cfg.mode == RunMode::ddr_only;
    const bool uses_tokens = cfg.mode == RunMode::full || cfg.mode == RunMode::ddr_only;

    const Rng seed_root(cfg.seed);
    std::unique_ptr<SegNet> prev_model;
    std::vector<MetricsRecord> records;
    int executed = 0;

    for (int t = 1; t <= sc.steps; ++t) {
        const std::vector<int> step_classes = sc.classes_at(t);
        const std::vector<int> cum = sc.cum_classes(t);
        const LabelMap lm = LabelMap::from_order(cum);
        const fs::path step_dir = run_dir / ("step_" + std::to_string(t));
        const fs::path ckpt_path = step_dir / "segmenter.ckpt";

        if (state.done(t)) {
            if (!fs::exists(ckpt_path))
                throw RuntimeError("state claims step " + std::to_string(t) +
                                   " is complete but its checkpoint is missing");
            prev_model = SegNet::load(ckpt_path);
            records.push_back(read_metrics_line(step_dir));
            continue;
        }

        std::fprintf(stderr, "[dreampast] step %d/%d: classes", t, sc.steps);
        for (int c : step_classes) std::fprintf(stderr, " %d", c);
        std::fprintf(stderr, "\n");
        fs::create_directories(step_dir);

        const StepDataset ds = build_step_dataset(corpus, split.train, step_classes);
        if (ds.indices.empty())
            throw RuntimeError("step " + std::to_string(t) + " has no training images");

        std::vector<TrainPoolItem> pool;
        pool.reserve(ds.indices.size());
        for (size_t i = 0; i < ds.indices.size(); ++i)
            pool.push_back({&corpus.images[size_t(ds.indices[i])], lm.to_channels(ds.masks[i]),
                            false});

        std::vector<ReplaySample> replay;
        std::unique_ptr<SegNet> model;
        double lr = cfg.seg.base_lr;

        if (t == 1) {
            Rng init = seed_root.fork("seg_init");
            model = std::make_unique<SegNet>(cfg.seg.net, lm.channels(), init);
        } else {
            lr = cfg.seg.incr_lr;
            const std::vector<int> old_order = sc.cum_classes(t - 1);
            const LabelMap old_lm = LabelMap::from_order(old_order);
            const uint64_t replay_seed = seed_root.fork("replay_seed", uint64_t(t)).next_u64();

            switch (cfg.mode) {
                case RunMode::no_replay: break;
                case RunMode::exemplar_memory:
                    replay = exemplars.sample(old_order, cfg.replay.total, replay_seed);
                    break;
                default: {
                    ReplayMode rm = ReplayMode::full;
                    if (cfg.mode == RunMode::sdr_only) rm = ReplayMode::sdr_only;
                    if (cfg.mode == RunMode::ddr_only) rm = ReplayMode::ddr_only;
                    if (cfg.mode == RunMode::prompt_only_replay) rm = ReplayMode::prompt_only;
                    replay = build_replay_set(store, ensure_denoiser(), sched, *prev_model,
                                              old_order, old_lm.channel_to_class, rm, cfg.replay,
                                              h, w, replay_seed);
                }
            }
            if (cfg.replay_dump && !replay.empty()) dump_replay(step_dir / "replay", replay);
            for (const auto& rs : replay)
                pool.push_back({&rs.img, lm.to_channels(rs.mask), true});

            model = prev_model->clone();
            Rng head_rng = seed_root.fork("head", uint64_t(t));
            model->extend_head(int(step_classes.size()), head_rng);
        }

        // training, with a JSONL log of the loss trajectory
        std::string train_log;
        auto log = [&](const json& rec) { train_log += rec.dump() + "\n"; };
        const uint64_t train_seed = seed_root.fork("train_seed", uint64_t(t)).next_u64();
        const SegTrainResult tres =
            train_segmenter(*model, t == 1 ? nullptr : prev_model.get(), pool, h, w, lr,
                            cfg.seg, cfg.loss, train_seed, log);
        write_file(step_dir / "train_log.jsonl", train_log);

        // persist, then continue from the persisted weights so resumed and
        // uninterrupted runs see identical float32-rounded parameters
        json meta{{"class_ids", lm.channel_to_class},
                  {"step", t},
                  {"n_base", sc.n_base},
                  {"scenario", sc.to_json()},
                  {"mode", run_mode_to_string(cfg.mode)},
                  {"seed", cfg.seed}};
        model->save(ckpt_path, meta);
        model.reset();
        prev_model = SegNet::load(ckpt_path);

        // cumulative validation over every class learned so far
        auto [val_imgs, val_masks] = build_eval_set(corpus, split.val, cum, lm);
        const ConfusionMatrix cm = evaluate(*prev_model, val_imgs, val_masks);
        std::vector<int> base_ch, novel_ch;
        for (int ch = 1; ch < lm.channels(); ++ch)
            (ch <= sc.n_base ? base_ch : novel_ch).push_back(ch);
        MetricsRecord rec = make_record(t, cm, lm.channel_to_class, base_ch, novel_ch);
        write_metrics_line(step_dir, rec);
        records.push_back(rec);
        std::fprintf(stderr,
                     "[dreampast] step %d done: miou_all %.4f base %.4f novel %.4f hiou %.4f\n",
                     t, rec.miou_all, rec.miou_base, rec.miou_novel, rec.hiou);

        // knowledge / memory updates for the classes just learned
        json token_summary = json::array();
        if (uses_store) store.update(corpus, ds, step_classes, cfg.canny, t);
        if (uses_tokens) {
            UNet& net = ensure_denoiser();
            for (int c : step_classes) {
                auto shots = pick_shots(corpus, ds, c, cfg.token.few_shot,
                                        seed_root.fork("shots", uint64_t(t), uint64_t(c)));
                const TokenResult tr = learn_token(net, shots, c, sched, cfg.token, cfg.seed);
                store.set_token(c, tr.token, t);
                token_summary.push_back({{"class_id", c},
                                         {"shots", shots.size()},
                                         {"loss_first", tr.loss_first},
                                         {"loss_last", tr.loss_last}});
            }
            store.save();
        }
        if (cfg.mode == RunMode::exemplar_memory) exemplars.update(corpus, ds, step_classes, t);

        json origin_counts = json::object();
        for (const auto& rs : replay) {
            origin_counts[rs.origin] = origin_counts.value(rs.origin, 0) + 1;
        }
        save_json(step_dir / "summary.json",
                  json{{"step", t},
                       {"classes", step_classes},
                       {"train_images", ds.indices.size()},
                       {"replay_samples", replay.size()},
                       {"replay_origins", origin_counts},
                       {"train_iters", tres.iters},
                       {"replay_draws", tres.replay_draws},
                       {"draws", tres.draws},
                       {"final_loss", tres.final_loss},
                       {"tokens", token_summary}});

        state.completed.push_back(t);
        state.save(state_path);
        ++executed;
    }

    write_run_metrics(run_dir, records, sc);
    return {run_dir, records, executed};
}

}  // namespace dreampast
