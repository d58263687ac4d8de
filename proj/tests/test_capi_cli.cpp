#include "dreampast.h"

#include <sys/wait.h>

#include <cstdlib>
#include <string>

#include "doctest.h"
#include "runner/config.hpp"
#include "testutil.hpp"
#include "util/common.hpp"

using dreampast::fs::path;
using dreampast::json;

namespace {

// RAII over the opaque config handle
struct Cfg {
    dp_config* c;
    Cfg() : c(dp_config_create()) {}
    explicit Cfg(dp_config* h) : c(h) {}
    ~Cfg() { dp_config_free(c); }
    operator dp_config*() const { return c; }
};

json dump(dp_config* c) {
    char* s = dp_config_dump(c);
    REQUIRE(s != nullptr);
    json j = json::parse(s);
    dp_string_free(s);
    return j;
}

// the smallest config that exercises the whole pipeline: 3 classes at
// 16x16, a 2+1 scenario, two pretraining iterations
json tiny_config_doc(const path& root) {
    dreampast::RunConfig cfg;
    cfg.seed = 5;
    cfg.mode = dreampast::RunMode::no_replay;
    cfg.pretrain_corpus.num_classes = 3;
    cfg.pretrain_corpus.images_per_class = 5;
    cfg.pretrain_corpus.height = 16;
    cfg.pretrain_corpus.width = 16;
    cfg.pretrain_corpus.seed = 7;
    cfg.downstream_corpus = cfg.pretrain_corpus;
    cfg.downstream_corpus.style = dreampast::CorpusStyle::downstream;
    cfg.downstream_corpus.seed = 8;
    cfg.paths.pretrain_corpus = root / "cp";
    cfg.paths.downstream_corpus = root / "cd";
    cfg.scenario.n_base = 2;
    cfg.scenario.per_step = 1;
    cfg.scenario.steps = 2;
    cfg.diffusion.num_train_steps = 10;
    cfg.diffusion.sampler_steps = 2;
    cfg.diffusion.pretrain_iters = 2;
    cfg.diffusion.batch_size = 2;
    cfg.diffusion.log_every = 1;
    cfg.diffusion.net.base = 4;
    cfg.diffusion.net.cond_dim = 8;
    cfg.diffusion.net.groups = 2;
    cfg.diffusion.net.num_embeddings = 8;
    cfg.token.iters = 1;
    cfg.token.few_shot = 1;
    cfg.replay.total = 2;
    cfg.replay.sampler_steps = 2;
    cfg.seg.epochs = 1;
    cfg.seg.batch = 8;
    cfg.seg.log_every = 2;
    cfg.seg.net.base = 4;
    cfg.seg.net.groups = 2;
    return cfg.to_json();
}

int run_cli(const std::string& args, const path& stdout_file = {}) {
    std::string cmd = std::string(DREAMPAST_CLI_PATH) + " " + args;
    if (stdout_file.empty())
        cmd += " >/dev/null 2>&1";
    else
        cmd += " >" + stdout_file.string() + " 2>/dev/null";
    const int st = std::system(cmd.c_str());
    REQUIRE(st != -1);
    REQUIRE(WIFEXITED(st));
    return WEXITSTATUS(st);
}

}  // namespace

TEST_CASE("capi: version and error text are always available") {
    REQUIRE(dp_version() != nullptr);
    CHECK(std::string(dp_version()).find('.') != std::string::npos);
    REQUIRE(dp_last_error() != nullptr);
    dp_string_free(nullptr);  // must be a safe no-op
}

TEST_CASE("capi: hiou matches the library definition") {
    CHECK(dp_hiou(0.0, 0.0) == 0.0);
    CHECK(dp_hiou(0.5, 0.5) == doctest::Approx(0.5));
    CHECK(std::abs(dp_hiou(0.7731, 0.3659) * 100.0 - 49.67) <= 0.01);
    CHECK(std::abs(dp_hiou(0.6810, 0.5530) * 100.0 - 61.04) <= 0.01);
}

TEST_CASE("capi: config handles expose defaults and validate overrides") {
    Cfg cfg;
    REQUIRE(cfg.c != nullptr);
    json defaults = dump(cfg);
    CHECK(defaults.at("mode") == "full");
    CHECK(defaults.at("scenario").at("steps") == 5);

    CHECK(dp_config_set(cfg, "scenario.steps", "3") == DP_OK);
    CHECK(std::string(dp_last_error()).empty());  // success clears the slot
    CHECK(dump(cfg).at("scenario").at("steps") == 3);

    SUBCASE("bad keys and values are usage errors with a message") {
        CHECK(dp_config_set(cfg, "scenario.bogus", "1") == DP_ERR_USAGE);
        CHECK(std::string(dp_last_error()).find("unknown config key") != std::string::npos);
        CHECK(dp_config_set(cfg, "mode", "sideways") == DP_ERR_USAGE);
        CHECK(std::string(dp_last_error()).find("unknown mode") != std::string::npos);
        CHECK(dp_config_set(cfg, "", "1") == DP_ERR_USAGE);
        CHECK(dp_config_set(nullptr, "seed", "1") == DP_ERR_USAGE);
        // the rejected override must not stick
        CHECK(dump(cfg).at("mode") == "full");
    }

    SUBCASE("null handles never crash") {
        CHECK(dp_config_dump(nullptr) == nullptr);
        CHECK(std::string(dp_last_error()).find("null") != std::string::npos);
        dp_config_free(nullptr);
    }
}

TEST_CASE("capi: config files load with defaults merged in") {
    dptest::TmpDir tmp("capicfg");
    const path good = tmp / "good.json";
    dreampast::save_json(good, json{{"seed", 12}, {"scenario", {{"steps", 4}}}});
    Cfg cfg(dp_config_load(good.string().c_str()));
    REQUIRE(cfg.c != nullptr);
    json j = dump(cfg);
    CHECK(j.at("seed") == 12);
    CHECK(j.at("scenario").at("steps") == 4);
    CHECK(j.at("scenario").at("per_step") == 1);  // default filled in

    CHECK(dp_config_load((tmp / "missing.json").string().c_str()) == nullptr);
    CHECK_FALSE(std::string(dp_last_error()).empty());
    dreampast::write_file(tmp / "broken.json", "{not json");
    CHECK(dp_config_load((tmp / "broken.json").string().c_str()) == nullptr);
    dreampast::save_json(tmp / "badkey.json", json{{"bogus", 1}});
    CHECK(dp_config_load((tmp / "badkey.json").string().c_str()) == nullptr);
    CHECK(std::string(dp_last_error()).find("unknown config key") != std::string::npos);
}

TEST_CASE("capi: corpus generation honors style, seed and force") {
    dptest::TmpDir tmp("capigen");
    Cfg cfg;
    REQUIRE(dp_config_set(cfg, "downstream_corpus.num_classes", "2") == DP_OK);
    REQUIRE(dp_config_set(cfg, "downstream_corpus.images_per_class", "2") == DP_OK);
    REQUIRE(dp_config_set(cfg, "downstream_corpus.image_size", "[16,16]") == DP_OK);

    const path dir = tmp / "c";
    const uint64_t seed = 9;
    CHECK(dp_gen_corpus(cfg, "downstream", dir.string().c_str(), &seed, 0) == DP_OK);
    json mf = dreampast::load_json(dir / "manifest.json");
    CHECK(mf.at("config").at("seed") == 9);
    CHECK(mf.at("config").at("num_classes") == 2);

    CHECK(dp_gen_corpus(cfg, "downstream", dir.string().c_str(), &seed, 0) == DP_ERR_RUNTIME);
    CHECK_FALSE(std::string(dp_last_error()).empty());
    CHECK(dp_gen_corpus(cfg, "downstream", dir.string().c_str(), &seed, 1) == DP_OK);

    CHECK(dp_gen_corpus(cfg, "sideways", dir.string().c_str(), &seed, 1) == DP_ERR_USAGE);
    CHECK(dp_gen_corpus(cfg, nullptr, dir.string().c_str(), &seed, 1) == DP_ERR_USAGE);
}

TEST_CASE("capi: command argument validation happens before any work") {
    Cfg cfg;
    CHECK(dp_eval(cfg, nullptr, 0, nullptr) == DP_ERR_USAGE);
    CHECK(std::string(dp_last_error()).find("at least one checkpoint") != std::string::npos);
    CHECK(dp_eval(cfg, nullptr, 2, nullptr) == DP_ERR_USAGE);
    CHECK(dp_run_scenario(cfg, nullptr, 0, nullptr) == DP_ERR_USAGE);
    CHECK(dp_run_scenario(cfg, "", 0, nullptr) == DP_ERR_USAGE);
    CHECK(dp_pretrain(cfg, nullptr, 0, nullptr) == DP_ERR_USAGE);
    CHECK(dp_report(nullptr, nullptr, nullptr) == DP_ERR_USAGE);

    dptest::TmpDir tmp("capireport");
    dreampast::fs::create_directories(tmp / "empty");
    char* out = nullptr;
    CHECK(dp_report((tmp / "empty").string().c_str(), nullptr, &out) == DP_ERR_RUNTIME);
    CHECK(out == nullptr);
    CHECK(std::string(dp_last_error()).find("no run metrics") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 2 and never do work") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("--version") == 0);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("") == 2);  // a subcommand is required
    CHECK(run_cli("gen-corpus") == 2);  // --style is required
    CHECK(run_cli("gen-corpus --style sideways") == 2);
    CHECK(run_cli("gen-corpus --style downstream --set oops") == 2);  // not key=value
    CHECK(run_cli("gen-corpus --style downstream --set scenario.bogus=1") == 2);
    CHECK(run_cli("run") == 2);         // no --run-dir and no environment fallback
    CHECK(run_cli("pretrain") == 2);
    CHECK(run_cli("eval") == 2);        // --checkpoint is required
    CHECK(run_cli("eval --checkpoint a.ckpt --runs 2") == 2);  // count mismatch
}

TEST_CASE("cli: runtime failures exit 1") {
    dptest::TmpDir tmp("clifail");
    dreampast::fs::create_directories(tmp / "empty");
    CHECK(run_cli("report " + (tmp / "empty").string()) == 1);
    Cfg cfg;  // defaults point at corpora that do not exist here
    CHECK(run_cli("eval --checkpoint " + (tmp / "missing.ckpt").string()) == 1);
}

TEST_CASE("cli: the full pipeline runs end to end") {
    dptest::TmpDir tmp("clie2e");
    const path cfg_file = tmp / "config.json";
    dreampast::save_json(cfg_file, tiny_config_doc(tmp.path()));
    const std::string cfg_arg = " --config " + cfg_file.string();
    const path run_dir = tmp / "run";

    // corpora via --set corrections on top of the file
    CHECK(run_cli("gen-corpus --style pretrain" + cfg_arg) == 0);
    CHECK(run_cli("gen-corpus --style downstream" + cfg_arg) == 0);
    CHECK(dreampast::fs::exists(tmp / "cp" / "manifest.json"));
    CHECK(dreampast::fs::exists(tmp / "cd" / "manifest.json"));

    // pretraining prints its summary as JSON
    const path pre_out = tmp / "pre.json";
    CHECK(run_cli("pretrain --run-dir " + run_dir.string() + cfg_arg, pre_out) == 0);
    json pre = json::parse(dreampast::read_text(pre_out));
    CHECK(pre.at("iters") == 2);
    CHECK(dreampast::fs::exists(run_dir / "denoiser.ckpt"));

    // the run directory comes from the environment when the flag is absent
    setenv("DREAMPAST_RUN_DIR", run_dir.string().c_str(), 1);
    const path run_out = tmp / "run.json";
    CHECK(run_cli("run" + cfg_arg, run_out) == 0);
    json rr = json::parse(dreampast::read_text(run_out));
    CHECK(rr.at("steps_executed") == 2);
    CHECK(rr.at("records").size() == 2);
    CHECK(dreampast::fs::exists(run_dir / "step_2" / "segmenter.ckpt"));

    // rerunning without --resume must refuse; with it, nothing recomputes
    CHECK(run_cli("run" + cfg_arg) == 1);
    const path resume_out = tmp / "resume.json";
    CHECK(run_cli("run --resume" + cfg_arg, resume_out) == 0);
    CHECK(json::parse(dreampast::read_text(resume_out)).at("steps_executed") == 0);

    // report falls back to the environment as well
    const path rep_out = tmp / "rep.json";
    CHECK(run_cli("report", rep_out) == 0);
    json rep = json::parse(dreampast::read_text(rep_out));
    CHECK(rep.at("runs") == json::array({"run"}));
    CHECK(dreampast::fs::exists(run_dir / "report" / "evolution.csv"));
    unsetenv("DREAMPAST_RUN_DIR");

    // evaluation agrees with the run's final record
    const path ev_out = tmp / "ev.json";
    CHECK(run_cli("eval --runs 1 --checkpoint " +
                      (run_dir / "step_2" / "segmenter.ckpt").string() + cfg_arg +
                      " --out " + ev_out.string()) == 0);
    json ev = json::parse(dreampast::read_text(ev_out));
    REQUIRE(ev.at("records").size() == 1);
    CHECK(ev.at("records")[0].at("miou_all") == rr.at("records")[1].at("miou_all"));

    // a conflicting override is rejected before any directory is touched
    CHECK(run_cli("run --run-dir " + run_dir.string() + cfg_arg + " --seed 99 --resume") == 1);
}
