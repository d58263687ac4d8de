// command-line front end; talks to the core strictly through the C API
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dreampast.h"

namespace {

struct ConfigHandle {
    dp_config* c = nullptr;
    ConfigHandle() = default;
    ConfigHandle(const ConfigHandle&) = delete;
    ConfigHandle& operator=(const ConfigHandle&) = delete;
    ~ConfigHandle() { dp_config_free(c); }
};

int fail(dp_status st) {
    std::fprintf(stderr, "error: %s\n", dp_last_error());
    return int(st);
}

// file first, then --set overrides in order
int make_config(const std::string& config_path, const std::vector<std::string>& sets,
                ConfigHandle& out) {
    out.c = config_path.empty() ? dp_config_create() : dp_config_load(config_path.c_str());
    if (!out.c) return fail(DP_ERR_USAGE);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
            return int(DP_ERR_USAGE);
        }
        const dp_status st =
            dp_config_set(out.c, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (st != DP_OK) return fail(st);
    }
    return 0;
}

std::string run_dir_or_env(const std::string& flag) {
    if (!flag.empty()) return flag;
    const char* env = std::getenv("DREAMPAST_RUN_DIR");
    return env ? env : "";
}

int require_run_dir(std::string& dir) {
    dir = run_dir_or_env(dir);
    if (dir.empty()) {
        std::fprintf(stderr, "error: pass --run-dir or set DREAMPAST_RUN_DIR\n");
        return int(DP_ERR_USAGE);
    }
    return 0;
}

void print_and_free(char* s) {
    if (!s) return;
    std::fputs(s, stdout);
    std::fputc('\n', stdout);
    dp_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale generative replay for class-incremental segmentation"};
    app.set_version_flag("--version", dp_version());
    app.require_subcommand(1);
    int rc = 0;

    // ---- gen-corpus ----
    auto* gen = app.add_subcommand("gen-corpus", "render a synthetic shape corpus");
    std::string gen_config, gen_style, gen_out;
    std::vector<std::string> gen_sets;
    std::optional<uint64_t> gen_seed;
    bool gen_force = false;
    gen->add_option("--config", gen_config, "config JSON file");
    gen->add_option("--set", gen_sets, "override a config key (dotted.path=value)");
    gen->add_option("--style", gen_style, "pretrain|downstream")->required();
    gen->add_option("--out", gen_out, "output directory (default: configured path)");
    gen->add_option("--seed", gen_seed, "corpus seed (default: configured seed)");
    gen->add_flag("--force", gen_force, "overwrite an existing corpus");
    gen->callback([&] {
        ConfigHandle h;
        if ((rc = make_config(gen_config, gen_sets, h)) != 0) return;
        uint64_t sv = 0;
        const uint64_t* sp = nullptr;
        if (gen_seed) {
            sv = *gen_seed;
            sp = &sv;
        }
        const dp_status st = dp_gen_corpus(h.c, gen_style.c_str(),
                                           gen_out.empty() ? nullptr : gen_out.c_str(), sp,
                                           gen_force ? 1 : 0);
        rc = st == DP_OK ? 0 : fail(st);
    });

    // ---- pretrain ----
    auto* pre = app.add_subcommand("pretrain", "train the denoiser on the pretrain corpus");
    std::string pre_config, pre_dir;
    std::vector<std::string> pre_sets;
    bool pre_resume = false;
    pre->add_option("--config", pre_config, "config JSON file");
    pre->add_option("--set", pre_sets, "override a config key (dotted.path=value)");
    pre->add_option("--run-dir", pre_dir, "run directory (or DREAMPAST_RUN_DIR)");
    pre->add_flag("--resume", pre_resume, "continue from the last saved optimizer state");
    pre->callback([&] {
        if ((rc = require_run_dir(pre_dir)) != 0) return;
        ConfigHandle h;
        if ((rc = make_config(pre_config, pre_sets, h)) != 0) return;
        char* summary = nullptr;
        const dp_status st = dp_pretrain(h.c, pre_dir.c_str(), pre_resume ? 1 : 0, &summary);
        if (st != DP_OK) {
            rc = fail(st);
            return;
        }
        print_and_free(summary);
    });

    // ---- run ----
    auto* run = app.add_subcommand("run", "execute the class-incremental protocol");
    std::string run_config, run_dir, run_mode;
    std::vector<std::string> run_sets;
    std::optional<uint64_t> run_seed;
    bool run_resume = false, run_dump = false;
    run->add_option("--config", run_config, "config JSON file");
    run->add_option("--set", run_sets, "override a config key (dotted.path=value)");
    run->add_option("--run-dir", run_dir, "run directory (or DREAMPAST_RUN_DIR)");
    run->add_option("--mode", run_mode,
                    "full|no_replay|sdr_only|ddr_only|prompt_only_replay|exemplar_memory");
    run->add_option("--seed", run_seed, "run seed");
    run->add_flag("--resume", run_resume, "continue a partially completed run");
    run->add_flag("--dump-replay", run_dump, "write generated replay sets to disk");
    run->callback([&] {
        if ((rc = require_run_dir(run_dir)) != 0) return;
        std::vector<std::string> sets = run_sets;  // explicit flags take precedence
        if (!run_mode.empty()) sets.push_back("mode=" + run_mode);
        if (run_seed) sets.push_back("seed=" + std::to_string(*run_seed));
        if (run_dump) sets.push_back("replay_dump=true");
        ConfigHandle h;
        if ((rc = make_config(run_config, sets, h)) != 0) return;
        char* result = nullptr;
        const dp_status st = dp_run_scenario(h.c, run_dir.c_str(), run_resume ? 1 : 0, &result);
        if (st != DP_OK) {
            rc = fail(st);
            return;
        }
        print_and_free(result);
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "evaluate segmenter checkpoints");
    std::string ev_config, ev_out;
    std::vector<std::string> ev_sets, ev_ckpts;
    std::optional<int> ev_runs;
    ev->add_option("--config", ev_config, "config JSON file");
    ev->add_option("--set", ev_sets, "override a config key (dotted.path=value)");
    ev->add_option("--checkpoint", ev_ckpts, "segmenter checkpoint (repeatable)")->required();
    ev->add_option("--runs", ev_runs, "expected number of checkpoints; aggregates mean/std");
    ev->add_option("--out", ev_out, "write the result JSON here instead of stdout");
    ev->callback([&] {
        if (ev_runs && *ev_runs != int(ev_ckpts.size())) {
            std::fprintf(stderr, "error: --runs %d but %zu checkpoints given\n", *ev_runs,
                         ev_ckpts.size());
            rc = int(DP_ERR_USAGE);
            return;
        }
        ConfigHandle h;
        if ((rc = make_config(ev_config, ev_sets, h)) != 0) return;
        std::vector<const char*> ptrs;
        for (const auto& s : ev_ckpts) ptrs.push_back(s.c_str());
        char* result = nullptr;
        const dp_status st = dp_eval(h.c, ptrs.data(), ptrs.size(), &result);
        if (st != DP_OK) {
            rc = fail(st);
            return;
        }
        if (ev_out.empty()) {
            print_and_free(result);
        } else {
            std::FILE* f = std::fopen(ev_out.c_str(), "wb");
            if (!f) {
                std::fprintf(stderr, "error: cannot write %s\n", ev_out.c_str());
                dp_string_free(result);
                rc = int(DP_ERR_RUNTIME);
                return;
            }
            std::fputs(result, f);
            std::fputc('\n', f);
            std::fclose(f);
            dp_string_free(result);
        }
    });

    // ---- report ----
    auto* rep = app.add_subcommand("report", "summarize one run or a directory of runs");
    std::string rep_dir, rep_out;
    rep->add_option("dir", rep_dir, "run directory or parent of runs (or DREAMPAST_RUN_DIR)");
    rep->add_option("--out", rep_out, "output directory (default: <dir>/report)");
    rep->callback([&] {
        if ((rc = require_run_dir(rep_dir)) != 0) return;
        char* summary = nullptr;
        const dp_status st =
            dp_report(rep_dir.c_str(), rep_out.empty() ? nullptr : rep_out.c_str(), &summary);
        if (st != DP_OK) {
            rc = fail(st);
            return;
        }
        print_and_free(summary);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return int(DP_ERR_USAGE);
    }
    return rc;
}
