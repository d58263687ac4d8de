#include "dreampast.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "metrics/metrics.hpp"
#include "runner/runner.hpp"
#include "util/common.hpp"

using dreampast::json;

struct dp_config {
    json j;  // sparse user document; defaults fill in at parse time
};

namespace {

thread_local std::string g_last_error;

template <typename F>
dp_status guarded(F&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DP_OK;
    } catch (const dreampast::UsageError& e) {
        g_last_error = e.what();
        return DP_ERR_USAGE;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DP_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return DP_ERR_RUNTIME;
    }
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) return nullptr;
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void emit(char** out, const json& j) {
    if (out) *out = dup_string(j.dump(2));
}

dreampast::RunConfig parse(const dp_config* cfg) {
    if (!cfg) throw dreampast::UsageError("config handle is null");
    return dreampast::RunConfig::from_json(cfg->j);
}

std::string require(const char* s, const char* what) {
    if (!s || !*s) throw dreampast::UsageError(std::string(what) + " is required");
    return s;
}

}  // namespace

extern "C" {

const char* dp_version(void) {
#ifdef DREAMPAST_VERSION
    return DREAMPAST_VERSION;
#else
    return "0.0.0";
#endif
}

const char* dp_last_error(void) { return g_last_error.c_str(); }

void dp_string_free(char* s) { std::free(s); }

dp_config* dp_config_create(void) { return new dp_config{json::object()}; }

dp_config* dp_config_load(const char* path) {
    dp_config* out = nullptr;
    dp_status st = guarded([&] {
        json j = dreampast::load_json(require(path, "config path"));
        if (!j.is_object()) throw dreampast::UsageError("config must be a JSON object");
        dreampast::RunConfig::from_json(j);  // surface problems at load time
        out = new dp_config{std::move(j)};
    });
    return st == DP_OK ? out : nullptr;
}

dp_status dp_config_set(dp_config* cfg, const char* dotted_key, const char* value) {
    return guarded([&] {
        if (!cfg) throw dreampast::UsageError("config handle is null");
        // stage on a copy so a rejected override leaves the handle untouched
        json staged = cfg->j;
        dreampast::apply_override(staged, require(dotted_key, "key"),
                                  value ? std::string(value) : std::string());
        dreampast::RunConfig::from_json(staged);  // reject bad values immediately
        cfg->j = std::move(staged);
    });
}

char* dp_config_dump(const dp_config* cfg) {
    char* out = nullptr;
    guarded([&] { out = dup_string(parse(cfg).to_json().dump(2)); });
    return out;
}

void dp_config_free(dp_config* cfg) { delete cfg; }

dp_status dp_gen_corpus(const dp_config* cfg, const char* style, const char* out_dir,
                        const uint64_t* seed, int force) {
    return guarded([&] {
        auto rc = parse(cfg);
        auto st = dreampast::style_from_string(require(style, "style"));
        std::optional<uint64_t> seed_opt;
        if (seed) seed_opt = *seed;
        dreampast::cmd_gen_corpus(rc, st, out_dir ? dreampast::fs::path(out_dir) : dreampast::fs::path(),
                                  seed_opt, force != 0);
    });
}

dp_status dp_pretrain(const dp_config* cfg, const char* run_dir, int resume,
                      char** summary_json) {
    return guarded([&] {
        json summary = dreampast::cmd_pretrain(parse(cfg), require(run_dir, "run dir"), resume != 0);
        emit(summary_json, summary);
    });
}

dp_status dp_run_scenario(const dp_config* cfg, const char* run_dir, int resume,
                          char** result_json) {
    return guarded([&] {
        auto res = dreampast::cmd_run(parse(cfg), require(run_dir, "run dir"), resume != 0);
        emit(result_json, res.to_json());
    });
}

dp_status dp_eval(const dp_config* cfg, const char* const* checkpoints, size_t n,
                  char** result_json) {
    return guarded([&] {
        if (!checkpoints && n > 0) throw dreampast::UsageError("checkpoint list is null");
        std::vector<dreampast::fs::path> paths;
        for (size_t i = 0; i < n; ++i)
            paths.emplace_back(require(checkpoints[i], "checkpoint path"));
        emit(result_json, dreampast::cmd_eval(parse(cfg), paths));
    });
}

dp_status dp_report(const char* dir, const char* out_dir, char** summary_json) {
    return guarded([&] {
        json summary = dreampast::cmd_report(require(dir, "report dir"),
                                             out_dir ? dreampast::fs::path(out_dir)
                                                     : dreampast::fs::path());
        emit(summary_json, summary);
    });
}

double dp_hiou(double base, double novel) { return dreampast::hiou(base, novel); }

}  // extern "C"
