#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mdfg/config.hpp"
#include "mdfg/parallel.hpp"
#include "mdfg/pipeline.hpp"

namespace {

namespace pl = mdfg::pipeline;
using Stage = std::function<void(const mdfg::config::RunConfig&, const std::filesystem::path&)>;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out = "mdfg_out";
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("mdfg");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("MDFG_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

int exit_code(mdfg::ErrorCategory c) {
    switch (c) {
        case mdfg::ErrorCategory::config: return 2;
        case mdfg::ErrorCategory::data: return 3;
        case mdfg::ErrorCategory::numeric: return 4;
    }
    return 1;
}

int run_stage(const std::string& name, const Stage& stage, const Options& opt) {
    try {
        auto cfg = opt.config_path.empty() ? mdfg::config::RunConfig{} : mdfg::config::load(opt.config_path);
        if (opt.seed) cfg.apply_seed(*opt.seed);
        cfg.validate();
        mdfg::set_thread_count(opt.threads);
        stage(cfg, opt.out);
        return 0;
    } catch (const mdfg::Error& e) {
        spdlog::error("{}: {}", name, e.what());
        return exit_code(e.category());
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}: {}", name, e.what());
        return 3;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", name, e.what());
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    mdfg::tune_allocator();
    CLI::App app{"Multi-domain feature guided contrastive detector for radar sea clutter"};
    app.require_subcommand(1);

    const std::map<std::string, std::pair<std::string, Stage>> stages = {
        {"synth-gen", {"generate the synthetic scenario (RDS file)", pl::stage_synth}},
        {"extract-features", {"segment, split, and compute shallow features", pl::stage_features}},
        {"gini-weights", {"Gini importance weights of the shallow features", pl::stage_gini}},
        {"pretrain", {"contrastive pre-training", pl::stage_pretrain}},
        {"finetune", {"train head and classifier on the frozen encoder", pl::stage_finetune}},
        {"calibrate", {"threshold for the preset false-alarm rate", pl::stage_calibrate}},
        {"evaluate", {"score the test split and write the metrics report", pl::stage_evaluate}},
        {"ablate-alpha", {"pretrain/finetune/evaluate for each alpha in the sweep", pl::stage_ablate}},
        {"pipeline", {"run every stage from synth-gen to evaluate", pl::run_all}},
    };

    Options opt;
    std::uint64_t seed = 0;
    std::string chosen;
    for (const auto& [name, entry] : stages) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", opt.config_path, "run configuration (INI)");
        sub->add_option("--seed", seed, "master seed replacing the seeds in the config");
        sub->add_option("--threads", opt.threads, "worker thread cap")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", opt.out, "artifact directory");
        sub->callback([&chosen, name = name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed") > 0) opt.seed = seed;
    }
    return run_stage(chosen, stages.at(chosen).second, opt);
}
