// Process entry point: loads the run config, applies command-line overrides,
// and either trains (writing the run artifacts) or evaluates a checkpoint.
// Exit status: 0 success, 1 configuration error, 2 training abort.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "madp/harness.hpp"
#include "madp/kernels.hpp"

int main(int argc, char** argv) {
    CLI::App app{"madp: diffusion-policy multi-agent RL trainer on built-in toy tasks"};

    std::string config_path;
    std::string out_dir;
    std::string eval_ckpt;
    long long seed = -1;
    bool serial = false;
    app.add_option("--config", config_path, "run configuration file")->required();
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out_dir, "override the output directory");
    app.add_option("--eval-only", eval_ckpt, "evaluate this checkpoint instead of training");
    app.add_flag("--serial", serial, "force the serial kernel implementations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    madp::train::RunConfig cfg;
    try {
        cfg = madp::train::load_config(config_path);
        if (seed >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.seed_set = true;
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (serial) cfg.parallel_kernels = false;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    madp::nd::kernels::set_parallel(cfg.parallel_kernels);

    if (!eval_ckpt.empty()) {
        try {
            auto r = madp::train::evaluate_checkpoint(cfg, eval_ckpt, cfg.eval_episodes, cfg.seed);
            std::cout << "eval_return_mean=" << r.mean << " eval_return_std=" << r.stddev << "\n";
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "evaluation error: " << e.what() << "\n";
            return 2;
        }
    }

    return madp::train::run(cfg);
}
