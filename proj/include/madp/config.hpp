#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace madp::train {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Algorithm hyperparameters. Defaults target full-scale benchmarks; the shipped
// desk-scale config files override the collection/computation sizes.
struct TrainerConfig {
    // collection and update schedule
    long warmup_steps = 60000;    // env steps of uniform-random collection
    long learning_starts = 5000;  // minimum buffer size before any update
    double rho = 0.0;             // target policy blend (0 = hard copy)
    double gamma = 0.99;
    int policy_delay = 3;         // episodes between synchronized policy updates
    std::size_t batch_size = 256;
    std::size_t buffer_capacity = 1000000;
    int updates_per_episode = 1;  // update-to-data ratio knob
    bool bootstrap_time_limit = true;

    // temperature
    double alpha_init = 1.0;
    // NaN = auto (4 * joint action dimension)
    double target_entropy = std::numeric_limits<double>::quiet_NaN();

    // distributional critic
    int n_atoms = 101;
    double v_max = 25.0;
    double xi = 0.005;
    std::vector<std::size_t> critic_hidden = {128, 128};

    // batch normalization
    double bn_momentum = 0.99;
    double bn_warmup_steps = 100000;

    // diffusion policy
    int diffusion_steps = 8;
    double beta_min = 1e-3;
    double beta_max = 0.9999;
    double eta = 1.0;
    std::vector<std::size_t> policy_hidden = {64, 64};
    std::size_t time_embed_dim = 16;

    // optimizers
    double lr = 3e-4;
    double lr_alpha = -1.0; // < 0 = use lr
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double clip_norm = 1.0;

    double effective_lr_alpha() const { return lr_alpha > 0.0 ? lr_alpha : lr; }
};

struct RunConfig {
    // environment
    std::string env_name = "coopnav";
    int n_agents = 2;
    int episode_length = 25;

    // run orchestration
    std::uint64_t seed = 0;
    bool seed_set = false;
    long episodes = 0;
    long eval_interval = 10; // episodes between metric rows
    int eval_episodes = 10;
    std::string out_dir = "run_out";
    bool parallel_kernels = true;

    // coverage grid over two state dimensions
    std::size_t coverage_dim_i = 0, coverage_dim_j = 1;
    double coverage_lo_i = -2.0, coverage_hi_i = 2.0;
    double coverage_lo_j = -2.0, coverage_hi_j = 2.0;
    double coverage_cell = 0.5;

    TrainerConfig trainer;
};

// Line-oriented `key = value` format with `env.`, `trainer.`, and `eval.`
// prefixes; '#' starts a comment. Unknown keys, unparsable values, and
// invariant violations raise ConfigError naming the line. The seed is the
// one mandatory field.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

// Full effective configuration, one key per line -- the config.echo payload.
// The output is itself loadable.
std::string render_config(const RunConfig& cfg);

} // namespace madp::train
