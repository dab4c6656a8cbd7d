// Episode-driven training loop: collect one episode into the replay buffer,
// then (once the buffer is deep enough) run one update round per episode --
// critic every learning episode, synchronized policy step on every
// policy_delay-th episode, temperature every learning episode, and a target
// hard/soft copy at the end of every learning episode.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "madp/agents.hpp"
#include "madp/config.hpp"
#include "madp/envs.hpp"
#include "madp/replay.hpp"

namespace madp::train {

// Raised when an update produces a non-finite loss; the message carries the
// offending batch statistics. The process-level driver maps it to a
// training-abort exit.
struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-episode call record, the schedule-conformance instrument.
struct EpisodeLog {
    long episode = 0;   // 1-based episode counter m
    long env_steps = 0; // cumulative steps after this episode
    bool learned = false;
    int critic_updates = 0;
    int policy_updates = 0;
    int temperature_updates = 0;
    int target_syncs = 0;
    // ordered operation names, e.g. "collect", "critic", "policy",
    // "elbo_refresh", "temperature", "targets"
    std::vector<std::string> calls;
};

// Assembles the synchronized policy objective on the tape:
//   mean over rows of [ -q(s, a_0)/alpha - sum_i elbo_i ]
// which expands to the prior + reverse/forward log-ratio form of the
// objective (the per-row elbo already carries the prior term). trajs[i] must
// have been sampled from policies[i] at the shared `states` batch. q_builder
// maps (tape, [state|joint action] node, joint action node) to a [B,1] value
// node -- the production critic or a hand-wired test stand-in.
using QBuilder = std::function<nd::Node(nd::Tape&, nd::Node sa, nd::Node action)>;
nd::Node policy_loss_node(nd::Tape& tape, const std::vector<diffusion::ScorePolicy*>& policies,
                          const std::vector<diffusion::DiffusionTrajectory>& trajs,
                          const nd::DenseArray& states, double alpha, const QBuilder& q_builder,
                          nd::Node* joint_elbo_out);

class Trainer {
  public:
    explicit Trainer(const RunConfig& cfg);
    Trainer(const RunConfig& cfg, std::unique_ptr<env::Env> injected_env);

    // One full episode of Algorithm-style training. Returns the call record.
    EpisodeLog run_episode();

    // Individual update entry points (public so oracle tests can drive them
    // directly against hand-built buffers).
    double update_critic(const std::vector<const Transition*>& batch);
    double update_policies(const std::vector<const Transition*>& batch);
    double update_temperature(const std::vector<double>& joint_elbos);
    void update_targets();

    // Mean/population-std of episode returns using the online (non-target)
    // policies in stochastic sampling mode. Uses a dedicated random stream so
    // evaluation never perturbs training.
    void evaluate(int n_episodes, double& mean, double& stddev);

    // Diagnostics accumulated since the previous drain; absent values are NaN.
    struct Diagnostics {
        double critic_loss, policy_loss, joint_elbo;
        bool has_critic = false, has_policy = false, has_elbo = false;
    };
    Diagnostics drain_diagnostics();

    AgentSet& agents() { return agents_; }
    env::Env& environment() { return *env_; }
    ReplayBuffer& buffer() { return buffer_; }
    env::CoverageGrid& coverage() { return coverage_; }
    long env_steps() const { return env_steps_; }
    long episodes_done() const { return episode_; }
    const RunConfig& config() const { return cfg_; }

  private:
    void collect_episode();
    nd::DenseArray sample_joint_action(const nd::DenseArray& state_row, bool use_target,
                                       nd::Rng& rng);
    std::uint64_t episode_seed(long episode) const;

    RunConfig cfg_;
    std::unique_ptr<env::Env> env_;
    AgentSet agents_;
    ReplayBuffer buffer_;
    env::CoverageGrid coverage_;

    nd::Rng rollout_rng_, batch_rng_, target_rng_, chain_rng_, temp_rng_;
    long env_steps_ = 0;
    long episode_ = 0;
    long eval_round_ = 0;

    // metric accumulators
    double critic_loss_sum_ = 0, policy_loss_sum_ = 0, elbo_sum_ = 0;
    long critic_loss_n_ = 0, policy_loss_n_ = 0, elbo_n_ = 0;
    std::vector<double> last_joint_elbos_; // detached rows from the last policy step
};

} // namespace madp::train
