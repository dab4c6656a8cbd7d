// Run orchestration: drives the trainer for the configured number of
// episodes, writes the run artifacts (metrics.csv, timing.csv, config.echo,
// coverage.csv, final.ckpt), and exposes checkpoint-based evaluation. The
// wall-clock column of metrics.csv is always the marker `na` so the file is a
// pure function of (config, seed); measured timings go to timing.csv.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "madp/config.hpp"
#include "madp/envs.hpp"
#include "madp/trainer.hpp"

namespace madp::train {

// Action source for evaluation rollouts.
struct Actor {
    virtual ~Actor() = default;
    // state is the flat global state; returns a flat joint action.
    virtual nd::DenseArray act(const nd::DenseArray& state, nd::Rng& rng) = 0;
};

// Samples each agent's online diffusion policy and clips to the action box.
class AgentSetActor : public Actor {
  public:
    explicit AgentSetActor(AgentSet& agents) : agents_(agents) {}
    nd::DenseArray act(const nd::DenseArray& state, nd::Rng& rng) override;

  private:
    AgentSet& agents_;
};

// Pass-through to the environment's scripted greedy controller; the
// reference actor for evaluation plumbing tests.
class ScriptedActor : public Actor {
  public:
    explicit ScriptedActor(env::Env& live_env) : env_(live_env) {}
    nd::DenseArray act(const nd::DenseArray&, nd::Rng&) override {
        return env_.scripted_action();
    }

  private:
    env::Env& env_;
};

double rollout_return(env::Env& env, Actor& actor, std::uint64_t reset_seed, nd::Rng& rng);

struct EvalResult {
    double mean = 0.0;
    double stddev = 0.0; // population standard deviation (n = 1 gives 0)
    std::vector<double> returns;
};
EvalResult evaluate(env::Env& env, Actor& actor, int n_episodes, std::uint64_t seed);

// Rebuilds the agent set for cfg, loads the checkpoint into it, and
// evaluates with the online policies.
EvalResult evaluate_checkpoint(const RunConfig& cfg, const std::string& ckpt_path,
                               int n_episodes, std::uint64_t seed);

// Full training run; returns 0 on success, 2 on training abort (partial
// artifacts are retained and the diagnostic is appended to abort.txt).
int run(const RunConfig& cfg);

} // namespace madp::train
