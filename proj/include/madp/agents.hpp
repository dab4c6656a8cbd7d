// Learner state for one cooperative team: per-agent diffusion score policies
// (plus delayed copies used when sampling bootstrap actions), a shared
// categorical-value critic over the joint state-action, and a learned entropy
// temperature.  All trainable parameters live here; the trainer only wires
// batches through them.
#pragma once

#include <memory>
#include <vector>

#include "madp/config.hpp"
#include "madp/diffusion.hpp"
#include "madp/distq.hpp"
#include "madp/envs.hpp"
#include "madp/optim.hpp"

namespace madp::train {

class AgentSet {
  public:
    AgentSet(const env::EnvSpec& spec, const TrainerConfig& cfg, std::uint64_t master_seed);

    int n_agents() const { return n_agents_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t joint_action_dim() const { return action_dim_ * static_cast<std::size_t>(n_agents_); }

    const diffusion::NoiseSchedule& schedule() const { return schedule_; }
    diffusion::ScorePolicy& policy(int i) { return *policies_[static_cast<std::size_t>(i)]; }
    diffusion::ScorePolicy& target_policy(int i) {
        return *target_policies_[static_cast<std::size_t>(i)];
    }
    distq::CriticNetwork& critic() { return *critic_; }
    const distq::ValueSupport& support() const { return support_; }

    double alpha() const;
    double log_alpha() const { return log_alpha_.value[0]; }
    nd::Parameter& log_alpha_param() { return log_alpha_; }
    double target_entropy() const { return target_entropy_; }

    nd::Adam& actor_opt() { return *actor_opt_; }
    nd::Adam& critic_opt() { return *critic_opt_; }
    nd::Adam& alpha_opt() { return *alpha_opt_; }

    // rho-blend of online policy parameters into the delayed copies
    // (rho = 0 is a hard overwrite with the online values).
    void update_target_policies(double rho);

    // All persistent state (online + delayed policies, critic with batch-norm
    // statistics, temperature) for saving and restoring.
    std::vector<nd::StateEntry> checkpoint_entries();

  private:
    int n_agents_ = 0;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    diffusion::NoiseSchedule schedule_;
    distq::ValueSupport support_;
    std::vector<std::unique_ptr<diffusion::ScorePolicy>> policies_;
    std::vector<std::unique_ptr<diffusion::ScorePolicy>> target_policies_;
    std::unique_ptr<distq::CriticNetwork> critic_;
    nd::Parameter log_alpha_;
    double target_entropy_ = 0.0;
    std::unique_ptr<nd::Adam> actor_opt_;
    std::unique_ptr<nd::Adam> critic_opt_;
    std::unique_ptr<nd::Adam> alpha_opt_;
};

} // namespace madp::train
