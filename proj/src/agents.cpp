#include "madp/agents.hpp"

#include <cmath>
#include <stdexcept>

namespace madp::train {

AgentSet::AgentSet(const env::EnvSpec& spec, const TrainerConfig& cfg, std::uint64_t master_seed)
    : n_agents_(spec.n_agents),
      state_dim_(spec.state_dim),
      action_dim_(spec.action_dim),
      schedule_(diffusion::cosine_schedule(cfg.diffusion_steps, cfg.beta_min, cfg.beta_max, cfg.eta)),
      support_(distq::support_atoms(cfg.v_max, cfg.n_atoms)),
      log_alpha_("temperature.log_alpha", nd::DenseArray::scalar(std::log(cfg.alpha_init))) {
    if (n_agents_ < 1) throw std::invalid_argument("AgentSet: need at least one agent");
    if (!(cfg.alpha_init > 0.0)) throw std::invalid_argument("AgentSet: alpha_init must be positive");

    std::vector<nd::Parameter*> actor_params;
    std::vector<nd::StateEntry> scratch;
    for (int i = 0; i < n_agents_; ++i) {
        auto rng = nd::Rng::derive(master_seed, 100 + static_cast<std::uint64_t>(i));
        const std::string prefix = "policy" + std::to_string(i);
        policies_.push_back(std::make_unique<diffusion::ScorePolicy>(
            i, state_dim_, action_dim_, cfg.policy_hidden, cfg.time_embed_dim, schedule_, prefix,
            rng));
        // The delayed copy starts identical to the online policy; its own rng
        // seed is irrelevant because blend_from overwrites everything.
        auto trng = nd::Rng::derive(master_seed, 200 + static_cast<std::uint64_t>(i));
        target_policies_.push_back(std::make_unique<diffusion::ScorePolicy>(
            i, state_dim_, action_dim_, cfg.policy_hidden, cfg.time_embed_dim, schedule_,
            "target_" + prefix, trng));
        target_policies_.back()->blend_from(*policies_.back(), 0.0);
        policies_.back()->collect(actor_params, scratch);
    }

    auto crng = nd::Rng::derive(master_seed, 300);
    critic_ = std::make_unique<distq::CriticNetwork>(state_dim_, joint_action_dim(),
                                                     cfg.critic_hidden, support_, "critic", crng);
    critic_->bn_config(cfg.bn_momentum, cfg.bn_warmup_steps);

    target_entropy_ = std::isnan(cfg.target_entropy)
                          ? 4.0 * static_cast<double>(joint_action_dim())
                          : cfg.target_entropy;

    nd::AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.beta1 = cfg.adam_beta1;
    acfg.beta2 = cfg.adam_beta2;
    acfg.clip_norm = cfg.clip_norm;
    actor_opt_ = std::make_unique<nd::Adam>(actor_params, acfg);

    std::vector<nd::Parameter*> critic_params;
    scratch.clear();
    critic_->collect(critic_params, scratch);
    critic_opt_ = std::make_unique<nd::Adam>(critic_params, acfg);

    nd::AdamConfig tcfg = acfg;
    tcfg.lr = cfg.effective_lr_alpha();
    tcfg.clip_norm = 0.0; // scalar dual variable, no norm clipping
    alpha_opt_ = std::make_unique<nd::Adam>(std::vector<nd::Parameter*>{&log_alpha_}, tcfg);
}

double AgentSet::alpha() const { return std::exp(log_alpha_.value[0]); }

void AgentSet::update_target_policies(double rho) {
    for (int i = 0; i < n_agents_; ++i)
        target_policies_[static_cast<std::size_t>(i)]->blend_from(
            *policies_[static_cast<std::size_t>(i)], rho);
}

std::vector<nd::StateEntry> AgentSet::checkpoint_entries() {
    std::vector<nd::Parameter*> params;
    std::vector<nd::StateEntry> entries;
    for (auto& p : policies_) p->collect(params, entries);
    for (auto& p : target_policies_) p->collect(params, entries);
    critic_->collect(params, entries);
    entries.push_back({log_alpha_.id, &log_alpha_.value});
    return entries;
}

} // namespace madp::train
