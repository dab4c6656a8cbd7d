#include "madp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "madp/kernels.hpp"

namespace madp::train {

namespace {

using nd::DenseArray;
using nd::Node;
using nd::Rng;
using nd::Tape;

double clip_unit(double v) { return std::min(1.0, std::max(-1.0, v)); }

// Gathers one field of a transition batch into a [B, dim] matrix.
template <typename Getter>
DenseArray gather(const std::vector<const Transition*>& batch, std::size_t dim, Getter get) {
    DenseArray m({batch.size(), dim});
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const DenseArray& src = get(*batch[r]);
        if (src.size() != dim) throw std::invalid_argument("batch row dimension mismatch");
        for (std::size_t c = 0; c < dim; ++c) m[r * dim + c] = src[c];
    }
    return m;
}

DenseArray concat_cols_vals(const DenseArray& a, const DenseArray& b) {
    const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
    if (b.rows() != rows) throw std::invalid_argument("concat_cols_vals: row count mismatch");
    DenseArray out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a[r * ca + c];
        for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = b[r * cb + c];
    }
    return out;
}

void set_col_block(DenseArray& dst, std::size_t col0, const DenseArray& src) {
    const std::size_t rows = dst.rows(), w = src.cols();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) dst[r * dst.cols() + col0 + c] = src[r * w + c];
}

DenseArray row_of(const DenseArray& m, std::size_t r) {
    DenseArray v({m.cols()});
    for (std::size_t c = 0; c < m.cols(); ++c) v[c] = m.at(r, c);
    return v;
}

std::string batch_stats(const std::vector<const Transition*>& batch) {
    double rmin = 1e300, rmax = -1e300, rsum = 0;
    for (const Transition* t : batch) {
        rmin = std::min(rmin, t->r_team);
        rmax = std::max(rmax, t->r_team);
        rsum += t->r_team;
    }
    std::ostringstream os;
    os << "batch n=" << batch.size() << " reward min=" << rmin << " max=" << rmax
       << " mean=" << rsum / static_cast<double>(batch.size());
    return os.str();
}

} // namespace

Node policy_loss_node(Tape& tape, const std::vector<diffusion::ScorePolicy*>& policies,
                      const std::vector<diffusion::DiffusionTrajectory>& trajs,
                      const DenseArray& states, double alpha, const QBuilder& q_builder,
                      Node* joint_elbo_out) {
    if (policies.size() != trajs.size() || policies.empty())
        throw std::invalid_argument("policy_loss_node: policy/trajectory count mismatch");
    if (!(alpha > 0.0)) throw std::invalid_argument("policy_loss_node: alpha must be positive");

    std::vector<Node> actions;
    Node elbo_total;
    for (std::size_t i = 0; i < policies.size(); ++i) {
        auto en = diffusion::elbo_entropy_node(tape, *policies[i], trajs[i]);
        actions.push_back(en.action);
        elbo_total = (i == 0) ? en.elbo : tape.add(elbo_total, en.elbo);
    }
    Node joint_a = actions.size() == 1 ? actions[0] : tape.concat_cols(actions);
    Node sa = tape.concat_cols({tape.constant(states), joint_a});
    Node q = q_builder(tape, sa, joint_a); // [B,1]
    Node inner = tape.sub(tape.scale(q, -1.0 / alpha), elbo_total);
    if (joint_elbo_out) *joint_elbo_out = elbo_total;
    return tape.mean_all(inner);
}

Trainer::Trainer(const RunConfig& cfg)
    : Trainer(cfg, env::make_env(cfg.env_name, cfg.n_agents, cfg.episode_length)) {}

Trainer::Trainer(const RunConfig& cfg, std::unique_ptr<env::Env> injected_env)
    : cfg_(cfg),
      env_(std::move(injected_env)),
      agents_(env_->spec(), cfg.trainer, cfg.seed),
      buffer_(cfg.trainer.buffer_capacity),
      coverage_(cfg.coverage_dim_i, cfg.coverage_dim_j, cfg.coverage_lo_i, cfg.coverage_hi_i,
                cfg.coverage_lo_j, cfg.coverage_hi_j, cfg.coverage_cell),
      rollout_rng_(Rng::derive(cfg.seed, 1)),
      batch_rng_(Rng::derive(cfg.seed, 2)),
      target_rng_(Rng::derive(cfg.seed, 3)),
      chain_rng_(Rng::derive(cfg.seed, 4)),
      temp_rng_(Rng::derive(cfg.seed, 5)) {
    nd::kernels::set_parallel(cfg.parallel_kernels);
}

std::uint64_t Trainer::episode_seed(long episode) const {
    return Rng::splitmix64(Rng::splitmix64(cfg_.seed + 0x1000) +
                           static_cast<std::uint64_t>(episode));
}

DenseArray Trainer::sample_joint_action(const DenseArray& state_row, bool use_target, Rng& rng) {
    const std::size_t d = agents_.action_dim();
    DenseArray joint({1, agents_.joint_action_dim()});
    for (int i = 0; i < agents_.n_agents(); ++i) {
        auto& pol = use_target ? agents_.target_policy(i) : agents_.policy(i);
        auto traj = diffusion::sample_chain(agents_.schedule(), state_row, pol, rng);
        const DenseArray& a = traj.action();
        for (std::size_t c = 0; c < d; ++c)
            joint[static_cast<std::size_t>(i) * d + c] = clip_unit(a[c]);
    }
    return joint;
}

void Trainer::collect_episode() {
    DenseArray s = env_->reset(episode_seed(episode_));
    coverage_.update(s);
    for (int t = 0; t < env_->spec().episode_length; ++t) {
        DenseArray a({1, agents_.joint_action_dim()});
        if (env_steps_ < cfg_.trainer.warmup_steps) {
            for (std::size_t c = 0; c < a.size(); ++c) a[c] = rollout_rng_.uniform(-1.0, 1.0);
        } else {
            DenseArray srow({1, agents_.state_dim()});
            for (std::size_t c = 0; c < s.size(); ++c) srow[c] = s[c];
            a = sample_joint_action(srow, /*use_target=*/true, rollout_rng_);
        }
        DenseArray a_flat({a.size()});
        for (std::size_t c = 0; c < a.size(); ++c) a_flat[c] = a[c];
        env::StepResult sr = env_->step(a_flat);
        ++env_steps_;
        coverage_.update(sr.s_next);
        buffer_.push(Transition{s, a_flat, sr.r_team, sr.s_next, sr.done, sr.time_limit});
        s = sr.s_next;
        if (sr.done) break;
    }
}

double Trainer::update_critic(const std::vector<const Transition*>& batch) {
    const std::size_t b = batch.size();
    const std::size_t sd = agents_.state_dim();
    const std::size_t ad = agents_.action_dim();
    const std::size_t jd = agents_.joint_action_dim();
    const TrainerConfig& tr = cfg_.trainer;

    DenseArray s = gather(batch, sd, [](const Transition& t) -> const DenseArray& { return t.s; });
    DenseArray a = gather(batch, jd, [](const Transition& t) -> const DenseArray& { return t.a; });
    DenseArray s_next =
        gather(batch, sd, [](const Transition& t) -> const DenseArray& { return t.s_next; });

    // bootstrap actions and the gradient-free entropy surrogate from the
    // delayed policies at the successor states
    DenseArray a_next({b, jd});
    std::vector<double> elbo_sum(b, 0.0);
    for (int i = 0; i < agents_.n_agents(); ++i) {
        auto traj = diffusion::sample_chain(agents_.schedule(), s_next, agents_.target_policy(i),
                                            target_rng_);
        DenseArray elbo = diffusion::elbo_entropy(traj, agents_.target_policy(i));
        for (std::size_t r = 0; r < b; ++r) elbo_sum[r] += elbo[r];
        set_col_block(a_next, static_cast<std::size_t>(i) * ad, traj.action());
    }

    const double alpha = agents_.alpha();
    Tape tape;
    auto pair = agents_.critic().forward_pair(tape, concat_cols_vals(s, a),
                                              concat_cols_vals(s_next, a_next));

    const auto& support = agents_.support();
    const std::size_t m = static_cast<std::size_t>(support.n_atoms);
    DenseArray targets({b, m});
    for (std::size_t r = 0; r < b; ++r) {
        const Transition& t = *batch[r];
        const bool eff_done = t.done && !(t.time_limit && tr.bootstrap_time_limit);
        const auto shifted =
            distq::bellman_target(t.r_team, eff_done, tr.gamma, alpha, elbo_sum[r], support);
        DenseArray proj =
            distq::project_to_support(shifted, row_of(pair.target_probs, r), support);
        for (std::size_t j = 0; j < m; ++j) targets[r * m + j] = proj[j];
    }

    Node loss = distq::critic_loss(tape, pair.pred_log_probs, targets, tr.xi);
    const double lv = tape.value(loss)[0];
    if (!std::isfinite(lv)) throw TrainAbort("critic loss non-finite; " + batch_stats(batch));
    tape.backward(loss);
    agents_.critic_opt().step();
    critic_loss_sum_ += lv;
    ++critic_loss_n_;
    return lv;
}

double Trainer::update_policies(const std::vector<const Transition*>& batch) {
    const std::size_t b = batch.size();
    const std::size_t sd = agents_.state_dim();
    DenseArray s = gather(batch, sd, [](const Transition& t) -> const DenseArray& { return t.s; });

    std::vector<diffusion::ScorePolicy*> policies;
    std::vector<diffusion::DiffusionTrajectory> trajs;
    for (int i = 0; i < agents_.n_agents(); ++i) {
        policies.push_back(&agents_.policy(i));
        trajs.push_back(diffusion::sample_chain(agents_.schedule(), s, agents_.policy(i),
                                                chain_rng_));
    }

    Tape tape;
    Node joint_elbo;
    auto& critic = agents_.critic();
    QBuilder qb = [&critic](Tape& tp, Node sa, Node) {
        Node lp = critic.log_probs_node(tp, sa, /*frozen=*/true);
        return critic.q_mean_node(tp, lp);
    };
    Node loss = policy_loss_node(tape, policies, trajs, s, agents_.alpha(), qb, &joint_elbo);
    const double lv = tape.value(loss)[0];
    if (!std::isfinite(lv)) throw TrainAbort("policy loss non-finite; " + batch_stats(batch));
    tape.backward(loss);
    agents_.actor_opt().step();

    const DenseArray& elbos = tape.value(joint_elbo); // [B,1], now detached values
    last_joint_elbos_.assign(elbos.data(), elbos.data() + b);
    for (std::size_t r = 0; r < b; ++r) {
        elbo_sum_ += elbos[r];
        ++elbo_n_;
    }
    policy_loss_sum_ += lv;
    ++policy_loss_n_;
    return lv;
}

double Trainer::update_temperature(const std::vector<double>& joint_elbos) {
    if (joint_elbos.empty())
        throw std::invalid_argument("update_temperature: need at least one surrogate value");
    double mean_elbo = 0.0;
    for (double v : joint_elbos) mean_elbo += v;
    mean_elbo /= static_cast<double>(joint_elbos.size());

    // Dual step on log alpha: the objective exp(log_alpha)*(mean_elbo -
    // target) pushes alpha up while the joint surrogate sits below the target
    // entropy and down once it exceeds it.
    Tape tape;
    Node la = tape.param(agents_.log_alpha_param());
    Node loss = tape.scale(tape.exp(la), mean_elbo - agents_.target_entropy());
    const double lv = tape.value(loss)[0];
    tape.backward(loss);
    agents_.alpha_opt().step();
    return lv;
}

void Trainer::update_targets() { agents_.update_target_policies(cfg_.trainer.rho); }

EpisodeLog Trainer::run_episode() {
    ++episode_;
    collect_episode();

    EpisodeLog log;
    log.episode = episode_;
    log.env_steps = env_steps_;
    log.calls.push_back("collect");
    if (buffer_.size() > static_cast<std::size_t>(cfg_.trainer.learning_starts)) {
        log.learned = true;
        const bool policy_turn = (episode_ % cfg_.trainer.policy_delay == 0);
        for (int u = 0; u < cfg_.trainer.updates_per_episode; ++u) {
            auto batch = buffer_.sample(cfg_.trainer.batch_size, batch_rng_);
            update_critic(batch);
            ++log.critic_updates;
            log.calls.push_back("critic");
            if (policy_turn) {
                update_policies(batch);
                ++log.policy_updates;
                log.calls.push_back("policy");
            } else {
                // fresh detached surrogate values at the batch states from the
                // current policies for the temperature step
                const std::size_t b = batch.size();
                DenseArray s = gather(batch, agents_.state_dim(),
                                      [](const Transition& t) -> const DenseArray& { return t.s; });
                last_joint_elbos_.assign(b, 0.0);
                for (int i = 0; i < agents_.n_agents(); ++i) {
                    auto traj = diffusion::sample_chain(agents_.schedule(), s, agents_.policy(i),
                                                        temp_rng_);
                    DenseArray elbo = diffusion::elbo_entropy(traj, agents_.policy(i));
                    for (std::size_t r = 0; r < b; ++r) last_joint_elbos_[r] += elbo[r];
                }
                for (std::size_t r = 0; r < b; ++r) {
                    elbo_sum_ += last_joint_elbos_[r];
                    ++elbo_n_;
                }
                log.calls.push_back("elbo_refresh");
            }
            update_temperature(last_joint_elbos_);
            ++log.temperature_updates;
            log.calls.push_back("temperature");
            update_targets();
            ++log.target_syncs;
            log.calls.push_back("targets");
        }
    }
    return log;
}

void Trainer::evaluate(int n_episodes, double& mean, double& stddev) {
    ++eval_round_;
    const std::uint64_t base =
        Rng::splitmix64(cfg_.seed + 0x2000 + static_cast<std::uint64_t>(eval_round_));
    Rng rng = Rng::derive(base, 1);
    auto eval_env = env_->clone();

    std::vector<double> returns;
    for (int k = 0; k < n_episodes; ++k) {
        DenseArray s = eval_env->reset(Rng::splitmix64(base + static_cast<std::uint64_t>(k)));
        double ret = 0.0;
        for (int t = 0; t < eval_env->spec().episode_length; ++t) {
            DenseArray srow({1, agents_.state_dim()});
            for (std::size_t c = 0; c < s.size(); ++c) srow[c] = s[c];
            DenseArray a = sample_joint_action(srow, /*use_target=*/false, rng);
            DenseArray a_flat({a.size()});
            for (std::size_t c = 0; c < a.size(); ++c) a_flat[c] = a[c];
            env::StepResult sr = eval_env->step(a_flat);
            ret += sr.r_team;
            s = sr.s_next;
            if (sr.done) break;
        }
        returns.push_back(ret);
    }

    mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    stddev = std::sqrt(var);
}

Trainer::Diagnostics Trainer::drain_diagnostics() {
    Diagnostics d{};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    d.critic_loss = critic_loss_n_ ? critic_loss_sum_ / static_cast<double>(critic_loss_n_) : nan;
    d.policy_loss = policy_loss_n_ ? policy_loss_sum_ / static_cast<double>(policy_loss_n_) : nan;
    d.joint_elbo = elbo_n_ ? elbo_sum_ / static_cast<double>(elbo_n_) : nan;
    d.has_critic = critic_loss_n_ > 0;
    d.has_policy = policy_loss_n_ > 0;
    d.has_elbo = elbo_n_ > 0;
    critic_loss_sum_ = policy_loss_sum_ = elbo_sum_ = 0.0;
    critic_loss_n_ = policy_loss_n_ = elbo_n_ = 0;
    return d;
}

} // namespace madp::train
