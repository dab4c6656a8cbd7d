#include "madp/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "madp/checkpoint.hpp"

namespace madp::train {

namespace {

using nd::DenseArray;
using nd::Rng;

std::string fmt(double v) {
    if (std::isnan(v)) return "na";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

DenseArray AgentSetActor::act(const DenseArray& state, Rng& rng) {
    DenseArray srow({1, agents_.state_dim()});
    for (std::size_t c = 0; c < state.size(); ++c) srow[c] = state[c];
    const std::size_t d = agents_.action_dim();
    DenseArray joint({agents_.joint_action_dim()});
    for (int i = 0; i < agents_.n_agents(); ++i) {
        auto traj = diffusion::sample_chain(agents_.schedule(), srow, agents_.policy(i), rng);
        const DenseArray& a = traj.action();
        for (std::size_t c = 0; c < d; ++c)
            joint[static_cast<std::size_t>(i) * d + c] = std::min(1.0, std::max(-1.0, a[c]));
    }
    return joint;
}

double rollout_return(env::Env& env, Actor& actor, std::uint64_t reset_seed, Rng& rng) {
    DenseArray s = env.reset(reset_seed);
    double ret = 0.0;
    for (int t = 0; t < env.spec().episode_length; ++t) {
        DenseArray a = actor.act(s, rng);
        env::StepResult sr = env.step(a);
        ret += sr.r_team;
        s = sr.s_next;
        if (sr.done) break;
    }
    return ret;
}

EvalResult evaluate(env::Env& env, Actor& actor, int n_episodes, std::uint64_t seed) {
    if (n_episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
    EvalResult out;
    Rng rng = Rng::derive(seed, 1);
    for (int k = 0; k < n_episodes; ++k)
        out.returns.push_back(
            rollout_return(env, actor, Rng::splitmix64(seed + static_cast<std::uint64_t>(k)), rng));
    for (double r : out.returns) out.mean += r;
    out.mean /= static_cast<double>(out.returns.size());
    double var = 0.0;
    for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
    out.stddev = std::sqrt(var / static_cast<double>(out.returns.size()));
    return out;
}

EvalResult evaluate_checkpoint(const RunConfig& cfg, const std::string& ckpt_path,
                               int n_episodes, std::uint64_t seed) {
    auto env = env::make_env(cfg.env_name, cfg.n_agents, cfg.episode_length);
    AgentSet agents(env->spec(), cfg.trainer, cfg.seed);
    auto entries = agents.checkpoint_entries();
    nd::load_checkpoint(ckpt_path, entries);
    AgentSetActor actor(agents);
    return evaluate(*env, actor, n_episodes, seed);
}

int run(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream echo(fs::path(cfg.out_dir) / "config.echo");
        echo << render_config(cfg);
    }

    std::ofstream metrics(fs::path(cfg.out_dir) / "metrics.csv");
    metrics << "episode,env_steps,eval_return_mean,eval_return_std,joint_elbo_mean,alpha,"
               "critic_loss,policy_loss,coverage_fraction,wall_clock_s\n";
    std::ofstream timing(fs::path(cfg.out_dir) / "timing.csv");
    timing << "episode,env_steps,wall_clock_s\n";

    const auto t0 = std::chrono::steady_clock::now();
    try {
        Trainer trainer(cfg);
        for (long m = 1; m <= cfg.episodes; ++m) {
            trainer.run_episode();
            if (m % cfg.eval_interval == 0) {
                double mean = 0, sd = 0;
                trainer.evaluate(cfg.eval_episodes, mean, sd);
                auto d = trainer.drain_diagnostics();
                metrics << m << "," << trainer.env_steps() << "," << fmt(mean) << "," << fmt(sd)
                        << "," << fmt(d.joint_elbo) << "," << fmt(trainer.agents().alpha()) << ","
                        << fmt(d.critic_loss) << "," << fmt(d.policy_loss) << ","
                        << fmt(trainer.coverage().fraction()) << ",na\n";
                metrics.flush();
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                timing << m << "," << trainer.env_steps() << "," << fmt(secs) << "\n";
                timing.flush();
            }
        }

        auto entries = trainer.agents().checkpoint_entries();
        nd::save_checkpoint((fs::path(cfg.out_dir) / "final.ckpt").string(), entries);

        std::ofstream cov(fs::path(cfg.out_dir) / "coverage.csv");
        cov << "cell_i,cell_j\n";
        for (const auto& [i, j] : trainer.coverage().visited()) cov << i << "," << j << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::ofstream diag(fs::path(cfg.out_dir) / "abort.txt", std::ios::app);
        diag << e.what() << "\n";
        std::cerr << "training aborted: " << e.what() << "\n";
        return 2;
    }
}

} // namespace madp::train
