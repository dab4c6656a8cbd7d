// End-to-end checks of the episode-driven training loop: warmup collection,
// the replay gate, each of the three update rules against hand-computed
// oracles, target blending, and the per-episode update schedule.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "madp/config.hpp"
#include "madp/diffusion.hpp"
#include "madp/distq.hpp"
#include "madp/envs.hpp"
#include "madp/trainer.hpp"

using madp::train::EpisodeLog;
using madp::train::RunConfig;
using madp::train::Trainer;
using madp::train::Transition;
using madp::nd::DenseArray;
using madp::nd::Node;
using madp::nd::Parameter;
using madp::nd::Rng;
using madp::nd::StateEntry;
using madp::nd::Tape;

namespace {

// Minimal deterministic environment for injecting controlled transition data:
// the state never moves, every step pays `reward`, episodes end on the fixed
// horizon only.
class StubEnv : public madp::env::Env {
public:
    StubEnv(int n_agents, std::size_t state_dim, std::size_t action_dim, int episode_length,
            double reward)
        : reward_(reward) {
        spec_.name = "stub";
        spec_.n_agents = n_agents;
        spec_.state_dim = state_dim;
        spec_.action_dim = action_dim;
        spec_.episode_length = episode_length;
    }

    const madp::env::EnvSpec& spec() const override { return spec_; }

    DenseArray reset(std::uint64_t) override {
        t_ = 0;
        return state();
    }

    madp::env::StepResult step(const DenseArray&) override {
        ++t_;
        madp::env::StepResult out;
        out.s_next = state();
        out.r_team = reward_;
        out.done = (t_ >= spec_.episode_length);
        out.time_limit = out.done;
        return out;
    }

    DenseArray scripted_action() const override {
        return DenseArray({spec_.action_dim * static_cast<std::size_t>(spec_.n_agents)});
    }

    std::unique_ptr<madp::env::Env> clone() const override {
        return std::make_unique<StubEnv>(*this);
    }

private:
    DenseArray state() const {
        DenseArray s({spec_.state_dim});
        for (std::size_t i = 0; i < spec_.state_dim; ++i)
            s[i] = 0.1 * static_cast<double>(i + 1) * (i % 2 == 0 ? 1.0 : -1.0);
        return s;
    }

    madp::env::EnvSpec spec_;
    double reward_;
    int t_ = 0;
};

// Small-network base configuration shared by the loop tests.
RunConfig small_cfg(std::uint64_t seed) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.seed_set = true;
    cfg.env_name = "coopnav";
    cfg.n_agents = 2;
    cfg.episode_length = 25;
    cfg.trainer.buffer_capacity = 20000;
    cfg.trainer.batch_size = 16;
    cfg.trainer.critic_hidden = {16, 16};
    cfg.trainer.policy_hidden = {16, 16};
    cfg.trainer.diffusion_steps = 2;
    cfg.trainer.time_embed_dim = 4;
    cfg.trainer.n_atoms = 51;
    return cfg;
}

double log_normal_1d(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * M_PI * var) - (x - mean) * (x - mean) / (2.0 * var);
}

std::vector<Parameter*> policy_params(madp::train::AgentSet& agents) {
    std::vector<Parameter*> params;
    std::vector<StateEntry> state;
    for (int i = 0; i < agents.n_agents(); ++i) agents.policy(i).collect(params, state);
    return params;
}

std::vector<Parameter*> critic_params(madp::train::AgentSet& agents) {
    std::vector<Parameter*> params;
    std::vector<StateEntry> state;
    agents.critic().collect(params, state);
    return params;
}

bool all_grads_zero(const std::vector<Parameter*>& params) {
    for (const Parameter* p : params)
        for (std::size_t k = 0; k < p->grad.size(); ++k)
            if (p->grad[k] != 0.0) return false;
    return true;
}

bool all_finite(const std::vector<Parameter*>& params) {
    for (const Parameter* p : params)
        for (std::size_t k = 0; k < p->value.size(); ++k)
            if (!std::isfinite(p->value[k])) return false;
    return true;
}

// Kolmogorov-Smirnov distance of a sample against U(-1, 1).
double ks_vs_uniform(std::vector<double> vals) {
    std::sort(vals.begin(), vals.end());
    const double n = static_cast<double>(vals.size());
    double d = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double f = (vals[i] + 1.0) / 2.0;
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

} // namespace

TEST_CASE("warmup collection draws per-dimension uniform actions on [-1,1]") {
    RunConfig cfg = small_cfg(11);
    cfg.trainer.warmup_steps = 1000000000;   // always uniform
    cfg.trainer.learning_starts = 1000000000; // never learn
    Trainer trainer(cfg);

    for (int m = 0; m < 400; ++m) trainer.run_episode();
    REQUIRE(trainer.buffer().size() == 10000);

    const std::size_t jd = trainer.agents().joint_action_dim();
    REQUIRE(jd == 4);
    for (std::size_t c = 0; c < jd; ++c) {
        std::vector<double> vals;
        vals.reserve(10000);
        for (std::size_t i = 0; i < 10000; ++i) vals.push_back(trainer.buffer().at(i).a[c]);
        const double d = ks_vs_uniform(std::move(vals));
        INFO("action dimension ", c, " KS distance ", d);
        CHECK(d < 0.02);
    }
}

TEST_CASE("each fixed-horizon episode contributes exactly 25 transitions") {
    RunConfig cfg = small_cfg(3);
    cfg.trainer.warmup_steps = 1000000000;
    cfg.trainer.learning_starts = 1000000000;
    Trainer trainer(cfg);

    EpisodeLog log = trainer.run_episode();
    CHECK(log.episode == 1);
    CHECK(log.env_steps == 25);
    CHECK(trainer.buffer().size() == 25);
    CHECK(trainer.env_steps() == 25);

    log = trainer.run_episode();
    CHECK(log.episode == 2);
    CHECK(log.env_steps == 50);
    CHECK(trainer.buffer().size() == 50);
}

TEST_CASE("identically seeded trainers collect bitwise-identical buffers") {
    RunConfig cfg = small_cfg(77);
    cfg.trainer.warmup_steps = 1000000000;
    cfg.trainer.learning_starts = 1000000000;
    Trainer t1(cfg);
    Trainer t2(cfg);
    for (int m = 0; m < 3; ++m) {
        t1.run_episode();
        t2.run_episode();
    }
    REQUIRE(t1.buffer().size() == 75);
    REQUIRE(t2.buffer().size() == 75);
    for (std::size_t i = 0; i < 75; ++i) {
        const Transition& a = t1.buffer().at(i);
        const Transition& b = t2.buffer().at(i);
        for (std::size_t k = 0; k < a.s.size(); ++k) CHECK(a.s[k] == b.s[k]);
        for (std::size_t k = 0; k < a.a.size(); ++k) CHECK(a.a[k] == b.a[k]);
        for (std::size_t k = 0; k < a.s_next.size(); ++k) CHECK(a.s_next[k] == b.s_next[k]);
        CHECK(a.r_team == b.r_team);
        CHECK(a.done == b.done);
        CHECK(a.time_limit == b.time_limit);
    }
}

TEST_CASE("critic value updates converge to the known fixed point at gamma = 0") {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.seed_set = true;
    cfg.trainer.gamma = 0.0;
    cfg.trainer.critic_hidden = {32, 32};
    cfg.trainer.policy_hidden = {16, 16};
    cfg.trainer.diffusion_steps = 2;
    cfg.trainer.time_embed_dim = 4;
    Trainer trainer(cfg, std::make_unique<StubEnv>(1, 3, 1, 2, 1.0));

    // One transition with constant reward 1 repeated across the batch; with
    // gamma = 0 the value target is exactly 1 regardless of bootstrap terms.
    Transition t;
    t.s = DenseArray({3});
    t.s[0] = 0.1;
    t.s[1] = -0.2;
    t.s[2] = 0.3;
    t.a = DenseArray({1});
    t.a[0] = 0.3;
    t.r_team = 1.0;
    t.s_next = t.s;
    t.done = false;
    t.time_limit = false;

    std::vector<const Transition*> batch(8, &t);
    for (int k = 0; k < 2000; ++k) trainer.update_critic(batch);

    auto& critic = trainer.agents().critic();
    critic.set_mode(madp::nd::BnMode::evaluation);
    DenseArray sa({1, 4});
    sa[0] = t.s[0];
    sa[1] = t.s[1];
    sa[2] = t.s[2];
    sa[3] = t.a[0];
    DenseArray probs = critic.probs(sa);
    const double q = madp::distq::q_mean(probs, trainer.agents().support());
    INFO("expected value after fitting: ", q);
    CHECK(q == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("critic and policy updates do not leak gradients into each other") {
    RunConfig cfg = small_cfg(21);
    Trainer trainer(cfg);

    Transition t;
    t.s = DenseArray({trainer.agents().state_dim()});
    for (std::size_t k = 0; k < t.s.size(); ++k) t.s[k] = 0.05 * static_cast<double>(k);
    t.a = DenseArray({trainer.agents().joint_action_dim()});
    for (std::size_t k = 0; k < t.a.size(); ++k) t.a[k] = (k % 2 == 0) ? 0.4 : -0.3;
    t.r_team = -1.5;
    t.s_next = t.s;
    std::vector<const Transition*> batch(6, &t);

    auto pol_params = policy_params(trainer.agents());
    auto cri_params = critic_params(trainer.agents());

    // Snapshot every critic-side array (weights and normalization statistics).
    std::vector<Parameter*> cp;
    std::vector<StateEntry> cstate;
    trainer.agents().critic().collect(cp, cstate);
    std::vector<std::vector<double>> state_before;
    for (const StateEntry& e : cstate)
        state_before.emplace_back(e.arr->data(), e.arr->data() + e.arr->size());
    std::vector<std::vector<double>> values_before;
    for (const Parameter* p : cp)
        values_before.emplace_back(p->value.data(), p->value.data() + p->value.size());

    // Policy update first: the critic must stay bitwise frozen.
    trainer.update_policies(batch);
    CHECK(all_grads_zero(cri_params));
    CHECK(trainer.agents().critic_opt().steps() == 0);
    CHECK(trainer.agents().actor_opt().steps() == 1);
    for (std::size_t i = 0; i < cstate.size(); ++i) {
        const DenseArray& arr = *cstate[i].arr;
        for (std::size_t k = 0; k < arr.size(); ++k) {
            if (arr[k] != state_before[i][k]) {
                FAIL("critic state entry ", cstate[i].id, " changed during a policy update");
            }
        }
    }
    for (std::size_t i = 0; i < cp.size(); ++i)
        for (std::size_t k = 0; k < cp[i]->value.size(); ++k)
            CHECK(cp[i]->value[k] == values_before[i][k]);

    // Critic update second: policy parameters must keep zero gradients and
    // must not be stepped.
    trainer.update_critic(batch);
    CHECK(all_grads_zero(pol_params));
    CHECK(trainer.agents().critic_opt().steps() == 1);
    CHECK(trainer.agents().actor_opt().steps() == 1);
}

TEST_CASE("single-step policy loss matches the hand-expanded closed form") {
    // One agent, one denoising step, one-dimensional action: the loss is
    //   -q(s, a_0)/alpha - [ log N(a_1; (1-b)a_0, 2b) - log N(a_0; mu_rev, 2b)
    //                        - log N(a_1; 0, 1) ]
    // with b the single mid-grid noise level and
    // mu_rev = a_1 + (b*a_1 + 2b*f(a_1, s, 1))  (unit step, eta = 1).
    RunConfig cfg;
    cfg.seed = 9;
    cfg.seed_set = true;
    cfg.trainer.diffusion_steps = 1;
    cfg.trainer.beta_min = 0.2;
    cfg.trainer.beta_max = 0.6; // single grid point at the midpoint: b = 0.4
    cfg.trainer.eta = 1.0;
    cfg.trainer.alpha_init = 0.7;
    cfg.trainer.policy_hidden = {16, 16};
    cfg.trainer.time_embed_dim = 4;
    Trainer trainer(cfg, std::make_unique<StubEnv>(1, 2, 1, 2, 0.0));
    auto& agents = trainer.agents();
    auto& policy = agents.policy(0);

    DenseArray states({1, 2});
    states[0] = 0.3;
    states[1] = -0.8;
    Rng rng = Rng::derive(123, 9);
    auto traj = madp::diffusion::sample_chain(agents.schedule(), states, policy, rng);
    REQUIRE(traj.chain.size() == 2);

    const double a1 = traj.chain[0][0];
    const double a0 = traj.chain[1][0];
    const double b = 0.4;

    DenseArray a1_row({1, 1});
    a1_row[0] = a1;
    const double f = policy.score(a1_row, states, 1.0)[0];

    const double log_fwd = log_normal_1d(a1, (1.0 - b) * a0, 2.0 * b);
    const double mu_rev = a1 + b * a1 + 2.0 * b * f;
    const double log_rev = log_normal_1d(a0, mu_rev, 2.0 * b);
    const double log_prior = log_normal_1d(a1, 0.0, 1.0);
    const double elbo = log_fwd - log_rev - log_prior;

    // q(s, a) = 3*a - 1, alpha = 0.7
    const double expected = -(3.0 * a0 - 1.0) / 0.7 - elbo;

    Tape tape;
    std::vector<madp::diffusion::ScorePolicy*> pols{&policy};
    std::vector<madp::diffusion::DiffusionTrajectory> trajs{traj};
    Node joint_elbo;
    Node loss = madp::train::policy_loss_node(
        tape, pols, trajs, states, 0.7,
        [](Tape& tp, Node, Node action) {
            return tp.add_scalar(tp.scale(action, 3.0), -1.0);
        },
        &joint_elbo);

    CHECK(tape.value(loss)[0] == doctest::Approx(expected).epsilon(1e-10));
    CHECK(tape.value(joint_elbo)[0] == doctest::Approx(elbo).epsilon(1e-10));
}

TEST_CASE("policy loss surface rejects invalid inputs") {
    RunConfig cfg;
    cfg.seed = 4;
    cfg.seed_set = true;
    cfg.trainer.policy_hidden = {16, 16};
    cfg.trainer.diffusion_steps = 2;
    cfg.trainer.time_embed_dim = 4;
    Trainer trainer(cfg, std::make_unique<StubEnv>(1, 2, 1, 2, 0.0));
    auto& agents = trainer.agents();

    DenseArray states({1, 2});
    Rng rng = Rng::derive(5, 5);
    auto traj = madp::diffusion::sample_chain(agents.schedule(), states, agents.policy(0), rng);
    std::vector<madp::diffusion::ScorePolicy*> pols{&agents.policy(0)};
    std::vector<madp::diffusion::DiffusionTrajectory> trajs{traj};
    auto qb = [](Tape& tp, Node, Node action) { return tp.scale(action, 1.0); };

    Tape tape;
    CHECK_THROWS_WITH_AS(madp::train::policy_loss_node(tape, pols, trajs, states, 0.0, qb, nullptr),
                         doctest::Contains("alpha"), std::invalid_argument);
    std::vector<madp::diffusion::DiffusionTrajectory> two_trajs{traj, traj};
    CHECK_THROWS_WITH_AS(
        madp::train::policy_loss_node(tape, pols, two_trajs, states, 0.5, qb, nullptr),
        doctest::Contains("mismatch"), std::invalid_argument);
}

TEST_CASE("the prior term of the entropy surrogate carries no parameter gradient") {
    RunConfig cfg;
    cfg.seed = 31;
    cfg.seed_set = true;
    cfg.trainer.policy_hidden = {16, 16};
    cfg.trainer.diffusion_steps = 3;
    cfg.trainer.time_embed_dim = 4;
    cfg.trainer.beta_max = 0.9; // beta * (1/3) < 1
    Trainer trainer(cfg, std::make_unique<StubEnv>(1, 2, 1, 2, 0.0));
    auto& agents = trainer.agents();
    auto& policy = agents.policy(0);
    auto params = policy_params(agents);

    DenseArray states({4, 2});
    for (std::size_t k = 0; k < states.size(); ++k)
        states[k] = 0.1 * static_cast<double>(k) - 0.3;
    Rng rng = Rng::derive(77, 3);
    auto traj = madp::diffusion::sample_chain(agents.schedule(), states, policy, rng);

    {
        Tape tape;
        auto en = madp::diffusion::elbo_entropy_node(tape, policy, traj);
        tape.backward(tape.mean_all(en.prior_logp));
        CHECK(all_grads_zero(params));
    }
    {
        // contrast: the full surrogate does reach the parameters
        Tape tape;
        auto en = madp::diffusion::elbo_entropy_node(tape, policy, traj);
        tape.backward(tape.mean_all(en.elbo));
        CHECK_FALSE(all_grads_zero(params));
        agents.actor_opt().zero_grad();
    }
}

TEST_CASE("policy gradient ascent climbs a quadratic action bowl") {
    // q(s, a) = -(a - 0.4)^2 with a small temperature: after 2000 synchronized
    // policy steps the sampled action mean must sit within 0.1 of the peak.
    RunConfig cfg;
    cfg.seed = 13;
    cfg.seed_set = true;
    cfg.trainer.diffusion_steps = 4;
    cfg.trainer.time_embed_dim = 8;
    cfg.trainer.policy_hidden = {32, 32};
    cfg.trainer.alpha_init = 0.05;
    cfg.trainer.lr = 3e-3;
    Trainer trainer(cfg, std::make_unique<StubEnv>(1, 2, 1, 2, 0.0));
    auto& agents = trainer.agents();
    auto& policy = agents.policy(0);
    const double astar = 0.4;

    DenseArray states({64, 2});
    for (std::size_t r = 0; r < 64; ++r) {
        states[r * 2 + 0] = 0.3;
        states[r * 2 + 1] = -0.8;
    }

    Rng rng = Rng::derive(999, 1);
    auto qb = [astar](Tape& tp, Node, Node action) {
        return tp.scale(tp.square(tp.add_scalar(action, -astar)), -1.0);
    };
    std::vector<madp::diffusion::ScorePolicy*> pols{&policy};
    for (int k = 0; k < 2000; ++k) {
        std::vector<madp::diffusion::DiffusionTrajectory> trajs;
        trajs.push_back(madp::diffusion::sample_chain(agents.schedule(), states, policy, rng));
        Tape tape;
        Node loss = madp::train::policy_loss_node(tape, pols, trajs, states, 0.05, qb, nullptr);
        tape.backward(loss);
        agents.actor_opt().step();
    }

    DenseArray wide({512, 2});
    for (std::size_t r = 0; r < 512; ++r) {
        wide[r * 2 + 0] = 0.3;
        wide[r * 2 + 1] = -0.8;
    }
    auto traj = madp::diffusion::sample_chain(agents.schedule(), wide, policy, rng);
    double mean = 0.0;
    for (std::size_t r = 0; r < 512; ++r) mean += traj.action()[r];
    mean /= 512.0;
    INFO("sampled action mean after training: ", mean);
    CHECK(std::abs(mean - astar) < 0.1);
}

TEST_CASE("temperature dual steps move alpha against the entropy gap") {
    auto make = [](double target) {
        RunConfig cfg;
        cfg.seed = 17;
        cfg.seed_set = true;
        cfg.trainer.policy_hidden = {16, 16};
        cfg.trainer.diffusion_steps = 2;
        cfg.trainer.time_embed_dim = 4;
        cfg.trainer.target_entropy = target;
        return std::make_unique<Trainer>(cfg, std::make_unique<StubEnv>(1, 2, 1, 2, 0.0));
    };

    SUBCASE("surrogate exactly at the target leaves alpha bitwise unchanged") {
        auto trainer = make(2.0);
        const double before = trainer->agents().alpha();
        for (int k = 0; k < 5; ++k) trainer->update_temperature({2.0, 2.0});
        CHECK(trainer->agents().alpha() == before);
    }
    SUBCASE("surrogate below the target strictly raises alpha") {
        auto trainer = make(2.0);
        double prev = trainer->agents().alpha();
        for (int k = 0; k < 100; ++k) {
            trainer->update_temperature({1.0, 1.2, 0.8});
            const double cur = trainer->agents().alpha();
            CHECK(cur > prev);
            prev = cur;
        }
    }
    SUBCASE("surrogate above the target strictly lowers alpha") {
        auto trainer = make(2.0);
        double prev = trainer->agents().alpha();
        for (int k = 0; k < 100; ++k) {
            trainer->update_temperature({3.0, 2.9, 3.1});
            const double cur = trainer->agents().alpha();
            CHECK(cur < prev);
            CHECK(cur > 0.0);
            prev = cur;
        }
    }
    SUBCASE("empty surrogate batch is rejected") {
        auto trainer = make(2.0);
        CHECK_THROWS_AS(trainer->update_temperature({}), std::invalid_argument);
    }
}

TEST_CASE("target policy blending covers hard copy, freeze, and midpoint") {
    RunConfig cfg = small_cfg(41);
    Trainer trainer(cfg);
    auto& agents = trainer.agents();

    auto params_of = [](madp::diffusion::ScorePolicy& p) {
        std::vector<Parameter*> params;
        std::vector<StateEntry> state;
        p.collect(params, state);
        return params;
    };

    SUBCASE("rho = 0 hard-copies the online parameters bitwise") {
        auto online = params_of(agents.policy(0));
        for (Parameter* p : online)
            for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] += 0.123;
        trainer.update_targets(); // default rho = 0
        for (int i = 0; i < agents.n_agents(); ++i) {
            auto on = params_of(agents.policy(i));
            auto tg = params_of(agents.target_policy(i));
            REQUIRE(on.size() == tg.size());
            for (std::size_t j = 0; j < on.size(); ++j)
                for (std::size_t k = 0; k < on[j]->value.size(); ++k)
                    CHECK(tg[j]->value[k] == on[j]->value[k]);
        }
    }
    SUBCASE("rho = 1 leaves the delayed parameters untouched; rho = 0.5 averages") {
        auto on = params_of(agents.policy(0));
        auto tg = params_of(agents.target_policy(0));
        for (Parameter* p : on)
            for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] = 2.0;
        for (Parameter* p : tg)
            for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] = 0.0;

        agents.update_target_policies(1.0);
        for (Parameter* p : tg)
            for (std::size_t k = 0; k < p->value.size(); ++k) CHECK(p->value[k] == 0.0);

        agents.update_target_policies(0.5);
        for (Parameter* p : tg)
            for (std::size_t k = 0; k < p->value.size(); ++k) CHECK(p->value[k] == 1.0);
    }
}

TEST_CASE("update schedule: gate, delayed policy turns, and call ordering") {
    RunConfig cfg = small_cfg(29);
    cfg.trainer.warmup_steps = 1000000000; // keep collection cheap and uniform
    cfg.trainer.learning_starts = 50;      // strict gate: learn once buffer > 50
    cfg.trainer.policy_delay = 3;
    cfg.trainer.updates_per_episode = 2;
    Trainer trainer(cfg);
    auto& agents = trainer.agents();

    std::vector<EpisodeLog> logs;
    for (int m = 0; m < 8; ++m) {
        logs.push_back(trainer.run_episode());
        if (m == 1) {
            // buffer size == learning_starts exactly: still below the gate
            CHECK(trainer.buffer().size() == 50);
            CHECK(agents.actor_opt().steps() == 0);
            CHECK(agents.critic_opt().steps() == 0);
            CHECK(agents.alpha_opt().steps() == 0);
        }
    }

    for (int m = 1; m <= 8; ++m) {
        const EpisodeLog& log = logs[static_cast<std::size_t>(m - 1)];
        CHECK(log.episode == m);
        CHECK(log.env_steps == 25 * m);
        const bool should_learn = (25 * m > 50);
        CHECK(log.learned == should_learn);

        std::vector<std::string> expected{"collect"};
        if (should_learn) {
            const bool policy_turn = (m % 3 == 0);
            CHECK(log.critic_updates == 2);
            CHECK(log.temperature_updates == 2);
            CHECK(log.target_syncs == 2);
            CHECK(log.policy_updates == (policy_turn ? 2 : 0));
            for (int u = 0; u < 2; ++u) {
                expected.push_back("critic");
                expected.push_back(policy_turn ? "policy" : "elbo_refresh");
                expected.push_back("temperature");
                expected.push_back("targets");
            }
        } else {
            CHECK(log.critic_updates == 0);
            CHECK(log.policy_updates == 0);
            CHECK(log.temperature_updates == 0);
            CHECK(log.target_syncs == 0);
        }
        CHECK(log.calls == expected);
    }

    // episodes 3..8 learned, two rounds each; policy turns at m = 3 and 6
    CHECK(agents.critic_opt().steps() == 12);
    CHECK(agents.alpha_opt().steps() == 12);
    CHECK(agents.actor_opt().steps() == 4);
}

TEST_CASE("ten-thousand-step runs stay finite with positive temperature") {
    for (const std::string& env_name : {std::string("coopnav"), std::string("linespread")}) {
        CAPTURE(env_name);
        RunConfig cfg = small_cfg(env_name == "coopnav" ? 101 : 202);
        cfg.env_name = env_name;
        cfg.trainer.warmup_steps = 1000;
        cfg.trainer.learning_starts = 500;
        cfg.trainer.batch_size = 32;
        cfg.trainer.updates_per_episode = 1;
        cfg.trainer.v_max = env_name == "coopnav" ? 25.0 : 10.0;
        Trainer trainer(cfg);

        for (int m = 0; m < 400; ++m) trainer.run_episode();

        CHECK(trainer.env_steps() == 10000);
        CHECK(trainer.episodes_done() == 400);
        CHECK(trainer.buffer().size() == 10000);
        CHECK(trainer.agents().alpha() > 0.0);
        CHECK(std::isfinite(trainer.agents().log_alpha()));

        auto pol = policy_params(trainer.agents());
        auto cri = critic_params(trainer.agents());
        CHECK(all_finite(pol));
        CHECK(all_finite(cri));
        std::vector<Parameter*> tgt;
        std::vector<StateEntry> tstate;
        for (int i = 0; i < trainer.agents().n_agents(); ++i)
            trainer.agents().target_policy(i).collect(tgt, tstate);
        CHECK(all_finite(tgt));

        auto diag = trainer.drain_diagnostics();
        CHECK(diag.has_critic);
        CHECK(diag.has_policy);
        CHECK(diag.has_elbo);
        CHECK(std::isfinite(diag.critic_loss));
        CHECK(std::isfinite(diag.policy_loss));
        CHECK(std::isfinite(diag.joint_elbo));

        double mean = 0.0, stddev = 0.0;
        trainer.evaluate(2, mean, stddev);
        CHECK(std::isfinite(mean));
        CHECK(std::isfinite(stddev));
    }
}
