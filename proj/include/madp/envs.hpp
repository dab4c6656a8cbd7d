#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "madp/array.hpp"
#include "madp/rng.hpp"

namespace madp::env {

using nd::DenseArray;
using nd::Rng;

struct EnvSpec {
    std::string name;
    int n_agents = 0;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0; // per agent; box is [-1, 1]^action_dim
    int episode_length = 0;
};

struct StepResult {
    DenseArray s_next;
    double r_team = 0.0;
    bool done = false;       // episode over
    bool time_limit = false; // done was caused by the fixed horizon
};

// Deterministic value-object environment: (seed, action sequence) fully
// determines the (state, reward) stream. Actions are clipped to the box by
// the environment itself.
class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual DenseArray reset(std::uint64_t seed) = 0;
    virtual StepResult step(const DenseArray& joint_action) = 0;
    // Greedy scripted control toward the brute-force optimal assignment,
    // computed from the current state; the acceptance reference controller.
    virtual DenseArray scripted_action() const = 0;
    virtual std::unique_ptr<Env> clone() const = 0;
};

// Cooperative navigation: n agents, n landmarks on a plane. Double-integrator
// agents (velocity damped by 0.9 per step, acceleration = action * dt,
// dt = 0.1, positions clamped to [-2, 2]). Team reward per step:
// -sum_landmarks min_agent dist(agent, landmark) minus 1.0 per agent pair
// closer than 0.2. Fixed horizon 25.
class CoopNavEnv : public Env {
public:
    explicit CoopNavEnv(int n_agents, int episode_length = 25);

    const EnvSpec& spec() const override { return spec_; }
    DenseArray reset(std::uint64_t seed) override;
    StepResult step(const DenseArray& joint_action) override;
    DenseArray scripted_action() const override;
    std::unique_ptr<Env> clone() const override;

    const std::vector<double>& landmarks() const { return landmark_; }

    // Direct state injection for controlled-scenario tests; sizes must match
    // 2 doubles per agent (or per landmark).
    void set_state(const std::vector<double>& pos, const std::vector<double>& vel);
    void set_landmarks(const std::vector<double>& lm);
    DenseArray observe() const { return state_vector(); }
    double reward_now() const { return reward(); }

private:
    DenseArray state_vector() const;
    double reward() const;

    EnvSpec spec_;
    std::vector<double> pos_, vel_, landmark_;
    int t_ = 0;
};

// Two agents on a line with targets at -1 and +1, both starting at 0.
// Single-integrator dynamics (dt = 0.1, positions clamped to [-2, 2]).
// r_team = -min over the two assignments of sum_i |x_i - target_sigma(i)|,
// so the optimum is two-moded by construction. Fixed horizon 25.
class LineSpreadEnv : public Env {
public:
    explicit LineSpreadEnv(int episode_length = 25);

    const EnvSpec& spec() const override { return spec_; }
    DenseArray reset(std::uint64_t seed) override;
    StepResult step(const DenseArray& joint_action) override;
    DenseArray scripted_action() const override;
    std::unique_ptr<Env> clone() const override;

    static double reward_at(double x0, double x1);

private:
    EnvSpec spec_;
    double x_[2] = {0.0, 0.0};
    int t_ = 0;
};

std::unique_ptr<Env> make_env(const std::string& name, int n_agents, int episode_length);

// Return of the scripted greedy controller from reset(seed); the acceptance
// reference value. Deterministic per seed.
double oracle_return(Env& env, std::uint64_t seed);

// Return of the all-zero action sequence from reset(seed); the do-nothing
// baseline used to normalize learning scores.
double zero_action_return(Env& env, std::uint64_t seed);

// Occupancy grid over two selected state dimensions. Out-of-range states
// clamp to the boundary cells; coverage is the fraction of distinct cells
// visited.
class CoverageGrid {
public:
    CoverageGrid(std::size_t dim_i, std::size_t dim_j, double lo_i, double hi_i, double lo_j,
                 double hi_j, double cell);

    void update(const DenseArray& s);
    double fraction() const;
    std::size_t visited_count() const { return visited_.size(); }
    std::size_t total_cells() const { return static_cast<std::size_t>(ni_) * nj_; }
    std::size_t cells_i() const { return ni_; }
    std::size_t cells_j() const { return nj_; }
    const std::set<std::pair<std::size_t, std::size_t>>& visited() const { return visited_; }

private:
    std::size_t dim_i_, dim_j_;
    double lo_i_, hi_i_, lo_j_, hi_j_, cell_;
    std::size_t ni_, nj_;
    std::set<std::pair<std::size_t, std::size_t>> visited_;
};

} // namespace madp::env
