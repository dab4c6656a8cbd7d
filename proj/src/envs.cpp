#include "madp/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace madp::env {

namespace {

constexpr double kDt = 0.1;
constexpr double kDamping = 0.9;
constexpr double kWorldHalf = 2.0;
constexpr double kCollisionRadius = 0.2;

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// Minimum-cost agent->target matching by exhaustive permutation search
// (intended for n <= 4).
std::vector<std::size_t> best_assignment(const std::vector<double>& cost, std::size_t n) {
    std::vector<std::size_t> perm(n), best(n);
    std::iota(perm.begin(), perm.end(), 0);
    best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

CoopNavEnv::CoopNavEnv(int n_agents, int episode_length) {
    if (n_agents < 1 || n_agents > 4)
        throw std::invalid_argument("CoopNavEnv: n_agents must be in 1..4");
    if (episode_length < 1) throw std::invalid_argument("CoopNavEnv: episode_length must be >= 1");
    spec_.name = "coopnav";
    spec_.n_agents = n_agents;
    spec_.action_dim = 2;
    spec_.state_dim = static_cast<std::size_t>(n_agents) * 6; // pos, vel, landmark per agent
    spec_.episode_length = episode_length;
    pos_.assign(static_cast<std::size_t>(n_agents) * 2, 0.0);
    vel_.assign(static_cast<std::size_t>(n_agents) * 2, 0.0);
    landmark_.assign(static_cast<std::size_t>(n_agents) * 2, 0.0);
}

DenseArray CoopNavEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : pos_) p = rng.uniform(-1.0, 1.0);
    for (auto& v : vel_) v = 0.0;
    for (auto& l : landmark_) l = rng.uniform(-1.0, 1.0);
    t_ = 0;
    return state_vector();
}

void CoopNavEnv::set_state(const std::vector<double>& pos, const std::vector<double>& vel) {
    if (pos.size() != pos_.size() || vel.size() != vel_.size())
        throw std::invalid_argument("CoopNavEnv::set_state: size mismatch");
    pos_ = pos;
    vel_ = vel;
}

void CoopNavEnv::set_landmarks(const std::vector<double>& lm) {
    if (lm.size() != landmark_.size())
        throw std::invalid_argument("CoopNavEnv::set_landmarks: size mismatch");
    landmark_ = lm;
}

DenseArray CoopNavEnv::state_vector() const {
    DenseArray s({spec_.state_dim});
    std::size_t k = 0;
    const std::size_t n = static_cast<std::size_t>(spec_.n_agents);
    for (std::size_t i = 0; i < n; ++i) {
        s[k++] = pos_[2 * i];
        s[k++] = pos_[2 * i + 1];
        s[k++] = vel_[2 * i];
        s[k++] = vel_[2 * i + 1];
    }
    for (std::size_t i = 0; i < 2 * n; ++i) s[k++] = landmark_[i];
    return s;
}

double CoopNavEnv::reward() const {
    const std::size_t n = static_cast<std::size_t>(spec_.n_agents);
    double r = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = pos_[2 * i] - landmark_[2 * l];
            const double dy = pos_[2 * i + 1] - landmark_[2 * l + 1];
            dmin = std::min(dmin, std::sqrt(dx * dx + dy * dy));
        }
        r -= dmin;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = pos_[2 * i] - pos_[2 * j];
            const double dy = pos_[2 * i + 1] - pos_[2 * j + 1];
            if (std::sqrt(dx * dx + dy * dy) < kCollisionRadius) r -= 1.0;
        }
    return r;
}

StepResult CoopNavEnv::step(const DenseArray& joint_action) {
    const std::size_t n = static_cast<std::size_t>(spec_.n_agents);
    if (joint_action.size() != 2 * n)
        throw std::invalid_argument("CoopNavEnv: joint action size mismatch");
    if (t_ >= spec_.episode_length)
        throw std::runtime_error("CoopNavEnv: step called past the episode horizon");
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const double a = clip(joint_action[i], -1.0, 1.0);
        vel_[i] = kDamping * vel_[i] + a * kDt;
        pos_[i] = clip(pos_[i] + vel_[i] * kDt, -kWorldHalf, kWorldHalf);
    }
    ++t_;
    StepResult out;
    out.s_next = state_vector();
    out.r_team = reward();
    out.done = t_ >= spec_.episode_length;
    out.time_limit = out.done;
    return out;
}

DenseArray CoopNavEnv::scripted_action() const {
    const std::size_t n = static_cast<std::size_t>(spec_.n_agents);
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < n; ++l) {
            const double dx = pos_[2 * i] - landmark_[2 * l];
            const double dy = pos_[2 * i + 1] - landmark_[2 * l + 1];
            cost[i * n + l] = std::sqrt(dx * dx + dy * dy);
        }
    const std::vector<std::size_t> match = best_assignment(cost, n);
    // velocity-envelope drive: approach speed limited by the braking
    // distance (~0.25 v^2 under damping 0.9 and unit thrust), deadbeat
    // landing once |e| is small; arrives without overshoot, and from an
    // on-landmark rest start commands exactly zero
    DenseArray a({2 * n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < 2; ++d) {
            const double e = landmark_[2 * match[i] + d] - pos_[2 * i + d];
            const double mag = std::min({2.0 * std::sqrt(std::abs(e)), 10.0 * std::abs(e), 1.0});
            const double v_des = (e >= 0.0 ? mag : -mag);
            a[2 * i + d] = clip((v_des - kDamping * vel_[2 * i + d]) / kDt, -1.0, 1.0);
        }
    return a;
}

std::unique_ptr<Env> CoopNavEnv::clone() const { return std::make_unique<CoopNavEnv>(*this); }

LineSpreadEnv::LineSpreadEnv(int episode_length) {
    if (episode_length < 1)
        throw std::invalid_argument("LineSpreadEnv: episode_length must be >= 1");
    spec_.name = "linespread";
    spec_.n_agents = 2;
    spec_.action_dim = 1;
    spec_.state_dim = 2;
    spec_.episode_length = episode_length;
}

DenseArray LineSpreadEnv::reset(std::uint64_t seed) {
    (void)seed; // the symmetric start (0, 0) is part of the task definition
    x_[0] = 0.0;
    x_[1] = 0.0;
    t_ = 0;
    return DenseArray({2}, {x_[0], x_[1]});
}

double LineSpreadEnv::reward_at(double x0, double x1) {
    const double c1 = std::abs(x0 - 1.0) + std::abs(x1 + 1.0);
    const double c2 = std::abs(x0 + 1.0) + std::abs(x1 - 1.0);
    return -std::min(c1, c2);
}

StepResult LineSpreadEnv::step(const DenseArray& joint_action) {
    if (joint_action.size() != 2)
        throw std::invalid_argument("LineSpreadEnv: joint action size mismatch");
    if (t_ >= spec_.episode_length)
        throw std::runtime_error("LineSpreadEnv: step called past the episode horizon");
    for (int i = 0; i < 2; ++i) {
        const double a = clip(joint_action[static_cast<std::size_t>(i)], -1.0, 1.0);
        x_[i] = clip(x_[i] + a * kDt, -kWorldHalf, kWorldHalf);
    }
    ++t_;
    StepResult out;
    out.s_next = DenseArray({2}, {x_[0], x_[1]});
    out.r_team = reward_at(x_[0], x_[1]);
    out.done = t_ >= spec_.episode_length;
    out.time_limit = out.done;
    return out;
}

DenseArray LineSpreadEnv::scripted_action() const {
    const double c1 = std::abs(x_[0] - 1.0) + std::abs(x_[1] + 1.0);
    const double c2 = std::abs(x_[0] + 1.0) + std::abs(x_[1] - 1.0);
    const double t0 = (c1 <= c2) ? 1.0 : -1.0;
    DenseArray a({2});
    a[0] = clip((t0 - x_[0]) / kDt, -1.0, 1.0);
    a[1] = clip((-t0 - x_[1]) / kDt, -1.0, 1.0);
    return a;
}

std::unique_ptr<Env> LineSpreadEnv::clone() const {
    return std::make_unique<LineSpreadEnv>(*this);
}

std::unique_ptr<Env> make_env(const std::string& name, int n_agents, int episode_length) {
    if (name == "coopnav") return std::make_unique<CoopNavEnv>(n_agents, episode_length);
    if (name == "linespread") {
        if (n_agents != 2)
            throw std::invalid_argument("make_env: linespread is a 2-agent task");
        return std::make_unique<LineSpreadEnv>(episode_length);
    }
    throw std::invalid_argument("make_env: unknown environment '" + name + "'");
}

double oracle_return(Env& env, std::uint64_t seed) {
    env.reset(seed);
    double total = 0.0;
    while (true) {
        const StepResult r = env.step(env.scripted_action());
        total += r.r_team;
        if (r.done) break;
    }
    return total;
}

double zero_action_return(Env& env, std::uint64_t seed) {
    env.reset(seed);
    DenseArray zeros({static_cast<std::size_t>(env.spec().n_agents) * env.spec().action_dim});
    double total = 0.0;
    while (true) {
        const StepResult r = env.step(zeros);
        total += r.r_team;
        if (r.done) break;
    }
    return total;
}

CoverageGrid::CoverageGrid(std::size_t dim_i, std::size_t dim_j, double lo_i, double hi_i,
                           double lo_j, double hi_j, double cell)
    : dim_i_(dim_i), dim_j_(dim_j), lo_i_(lo_i), hi_i_(hi_i), lo_j_(lo_j), hi_j_(hi_j),
      cell_(cell) {
    if (!(cell > 0.0) || !(hi_i > lo_i) || !(hi_j > lo_j))
        throw std::invalid_argument("CoverageGrid: invalid range or cell size");
    ni_ = static_cast<std::size_t>(std::ceil((hi_i_ - lo_i_) / cell_ - 1e-9));
    nj_ = static_cast<std::size_t>(std::ceil((hi_j_ - lo_j_) / cell_ - 1e-9));
    if (ni_ == 0) ni_ = 1;
    if (nj_ == 0) nj_ = 1;
}

void CoverageGrid::update(const DenseArray& s) {
    if (dim_i_ >= s.size() || dim_j_ >= s.size())
        throw std::invalid_argument("CoverageGrid: selected dimensions exceed state size");
    auto cell_index = [this](double v, double lo, std::size_t n) {
        double idx = std::floor((v - lo) / cell_);
        if (idx < 0.0) idx = 0.0;
        if (idx > static_cast<double>(n - 1)) idx = static_cast<double>(n - 1);
        return static_cast<std::size_t>(idx);
    };
    visited_.emplace(cell_index(s[dim_i_], lo_i_, ni_), cell_index(s[dim_j_], lo_j_, nj_));
}

double CoverageGrid::fraction() const {
    return static_cast<double>(visited_.size()) / static_cast<double>(total_cells());
}

} // namespace madp::env
