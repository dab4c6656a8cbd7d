#pragma once

#include <functional>
#include <string>
#include <vector>

#include "madp/nn.hpp"
#include "madp/rng.hpp"
#include "madp/tape.hpp"

namespace madp::diffusion {

using nd::DenseArray;
using nd::Node;
using nd::Parameter;
using nd::Rng;
using nd::StateEntry;
using nd::Tape;

// Discretized noising grid. Grid step h (1-based) connects a_{h-1} and a_h
// and carries beta[h-1] in both the noising and denoising direction; both
// transition kernels at step h have variance 2*eta^2*beta_h*delta.
struct NoiseSchedule {
    int steps = 0;            // H
    std::vector<double> beta; // beta[h-1] = beta_h
    double delta = 0.0;       // 1/H
    double eta = 1.0;

    double beta_at(int h) const { return beta[static_cast<std::size_t>(h - 1)]; }
    double mean_coef(int h) const { return 1.0 - beta_at(h) * delta; }
    double step_var(int h) const { return 2.0 * eta * eta * beta_at(h) * delta; }
    double time_at(int h) const { return static_cast<double>(h) / static_cast<double>(steps); }

    bool operator==(const NoiseSchedule& o) const {
        return steps == o.steps && beta == o.beta && delta == o.delta && eta == o.eta;
    }
};

// beta_h = beta_min + (beta_max - beta_min) * (1 - cos(pi*(h - 1/2)/H)) / 2,
// h = 1..H; delta = 1/H. Throws on H < 1, non-positive/unordered endpoints,
// or beta_max*delta >= 1 (the forward mean coefficient must stay positive).
NoiseSchedule cosine_schedule(int H, double beta_min, double beta_max, double eta);

// Score network for one agent: an MLP over [a, s, time embedding] returning
// an action-dimension score vector approximating the gradient of the log
// marginal density at diffusion time t.
class ScorePolicy {
public:
    ScorePolicy(int agent_id, std::size_t state_dim, std::size_t action_dim,
                const std::vector<std::size_t>& hidden, std::size_t temb_dim,
                NoiseSchedule schedule, const std::string& prefix, Rng& rng);

    int agent_id() const { return agent_id_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t state_dim() const { return state_dim_; }
    const NoiseSchedule& schedule() const { return schedule_; }

    // Gradient-free score evaluation at a batch of (action, state) rows.
    DenseArray score(const DenseArray& a, const DenseArray& s, double t) const;
    // Tape-recorded score; s_node is typically a constant node of the states.
    Node score_node(Tape& tape, Node a, Node s_node, double t) const;

    void collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state);
    // Hard/soft copy of another policy's parameters: p <- rho*p + (1-rho)*src.
    void blend_from(const ScorePolicy& src, double rho);

private:
    int agent_id_;
    std::size_t state_dim_;
    std::size_t action_dim_;
    std::size_t temb_dim_;
    NoiseSchedule schedule_;
    nd::Mlp net_;
};

// Score callback type used by the samplers so tests can hard-wire analytic
// scores: (a [B,d], t) -> score [B,d].
using ScoreFn = std::function<DenseArray(const DenseArray&, double)>;

// One reverse-sampled denoising chain (batched: each array is [B, d]).
// chain[k] holds a_{H-k}, so chain.front() is the prior draw a_H and
// chain.back() is the emitted action a_0. noises[k] is the xi added when
// stepping chain[k] -> chain[k+1] (grid step h = H-k). Regenerating the
// chain from (states, prior draw, noises) reproduces it bitwise.
struct DiffusionTrajectory {
    DenseArray states; // [B, S]
    NoiseSchedule schedule;
    std::vector<DenseArray> chain;  // H+1 entries
    std::vector<DenseArray> noises; // H entries

    const DenseArray& prior_draw() const { return chain.front(); }
    const DenseArray& action() const { return chain.back(); }
};

// a_H ~ N(0, eta^2 I), batched rows.
DenseArray sample_prior(std::size_t batch, std::size_t action_dim, double eta, Rng& rng);

// Noising step across grid step h: (1 - beta_h*delta)*a + eps,
// eps ~ N(0, 2*eta^2*beta_h*delta I).
DenseArray forward_step(const DenseArray& a, int h, const NoiseSchedule& sched, Rng& rng);
DenseArray forward_step_with_noise(const DenseArray& a, int h, const NoiseSchedule& sched,
                                   const DenseArray& eps);

// Denoising step across grid step h with a supplied noise draw:
// a + (beta_h*a + 2*eta^2*beta_h*score(a, t_h))*delta + xi. Throws if the
// score output is non-finite.
DenseArray reverse_step(const DenseArray& a, int h, const NoiseSchedule& sched,
                        const ScoreFn& score, const DenseArray& xi);

// Full chain: prior draw, then H reverse steps h = H..1. The emitted action
// is chain.back(); clipping to the action box happens only at the
// environment boundary, never here.
DiffusionTrajectory sample_chain(const NoiseSchedule& sched, const DenseArray& states,
                                 std::size_t action_dim, const ScoreFn& score, Rng& rng);
DiffusionTrajectory sample_chain(const NoiseSchedule& sched, const DenseArray& states,
                                 const ScorePolicy& policy, Rng& rng);

// Re-runs the reverse recursion from the trajectory's stored prior draw and
// noises; used to verify the reparameterization record.
std::vector<DenseArray> replay_chain(const DiffusionTrajectory& traj, const ScoreFn& score);

// log N(x; mean, var*I) per batch row -> [B] values.
DenseArray gaussian_log_density(const DenseArray& x, const DenseArray& mean, double var);

// Single-sample entropy surrogate per batch row -> [B] values:
//   l = sum_h log q_fwd(a_h | a_{h-1}) - [log N(a_H; 0, eta^2 I)
//       + sum_h log q_rev(a_{h-1} | a_h, s)]
// where both kernels at grid step h use variance 2*eta^2*beta_h*delta and
// q_rev uses the denoising mean produced by the given score. Throws if the
// trajectory's schedule differs from `sched`.
DenseArray elbo_entropy(const DiffusionTrajectory& traj, const NoiseSchedule& sched,
                        const ScoreFn& score);
DenseArray elbo_entropy(const DiffusionTrajectory& traj, const ScorePolicy& policy);

// Tape-recorded ELBO for gradient-carrying losses: rebuilds the chain from
// the trajectory's prior draw and noises through the policy's score network
// (reparameterization), then assembles the surrogate.
struct ElboNodes {
    Node elbo;       // [B,1] per-row surrogate values
    Node action;     // [B,d] rebuilt a_0
    Node prior_logp; // [B,1] log N(a_H; 0, eta^2 I), constant in theta
};
ElboNodes elbo_entropy_node(Tape& tape, const ScorePolicy& policy,
                            const DiffusionTrajectory& traj);

} // namespace madp::diffusion
