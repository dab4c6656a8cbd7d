#pragma once

#include <string>
#include <vector>

#include "madp/nn.hpp"
#include "madp/rng.hpp"
#include "madp/tape.hpp"

namespace madp::distq {

using nd::DenseArray;
using nd::Node;
using nd::Parameter;
using nd::Rng;
using nd::StateEntry;
using nd::Tape;

// Fixed symmetric atom grid [-v_max, v_max] with M equally spaced atoms.
struct ValueSupport {
    double v_max = 0.0;
    int n_atoms = 0;
    std::vector<double> atoms;
    double gap = 0.0; // (v_max - v_min) / (M - 1)

    double v_min() const { return -v_max; }
};

ValueSupport support_atoms(double v_max, int n_atoms);

// E[Z] = sum_j probs_j * z_j.
double q_mean(const DenseArray& probs, const ValueSupport& support);

// Entropy-augmented distributional Bellman shift: every atom z_j maps to
// r_team + (1 - done) * gamma * (z_j + alpha * elbo_sum); the probabilities
// ride along unchanged.
std::vector<double> bellman_target(double r_team, bool done, double gamma, double alpha,
                                   double elbo_sum, const ValueSupport& support);

// Categorical projection: each shifted atom's mass goes to its two
// neighboring support atoms proportionally to proximity; positions outside
// the support clip to the boundary atom. Mass is conserved exactly.
DenseArray project_to_support(const std::vector<double>& shifted, const DenseArray& probs,
                              const ValueSupport& support);

// Categorical return head: input batch norm -> (affine -> batch norm -> ReLU)
// x2 -> affine -> log-softmax over the atoms. No target network exists; the
// Bellman target halves share one forward pass with the prediction halves so
// normalization statistics are common to both.
class CriticNetwork {
public:
    CriticNetwork(std::size_t state_dim, std::size_t joint_action_dim,
                  const std::vector<std::size_t>& hidden, ValueSupport support,
                  const std::string& prefix, Rng& rng);

    const ValueSupport& support() const { return support_; }
    std::size_t input_dim() const { return state_dim_ + joint_action_dim_; }
    std::size_t state_dim() const { return state_dim_; }
    std::size_t joint_action_dim() const { return joint_action_dim_; }

    void set_mode(nd::BnMode mode);
    // Applies one normalization-momentum setting (terminal value + anneal
    // horizon) to every batch-norm layer in the stack.
    void bn_config(double momentum, double warmup_steps);

    // Tape-recorded log-probabilities [B, M] of the concatenated state-action
    // batch. `frozen` evaluates the whole stack as constants in phi (running
    // statistics, no parameter nodes) while still letting gradients flow to
    // the input -- the policy update path.
    Node log_probs_node(Tape& tape, Node sa, bool frozen = false) const;

    // Expected value node [B, 1] built from log_probs_node output.
    Node q_mean_node(Tape& tape, Node log_probs) const;

    // Gradient-free probabilities [B, M] in the current mode.
    DenseArray probs(const DenseArray& sa);

    // Shared-batch pair pass: concatenates the prediction and target batches
    // along the batch axis, runs one forward pass (shared batch statistics),
    // and splits the halves. The target half is returned as plain values --
    // the stop-gradient side of the Bellman target.
    struct PairOut {
        Node pred_log_probs;     // [B, M], carries gradients
        DenseArray target_probs; // [B, M], detached
    };
    PairOut forward_pair(Tape& tape, const DenseArray& sa, const DenseArray& sa_next);

    void collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state);

private:
    std::size_t state_dim_;
    std::size_t joint_action_dim_;
    ValueSupport support_;
    nd::BatchNorm bn_in_;
    nd::Linear l1_;
    nd::BatchNorm bn1_;
    nd::Linear l2_;
    nd::BatchNorm bn2_;
    nd::Linear head_;
};

// Critic objective on one batch: mean over rows of
//   -sum_j target_j * log pred_j + xi * H(pred)
// with log probabilities floored at log(1e-12). `target_probs` carries no
// gradient.
Node critic_loss(Tape& tape, Node pred_log_probs, const DenseArray& target_probs, double xi);

} // namespace madp::distq
