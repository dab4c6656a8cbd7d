#include "madp/distq.hpp"

#include <cmath>
#include <stdexcept>

namespace madp::distq {

ValueSupport support_atoms(double v_max, int n_atoms) {
    if (!(v_max > 0.0)) throw std::invalid_argument("support_atoms: v_max must be positive");
    if (n_atoms < 2) throw std::invalid_argument("support_atoms: need at least 2 atoms");
    ValueSupport s;
    s.v_max = v_max;
    s.n_atoms = n_atoms;
    s.gap = 2.0 * v_max / static_cast<double>(n_atoms - 1);
    s.atoms.resize(static_cast<std::size_t>(n_atoms));
    for (int j = 0; j < n_atoms; ++j)
        s.atoms[static_cast<std::size_t>(j)] = -v_max + s.gap * static_cast<double>(j);
    s.atoms.front() = -v_max;
    s.atoms.back() = v_max;
    return s;
}

double q_mean(const DenseArray& probs, const ValueSupport& support) {
    if (probs.size() != static_cast<std::size_t>(support.n_atoms))
        throw std::invalid_argument("q_mean: probs/atom count mismatch");
    double q = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) q += probs[j] * support.atoms[j];
    return q;
}

std::vector<double> bellman_target(double r_team, bool done, double gamma, double alpha,
                                   double elbo_sum, const ValueSupport& support) {
    const double mask = done ? 0.0 : 1.0;
    std::vector<double> shifted(support.atoms.size());
    for (std::size_t j = 0; j < shifted.size(); ++j)
        shifted[j] = r_team + mask * gamma * (support.atoms[j] + alpha * elbo_sum);
    return shifted;
}

DenseArray project_to_support(const std::vector<double>& shifted, const DenseArray& probs,
                              const ValueSupport& support) {
    if (shifted.size() != probs.size())
        throw std::invalid_argument("project_to_support: position/probability count mismatch");
    const int m = support.n_atoms;
    DenseArray out({static_cast<std::size_t>(m)});
    for (std::size_t k = 0; k < shifted.size(); ++k) {
        const double p = probs[k];
        const double z = shifted[k];
        if (z <= support.v_min()) {
            out[0] += p;
            continue;
        }
        if (z >= support.v_max) {
            out[static_cast<std::size_t>(m - 1)] += p;
            continue;
        }
        const double pos = (z - support.v_min()) / support.gap;
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = lo + 1;
        const double frac = pos - static_cast<double>(lo);
        out[lo] += p * (1.0 - frac);
        out[hi] += p * frac;
    }
    return out;
}

CriticNetwork::CriticNetwork(std::size_t state_dim, std::size_t joint_action_dim,
                             const std::vector<std::size_t>& hidden, ValueSupport support,
                             const std::string& prefix, Rng& rng)
    : state_dim_(state_dim),
      joint_action_dim_(joint_action_dim),
      support_(std::move(support)),
      bn_in_(state_dim + joint_action_dim, prefix + ".bn_in"),
      l1_(state_dim + joint_action_dim, hidden.at(0), prefix + ".l1", rng),
      bn1_(hidden.at(0), prefix + ".bn1"),
      l2_(hidden.at(0), hidden.at(1), prefix + ".l2", rng),
      bn2_(hidden.at(1), prefix + ".bn2"),
      head_(hidden.at(1), static_cast<std::size_t>(support_.n_atoms), prefix + ".head", rng) {
    if (hidden.size() != 2)
        throw std::invalid_argument("CriticNetwork: exactly two hidden widths expected");
}

void CriticNetwork::set_mode(nd::BnMode mode) {
    bn_in_.mode = mode;
    bn1_.mode = mode;
    bn2_.mode = mode;
}

void CriticNetwork::bn_config(double momentum, double warmup_steps) {
    for (nd::BatchNorm* bn : {&bn_in_, &bn1_, &bn2_}) {
        bn->momentum = momentum;
        bn->warmup_steps = warmup_steps;
    }
}

Node CriticNetwork::log_probs_node(Tape& tape, Node sa, bool frozen) const {
    auto& self = const_cast<CriticNetwork&>(*this);
    Node h = tape.batchnorm(sa, self.bn_in_, frozen);
    h = l1_.apply(tape, h, frozen);
    h = tape.batchnorm(h, self.bn1_, frozen);
    h = tape.relu(h);
    h = l2_.apply(tape, h, frozen);
    h = tape.batchnorm(h, self.bn2_, frozen);
    h = tape.relu(h);
    h = head_.apply(tape, h, frozen);
    return tape.log_softmax_rows(h);
}

Node CriticNetwork::q_mean_node(Tape& tape, Node log_probs) const {
    DenseArray atoms({static_cast<std::size_t>(support_.n_atoms), 1});
    for (int j = 0; j < support_.n_atoms; ++j)
        atoms[static_cast<std::size_t>(j)] = support_.atoms[static_cast<std::size_t>(j)];
    return tape.matmul(tape.exp(log_probs), tape.constant(atoms));
}

DenseArray CriticNetwork::probs(const DenseArray& sa) {
    Tape tape;
    Node lp = log_probs_node(tape, tape.constant(sa), /*frozen=*/true);
    DenseArray out = tape.value(lp);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return out;
}

CriticNetwork::PairOut CriticNetwork::forward_pair(Tape& tape, const DenseArray& sa,
                                                   const DenseArray& sa_next) {
    if (!sa.same_shape(sa_next))
        throw std::invalid_argument("forward_pair: prediction/target batch shape mismatch");
    if (sa.rank() != 2 || sa.cols() != input_dim())
        throw std::invalid_argument("forward_pair: bad input width");
    const std::size_t b = sa.rows();
    Node joint = tape.concat_rows(tape.constant(sa), tape.constant(sa_next));
    Node lp = log_probs_node(tape, joint);
    Node pred = tape.slice_rows(lp, 0, b);
    const DenseArray& lp_val = tape.value(lp);
    DenseArray target({b, static_cast<std::size_t>(support_.n_atoms)});
    const std::size_t mm = static_cast<std::size_t>(support_.n_atoms);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < mm; ++j) target[i * mm + j] = std::exp(lp_val.at(b + i, j));
    return PairOut{pred, target};
}

void CriticNetwork::collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state) {
    bn_in_.collect(params, state);
    l1_.collect(params, state);
    bn1_.collect(params, state);
    l2_.collect(params, state);
    bn2_.collect(params, state);
    head_.collect(params, state);
}

Node critic_loss(Tape& tape, Node pred_log_probs, const DenseArray& target_probs, double xi) {
    const DenseArray& lp = tape.value(pred_log_probs);
    if (!lp.same_shape(target_probs))
        throw std::invalid_argument("critic_loss: prediction/target shape mismatch");
    const double floor = std::log(1e-12);
    const std::size_t b = lp.rows();
    Node logp = tape.clamp_min(pred_log_probs, floor);
    // cross-entropy: -mean over rows of sum_j target_j * log pred_j
    Node ce = tape.scale(tape.sum_all(tape.mul(tape.constant(target_probs), logp)),
                         -1.0 / static_cast<double>(b));
    // entropy of the prediction: -sum_j p_j log p_j, averaged over rows
    Node ent = tape.scale(tape.sum_all(tape.mul(tape.exp(pred_log_probs), logp)),
                          -1.0 / static_cast<double>(b));
    return tape.add(ce, tape.scale(ent, xi));
}

} // namespace madp::distq
