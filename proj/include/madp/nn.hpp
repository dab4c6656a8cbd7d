#pragma once

#include <string>
#include <vector>

#include "madp/array.hpp"
#include "madp/rng.hpp"
#include "madp/tape.hpp"

namespace madp::nd {

// Named view of a persistent array (parameter value or statistics buffer);
// the unit of checkpoint serialization.
struct StateEntry {
    std::string id;
    DenseArray* arr = nullptr;
};

enum class Activation { relu, gelu };

struct Linear {
    Parameter w; // [in, out]
    Parameter b; // [out]

    Linear(std::size_t in, std::size_t out, const std::string& prefix, Rng& rng);

    // Records x*W + b on the tape. `frozen` uses the current values as
    // constants so no gradient reaches this layer.
    Node apply(Tape& t, Node x, bool frozen = false) const;
    // Gradient-free forward.
    DenseArray forward(const DenseArray& x) const;

    void collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state);
};

// Batch normalization with affine scale/shift and running statistics for
// evaluation mode. The normalization momentum is annealed linearly from
// `momentum_start` to `momentum` over the first `warmup_steps` normalization
// steps so early running averages track the batch statistics closely.
struct BatchNorm {
    Parameter gamma; // [f]
    Parameter beta;  // [f]
    DenseArray running_mean;
    DenseArray running_var;
    DenseArray steps; // scalar step counter, serialized with the stats
    double momentum = 0.99;
    double momentum_start = 0.5;
    double warmup_steps = 100000.0;
    double eps = 1e-5;
    BnMode mode = BnMode::training;

    BatchNorm(std::size_t features, const std::string& prefix);

    std::size_t features() const { return running_mean.size(); }
    double effective_momentum() const;
    void update_running(const DenseArray& batch_mean, const DenseArray& batch_var);

    // Gradient-free forward in the current mode (training mode advances the
    // running statistics, mirroring the tape op).
    DenseArray forward(const DenseArray& x);

    void collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state);

private:
    std::string id_prefix_;
};

// Fully connected net: affine -> activation -> ... -> affine (no activation
// on the output layer).
struct Mlp {
    std::vector<Linear> layers;
    Activation act = Activation::relu;

    Mlp() = default;
    Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation act,
        const std::string& prefix, Rng& rng);

    Node apply(Tape& t, Node x, bool frozen = false) const;
    DenseArray forward(const DenseArray& x) const;

    void collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state);
};

// Sin/cos features of scalar time: [sin(2*pi*f_1*t) ... sin(2*pi*f_K*t),
// cos(2*pi*f_1*t) ... cos(2*pi*f_K*t)] with K = dim/2 frequencies spaced
// geometrically in [1, 1000]. dim must be even and >= 2.
DenseArray fourier_time_embedding(double t, std::size_t dim);

} // namespace madp::nd
