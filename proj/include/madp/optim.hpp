#pragma once

#include <vector>

#include "madp/tape.hpp"

namespace madp::nd {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0; // global gradient norm ceiling; <= 0 disables clipping
};

// Adam with bias correction and global-norm gradient clipping. Parameters are
// traversed in id order, so the update sequence is independent of
// registration order. step() consumes and zeroes the accumulated gradients;
// a non-finite gradient aborts with a diagnostic naming the parameter.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    void step();
    void zero_grad();
    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    double last_grad_norm() const { return last_grad_norm_; }

private:
    struct Slot {
        DenseArray m, v;
    };

    std::vector<Parameter*> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    long t_ = 0;
    double last_grad_norm_ = 0.0;
};

} // namespace madp::nd
