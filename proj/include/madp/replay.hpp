#pragma once

#include <cstddef>
#include <vector>

#include "madp/array.hpp"
#include "madp/rng.hpp"

namespace madp::train {

using nd::DenseArray;
using nd::Rng;

struct Transition {
    DenseArray s;      // global state
    DenseArray a;      // joint action (per-agent actions concatenated)
    double r_team = 0; // summed team reward
    DenseArray s_next;
    bool done = false;
    bool time_limit = false;
};

// Fixed-capacity ring with FIFO eviction and uniform sampling with
// replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }

    // i = 0 addresses the oldest retained transition.
    const Transition& at(std::size_t i) const;

    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::size_t size_ = 0;
    std::vector<Transition> store_;
};

} // namespace madp::train
