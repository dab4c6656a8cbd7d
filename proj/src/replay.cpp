#include "madp/replay.hpp"

#include <stdexcept>

namespace madp::train {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    store_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
    if (size_ < capacity_) {
        store_.push_back(std::move(t));
        ++size_;
    } else {
        store_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("ReplayBuffer: index past size");
    if (size_ < capacity_) return store_[i];
    return store_[(cursor_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
    if (size_ == 0) throw std::runtime_error("ReplayBuffer: cannot sample from empty buffer");
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t k = 0; k < batch; ++k) out.push_back(&store_[rng.uniform_index(size_)]);
    return out;
}

} // namespace madp::train
