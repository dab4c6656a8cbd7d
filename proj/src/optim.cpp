#include "madp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace madp::nd {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw std::invalid_argument("Adam: lr must be positive");
    std::sort(params_.begin(), params_.end(),
              [](const Parameter* a, const Parameter* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < params_.size(); ++i)
        if (params_[i]->id == params_[i - 1]->id)
            throw std::invalid_argument("Adam: duplicate parameter id " + params_[i]->id);
    slots_.reserve(params_.size());
    for (const Parameter* p : params_)
        slots_.push_back({DenseArray(p->value.shape()), DenseArray(p->value.shape())});
}

void Adam::step() {
    double sq = 0.0;
    for (const Parameter* p : params_) {
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
            const double g = p->grad[i];
            if (!std::isfinite(g))
                throw std::runtime_error("Adam: non-finite gradient in parameter '" + p->id +
                                         "' at step " + std::to_string(t_ + 1));
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    last_grad_norm_ = norm;
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        Slot& s = slots_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i] * scale;
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            p.grad[i] = 0.0;
        }
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->grad.fill(0.0);
}

} // namespace madp::nd
