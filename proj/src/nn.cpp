#include "madp/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "madp/kernels.hpp"

namespace madp::nd {

Linear::Linear(std::size_t in, std::size_t out, const std::string& prefix, Rng& rng)
    : w(prefix + ".w", DenseArray({in, out})), b(prefix + ".b", DenseArray({out})) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    rng.fill_uniform(w.value, -bound, bound);
    rng.fill_uniform(b.value, -bound, bound);
}

Node Linear::apply(Tape& t, Node x, bool frozen) const {
    Node wn = frozen ? t.constant(w.value) : t.param(const_cast<Parameter&>(w));
    Node bn = frozen ? t.constant(b.value) : t.param(const_cast<Parameter&>(b));
    return t.add_rowvec(t.matmul(x, wn), bn);
}

DenseArray Linear::forward(const DenseArray& x) const {
    if (x.rank() != 2 || x.cols() != w.value.rows())
        throw std::invalid_argument("Linear: input shape mismatch");
    DenseArray y({x.rows(), w.value.cols()});
    kernels::matmul_nn(y.data(), x.data(), w.value.data(), x.rows(), x.cols(), w.value.cols());
    const std::size_t cols = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] += b.value[j];
    return y;
}

void Linear::collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state) {
    params.push_back(&w);
    params.push_back(&b);
    state.push_back({w.id, &w.value});
    state.push_back({b.id, &b.value});
}

BatchNorm::BatchNorm(std::size_t features, const std::string& prefix)
    : gamma(prefix + ".gamma", DenseArray::full({features}, 1.0)),
      beta(prefix + ".beta", DenseArray({features})),
      running_mean(DenseArray({features})),
      running_var(DenseArray::full({features}, 1.0)),
      steps(DenseArray::scalar(0.0)),
      id_prefix_(prefix) {}

double BatchNorm::effective_momentum() const {
    if (warmup_steps <= 0.0) return momentum;
    const double frac = std::min(1.0, steps[0] / warmup_steps);
    return momentum_start + (momentum - momentum_start) * frac;
}

void BatchNorm::update_running(const DenseArray& batch_mean, const DenseArray& batch_var) {
    const double m = effective_momentum();
    for (std::size_t j = 0; j < running_mean.size(); ++j) {
        running_mean[j] = m * running_mean[j] + (1.0 - m) * batch_mean[j];
        running_var[j] = m * running_var[j] + (1.0 - m) * batch_var[j];
    }
    steps[0] += 1.0;
}

DenseArray BatchNorm::forward(const DenseArray& x) {
    if (x.rank() != 2 || x.cols() != features())
        throw std::invalid_argument("BatchNorm: feature mismatch");
    const std::size_t b = x.rows(), f = x.cols();
    DenseArray mean({f}), var({f});
    if (mode == BnMode::training) {
        if (b < 2) throw std::invalid_argument("BatchNorm: training mode needs batch size >= 2");
        kernels::col_mean_var(x.data(), b, f, mean.data(), var.data());
        update_running(mean, var);
    } else {
        mean = running_mean;
        var = running_var;
    }
    DenseArray y({b, f});
    for (std::size_t j = 0; j < f; ++j) {
        const double invstd = 1.0 / std::sqrt(var[j] + eps);
        for (std::size_t i = 0; i < b; ++i)
            y[i * f + j] = gamma.value[j] * (x.at(i, j) - mean[j]) * invstd + beta.value[j];
    }
    return y;
}

void BatchNorm::collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state) {
    params.push_back(&gamma);
    params.push_back(&beta);
    state.push_back({gamma.id, &gamma.value});
    state.push_back({beta.id, &beta.value});
    state.push_back({id_prefix_ + ".running_mean", &running_mean});
    state.push_back({id_prefix_ + ".running_var", &running_var});
    state.push_back({id_prefix_ + ".steps", &steps});
}

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
         Activation act_, const std::string& prefix, Rng& rng)
    : act(act_) {
    std::size_t d = in;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        layers.emplace_back(d, hidden[i], prefix + ".l" + std::to_string(i), rng);
        d = hidden[i];
    }
    layers.emplace_back(d, out, prefix + ".l" + std::to_string(hidden.size()), rng);
}

Node Mlp::apply(Tape& t, Node x, bool frozen) const {
    Node h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].apply(t, h, frozen);
        if (i + 1 < layers.size()) h = (act == Activation::relu) ? t.relu(h) : t.gelu(h);
    }
    return h;
}

DenseArray Mlp::forward(const DenseArray& x) const {
    DenseArray h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size()) {
            if (act == Activation::relu) {
                for (std::size_t k = 0; k < h.size(); ++k)
                    if (h[k] < 0.0) h[k] = 0.0;
            } else {
                kernels::gelu(h.data(), h.data(), h.size());
            }
        }
    }
    return h;
}

void Mlp::collect(std::vector<Parameter*>& params, std::vector<StateEntry>& state) {
    for (auto& l : layers) l.collect(params, state);
}

DenseArray fourier_time_embedding(double t, std::size_t dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("fourier_time_embedding: dim must be even and >= 2");
    const std::size_t k = dim / 2;
    const double two_pi = 6.283185307179586476925286766559;
    DenseArray e({dim});
    for (std::size_t i = 0; i < k; ++i) {
        const double expo = (k == 1) ? 0.0 : static_cast<double>(i) / static_cast<double>(k - 1);
        const double freq = std::pow(1000.0, expo);
        e[i] = std::sin(two_pi * freq * t);
        e[k + i] = std::cos(two_pi * freq * t);
    }
    return e;
}

} // namespace madp::nd
