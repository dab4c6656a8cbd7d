#pragma once

#include <string>
#include <vector>

#include "madp/array.hpp"

namespace madp::nd {

// Trainable leaf. Gradients accumulate into `grad` across backward passes
// until the optimizer consumes and zeroes them.
struct Parameter {
    std::string id;
    DenseArray value;
    DenseArray grad;

    Parameter() = default;
    Parameter(std::string id_, DenseArray v)
        : id(std::move(id_)), value(std::move(v)), grad(value.shape()) {}
};

struct Node {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class BnMode { training, evaluation };

struct BatchNorm; // nn.hpp

// Reverse-mode tape over f64 dense arrays. Each builder records the op and
// returns a handle; backward() runs the recorded program in reverse and
// accumulates into Parameter::grad. One tape per loss evaluation.
class Tape {
public:
    Node constant(DenseArray v);
    Node param(Parameter& p);

    Node add(Node a, Node b);
    Node sub(Node a, Node b);
    Node mul(Node a, Node b);
    Node scale(Node a, double c);
    Node add_scalar(Node a, double c);
    Node matmul(Node a, Node b);
    // y[i,j] = x[i,j] + v[j]; v is a rank-1 bias row.
    Node add_rowvec(Node x, Node v);
    Node relu(Node x);
    Node gelu(Node x);
    Node exp(Node x);
    Node log(Node x);
    Node square(Node x);
    Node clamp_min(Node x, double lo);
    Node sum_rows(Node x);  // [B,F] -> [B,1]
    Node sum_all(Node x);   // -> scalar
    Node mean_all(Node x);  // -> scalar
    Node log_softmax_rows(Node x);
    Node concat_cols(const std::vector<Node>& xs);
    Node concat_rows(Node a, Node b);
    Node slice_rows(Node x, std::size_t r0, std::size_t r1);
    Node stop_gradient(Node x);
    // Batch normalization over rows. In training mode the forward pass also
    // advances the layer's running statistics (one call = one normalization
    // step). `frozen` evaluates with running stats and constant scale/shift,
    // letting gradients pass through to x without touching the layer.
    Node batchnorm(Node x, BatchNorm& bn, bool frozen = false);

    // Composite: per-row log N(x; mean, var*I) -> [B,1].
    Node gaussian_log_density(Node x, Node mean, double var);

    const DenseArray& value(Node n) const;
    std::size_t size() const { return recs_.size(); }

    // Backpropagates from a scalar loss node into all reachable parameters.
    void backward(Node loss);

private:
    enum class Op {
        constant,
        param,
        add,
        sub,
        mul,
        scale,
        add_scalar,
        matmul,
        add_rowvec,
        relu,
        gelu,
        exp_,
        log_,
        square,
        clamp_min,
        sum_rows,
        sum_all,
        mean_all,
        log_softmax_rows,
        concat_cols,
        concat_rows,
        slice_rows,
        stop_gradient,
        batchnorm,
    };

    struct Rec {
        Op op;
        std::vector<int> in;
        DenseArray value;
        double c0 = 0.0;
        std::size_t i0 = 0, i1 = 0;
        Parameter* p = nullptr;
        BatchNorm* bn = nullptr;
        bool flag = false;       // batchnorm: frozen
        DenseArray aux0, aux1;   // batchnorm: xhat, inv-std
    };

    Node push(Rec r);
    const Rec& rec(Node n) const;
    DenseArray& grad_of(int id, const std::vector<std::size_t>& shape);

    std::vector<Rec> recs_;
    std::vector<DenseArray> grads_;
};

} // namespace madp::nd
