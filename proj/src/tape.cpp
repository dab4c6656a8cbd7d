#include "madp/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "madp/kernels.hpp"
#include "madp/nn.hpp"

namespace madp::nd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_valid(Node n, const char* what) {
    if (!n.valid()) throw std::invalid_argument(std::string(what) + ": invalid node");
}

} // namespace

Node Tape::push(Rec r) {
    recs_.push_back(std::move(r));
    return Node{static_cast<int>(recs_.size()) - 1};
}

const Tape::Rec& Tape::rec(Node n) const {
    if (!n.valid() || static_cast<std::size_t>(n.id) >= recs_.size())
        throw std::invalid_argument("Tape: node does not belong to this tape");
    return recs_[static_cast<std::size_t>(n.id)];
}

const DenseArray& Tape::value(Node n) const { return rec(n).value; }

DenseArray& Tape::grad_of(int id, const std::vector<std::size_t>& shape) {
    DenseArray& g = grads_[static_cast<std::size_t>(id)];
    if (g.size() == 0) g = DenseArray(shape);
    return g;
}

Node Tape::constant(DenseArray v) {
    Rec r;
    r.op = Op::constant;
    r.value = std::move(v);
    return push(std::move(r));
}

Node Tape::param(Parameter& p) {
    Rec r;
    r.op = Op::param;
    r.value = p.value;
    r.p = &p;
    return push(std::move(r));
}

Node Tape::add(Node a, Node b) {
    check_valid(a, "add");
    check_valid(b, "add");
    const DenseArray& x = rec(a).value;
    const DenseArray& y = rec(b).value;
    require_same_shape(x, y, "add");
    Rec r;
    r.op = Op::add;
    r.in = {a.id, b.id};
    r.value = x;
    for (std::size_t i = 0; i < y.size(); ++i) r.value[i] += y[i];
    return push(std::move(r));
}

Node Tape::sub(Node a, Node b) {
    check_valid(a, "sub");
    check_valid(b, "sub");
    const DenseArray& x = rec(a).value;
    const DenseArray& y = rec(b).value;
    require_same_shape(x, y, "sub");
    Rec r;
    r.op = Op::sub;
    r.in = {a.id, b.id};
    r.value = x;
    for (std::size_t i = 0; i < y.size(); ++i) r.value[i] -= y[i];
    return push(std::move(r));
}

Node Tape::mul(Node a, Node b) {
    check_valid(a, "mul");
    check_valid(b, "mul");
    const DenseArray& x = rec(a).value;
    const DenseArray& y = rec(b).value;
    require_same_shape(x, y, "mul");
    Rec r;
    r.op = Op::mul;
    r.in = {a.id, b.id};
    r.value = x;
    for (std::size_t i = 0; i < y.size(); ++i) r.value[i] *= y[i];
    return push(std::move(r));
}

Node Tape::scale(Node a, double c) {
    check_valid(a, "scale");
    Rec r;
    r.op = Op::scale;
    r.in = {a.id};
    r.value = rec(a).value;
    r.c0 = c;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] *= c;
    return push(std::move(r));
}

Node Tape::add_scalar(Node a, double c) {
    check_valid(a, "add_scalar");
    Rec r;
    r.op = Op::add_scalar;
    r.in = {a.id};
    r.value = rec(a).value;
    r.c0 = c;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] += c;
    return push(std::move(r));
}

Node Tape::matmul(Node a, Node b) {
    check_valid(a, "matmul");
    check_valid(b, "matmul");
    const DenseArray& x = rec(a).value;
    const DenseArray& y = rec(b).value;
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + x.shape_str() + " x " +
                                    y.shape_str());
    Rec r;
    r.op = Op::matmul;
    r.in = {a.id, b.id};
    r.value = DenseArray({x.rows(), y.cols()});
    kernels::matmul_nn(r.value.data(), x.data(), y.data(), x.rows(), x.cols(), y.cols());
    return push(std::move(r));
}

Node Tape::add_rowvec(Node x, Node v) {
    check_valid(x, "add_rowvec");
    check_valid(v, "add_rowvec");
    const DenseArray& xv = rec(x).value;
    const DenseArray& vv = rec(v).value;
    if (xv.rank() != 2 || vv.rank() != 1 || xv.cols() != vv.size())
        throw std::invalid_argument("add_rowvec: incompatible shapes");
    Rec r;
    r.op = Op::add_rowvec;
    r.in = {x.id, v.id};
    r.value = xv;
    const std::size_t cols = xv.cols();
    for (std::size_t i = 0; i < xv.rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) r.value[i * cols + j] += vv[j];
    return push(std::move(r));
}

Node Tape::relu(Node x) {
    check_valid(x, "relu");
    Rec r;
    r.op = Op::relu;
    r.in = {x.id};
    r.value = rec(x).value;
    for (std::size_t i = 0; i < r.value.size(); ++i)
        if (r.value[i] < 0.0) r.value[i] = 0.0;
    return push(std::move(r));
}

Node Tape::gelu(Node x) {
    check_valid(x, "gelu");
    const DenseArray& xv = rec(x).value;
    Rec r;
    r.op = Op::gelu;
    r.in = {x.id};
    r.value = DenseArray(xv.shape());
    kernels::gelu(r.value.data(), xv.data(), xv.size());
    return push(std::move(r));
}

Node Tape::exp(Node x) {
    check_valid(x, "exp");
    Rec r;
    r.op = Op::exp_;
    r.in = {x.id};
    r.value = rec(x).value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] = std::exp(r.value[i]);
    return push(std::move(r));
}

Node Tape::log(Node x) {
    check_valid(x, "log");
    Rec r;
    r.op = Op::log_;
    r.in = {x.id};
    r.value = rec(x).value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] = std::log(r.value[i]);
    return push(std::move(r));
}

Node Tape::square(Node x) {
    check_valid(x, "square");
    Rec r;
    r.op = Op::square;
    r.in = {x.id};
    r.value = rec(x).value;
    for (std::size_t i = 0; i < r.value.size(); ++i) r.value[i] *= r.value[i];
    return push(std::move(r));
}

Node Tape::clamp_min(Node x, double lo) {
    check_valid(x, "clamp_min");
    Rec r;
    r.op = Op::clamp_min;
    r.in = {x.id};
    r.value = rec(x).value;
    r.c0 = lo;
    for (std::size_t i = 0; i < r.value.size(); ++i)
        if (r.value[i] < lo) r.value[i] = lo;
    return push(std::move(r));
}

Node Tape::sum_rows(Node x) {
    check_valid(x, "sum_rows");
    const DenseArray& xv = rec(x).value;
    if (xv.rank() != 2) throw std::invalid_argument("sum_rows: rank-2 input required");
    Rec r;
    r.op = Op::sum_rows;
    r.in = {x.id};
    r.value = DenseArray({xv.rows(), 1});
    const std::size_t cols = xv.cols();
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += xv[i * cols + j];
        r.value[i] = s;
    }
    return push(std::move(r));
}

Node Tape::sum_all(Node x) {
    check_valid(x, "sum_all");
    const DenseArray& xv = rec(x).value;
    Rec r;
    r.op = Op::sum_all;
    r.in = {x.id};
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    r.value = DenseArray::scalar(s);
    return push(std::move(r));
}

Node Tape::mean_all(Node x) {
    check_valid(x, "mean_all");
    const DenseArray& xv = rec(x).value;
    if (xv.size() == 0) throw std::invalid_argument("mean_all: empty input");
    Rec r;
    r.op = Op::mean_all;
    r.in = {x.id};
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    r.value = DenseArray::scalar(s / static_cast<double>(xv.size()));
    return push(std::move(r));
}

Node Tape::log_softmax_rows(Node x) {
    check_valid(x, "log_softmax_rows");
    const DenseArray& xv = rec(x).value;
    if (xv.rank() != 2) throw std::invalid_argument("log_softmax_rows: rank-2 input required");
    Rec r;
    r.op = Op::log_softmax_rows;
    r.in = {x.id};
    r.value = DenseArray(xv.shape());
    kernels::log_softmax_rows(r.value.data(), xv.data(), xv.rows(), xv.cols());
    return push(std::move(r));
}

Node Tape::concat_cols(const std::vector<Node>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t rows = rec(xs[0]).value.rows();
    std::size_t cols = 0;
    for (Node n : xs) {
        check_valid(n, "concat_cols");
        const DenseArray& v = rec(n).value;
        if (v.rank() != 2 || v.rows() != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += v.cols();
    }
    Rec r;
    r.op = Op::concat_cols;
    r.value = DenseArray({rows, cols});
    std::size_t off = 0;
    for (Node n : xs) {
        r.in.push_back(n.id);
        const DenseArray& v = rec(n).value;
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) r.value[i * cols + off + j] = v.at(i, j);
        off += v.cols();
    }
    return push(std::move(r));
}

Node Tape::concat_rows(Node a, Node b) {
    check_valid(a, "concat_rows");
    check_valid(b, "concat_rows");
    const DenseArray& x = rec(a).value;
    const DenseArray& y = rec(b).value;
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
        throw std::invalid_argument("concat_rows: column mismatch");
    Rec r;
    r.op = Op::concat_rows;
    r.in = {a.id, b.id};
    r.value = DenseArray({x.rows() + y.rows(), x.cols()});
    for (std::size_t i = 0; i < x.size(); ++i) r.value[i] = x[i];
    for (std::size_t i = 0; i < y.size(); ++i) r.value[x.size() + i] = y[i];
    return push(std::move(r));
}

Node Tape::slice_rows(Node x, std::size_t r0, std::size_t r1) {
    check_valid(x, "slice_rows");
    const DenseArray& xv = rec(x).value;
    if (xv.rank() != 2 || r0 >= r1 || r1 > xv.rows())
        throw std::invalid_argument("slice_rows: bad range");
    Rec r;
    r.op = Op::slice_rows;
    r.in = {x.id};
    r.i0 = r0;
    r.i1 = r1;
    const std::size_t cols = xv.cols();
    r.value = DenseArray({r1 - r0, cols});
    for (std::size_t i = 0; i < r1 - r0; ++i)
        for (std::size_t j = 0; j < cols; ++j) r.value[i * cols + j] = xv.at(r0 + i, j);
    return push(std::move(r));
}

Node Tape::stop_gradient(Node x) {
    check_valid(x, "stop_gradient");
    Rec r;
    r.op = Op::stop_gradient;
    r.in = {x.id};
    r.value = rec(x).value;
    return push(std::move(r));
}

Node Tape::batchnorm(Node x, BatchNorm& bn, bool frozen) {
    check_valid(x, "batchnorm");
    const DenseArray& xv = rec(x).value;
    if (xv.rank() != 2 || xv.cols() != bn.features())
        throw std::invalid_argument("batchnorm: feature mismatch");
    const bool training = !frozen && bn.mode == BnMode::training;
    if (training && xv.rows() < 2)
        throw std::invalid_argument("batchnorm: training mode needs batch size >= 2");

    const std::size_t b = xv.rows(), f = xv.cols();
    DenseArray mean({f}), var({f});
    if (training) {
        kernels::col_mean_var(xv.data(), b, f, mean.data(), var.data());
        bn.update_running(mean, var);
    } else {
        mean = bn.running_mean;
        var = bn.running_var;
    }

    Rec r;
    r.op = Op::batchnorm;
    r.in = {x.id};
    r.bn = &bn;
    r.flag = frozen || bn.mode == BnMode::evaluation;
    r.aux0 = DenseArray({b, f}); // xhat
    r.aux1 = DenseArray({f});    // inv-std
    r.value = DenseArray({b, f});
    // frozen keeps gamma/beta out of the gradient; remember it via bn==nullptr
    if (frozen) r.bn = nullptr;
    for (std::size_t j = 0; j < f; ++j) r.aux1[j] = 1.0 / std::sqrt(var[j] + bn.eps);
    const double* gamma = bn.gamma.value.data();
    const double* beta = bn.beta.value.data();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double xh = (xv.at(i, j) - mean[j]) * r.aux1[j];
            r.aux0[i * f + j] = xh;
            r.value[i * f + j] = gamma[j] * xh + beta[j];
        }
    if (frozen) {
        // keep the constants needed for dx; pack gamma*invstd into aux1
        for (std::size_t j = 0; j < f; ++j) r.aux1[j] *= gamma[j];
        r.aux0 = DenseArray({0});
    }
    return push(std::move(r));
}

Node Tape::gaussian_log_density(Node x, Node mean, double var) {
    if (var <= 0.0) throw std::invalid_argument("gaussian_log_density: var must be positive");
    const std::size_t d = rec(x).value.cols();
    Node diff = sub(x, mean);
    Node quad = sum_rows(square(diff));
    Node scaled = scale(quad, -0.5 / var);
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(kTwoPi * var);
    return add_scalar(scaled, log_norm);
}

void Tape::backward(Node loss) {
    const Rec& lr = rec(loss);
    if (lr.value.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + lr.value.shape_str());

    grads_.assign(recs_.size(), DenseArray());
    grads_[static_cast<std::size_t>(loss.id)] = DenseArray(lr.value.shape());
    grads_[static_cast<std::size_t>(loss.id)][0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        Rec& r = recs_[static_cast<std::size_t>(id)];
        DenseArray& g = grads_[static_cast<std::size_t>(id)];
        if (g.size() == 0) continue; // not reachable from the loss

        switch (r.op) {
        case Op::constant:
            break;
        case Op::param:
            for (std::size_t i = 0; i < g.size(); ++i) r.p->grad[i] += g[i];
            break;
        case Op::add: {
            DenseArray& ga = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            DenseArray& gb = grad_of(r.in[1], recs_[r.in[1]].value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case Op::sub: {
            DenseArray& ga = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            DenseArray& gb = grad_of(r.in[1], recs_[r.in[1]].value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case Op::mul: {
            const DenseArray& av = recs_[r.in[0]].value;
            const DenseArray& bv = recs_[r.in[1]].value;
            DenseArray& ga = grad_of(r.in[0], av.shape());
            DenseArray& gb = grad_of(r.in[1], bv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bv[i];
                gb[i] += g[i] * av[i];
            }
            break;
        }
        case Op::scale: {
            DenseArray& ga = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += r.c0 * g[i];
            break;
        }
        case Op::add_scalar: {
            DenseArray& ga = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            break;
        }
        case Op::matmul: {
            const DenseArray& av = recs_[r.in[0]].value;
            const DenseArray& bv = recs_[r.in[1]].value;
            DenseArray& ga = grad_of(r.in[0], av.shape());
            DenseArray& gb = grad_of(r.in[1], bv.shape());
            // dA += g * B^T ; dB += A^T * g
            kernels::matmul_nt_acc(ga.data(), g.data(), bv.data(), av.rows(), bv.cols(),
                                   av.cols());
            kernels::matmul_tn_acc(gb.data(), av.data(), g.data(), av.cols(), av.rows(),
                                   bv.cols());
            break;
        }
        case Op::add_rowvec: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            DenseArray& gv = grad_of(r.in[1], recs_[r.in[1]].value.shape());
            const std::size_t cols = xv.cols();
            for (std::size_t i = 0; i < xv.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) {
                    gx[i * cols + j] += g[i * cols + j];
                    gv[j] += g[i * cols + j];
                }
            break;
        }
        case Op::relu: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xv[i] > 0.0) gx[i] += g[i];
            break;
        }
        case Op::gelu: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i] * kernels::gelu_grad_scalar(xv[i]);
            break;
        }
        case Op::exp_: {
            DenseArray& gx = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * r.value[i];
            break;
        }
        case Op::log_: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xv[i];
            break;
        }
        case Op::square: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
            break;
        }
        case Op::clamp_min: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            for (std::size_t i = 0; i < g.size(); ++i)
                if (xv[i] > r.c0) gx[i] += g[i];
            break;
        }
        case Op::sum_rows: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            const std::size_t cols = xv.cols();
            for (std::size_t i = 0; i < xv.rows(); ++i)
                for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[i];
            break;
        }
        case Op::sum_all: {
            DenseArray& gx = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
            break;
        }
        case Op::mean_all: {
            DenseArray& gx = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            const double inv = 1.0 / static_cast<double>(gx.size());
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * inv;
            break;
        }
        case Op::log_softmax_rows: {
            const DenseArray& yv = r.value;
            DenseArray& gx = grad_of(r.in[0], recs_[r.in[0]].value.shape());
            const std::size_t cols = yv.cols();
            for (std::size_t i = 0; i < yv.rows(); ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < cols; ++j) gsum += g[i * cols + j];
                for (std::size_t j = 0; j < cols; ++j)
                    gx[i * cols + j] += g[i * cols + j] - std::exp(yv[i * cols + j]) * gsum;
            }
            break;
        }
        case Op::concat_cols: {
            const std::size_t cols = r.value.cols();
            std::size_t off = 0;
            for (int cid : r.in) {
                const DenseArray& xv = recs_[cid].value;
                DenseArray& gx = grad_of(cid, xv.shape());
                const std::size_t c = xv.cols();
                for (std::size_t i = 0; i < xv.rows(); ++i)
                    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * cols + off + j];
                off += c;
            }
            break;
        }
        case Op::concat_rows: {
            const DenseArray& av = recs_[r.in[0]].value;
            const DenseArray& bv = recs_[r.in[1]].value;
            DenseArray& ga = grad_of(r.in[0], av.shape());
            DenseArray& gb = grad_of(r.in[1], bv.shape());
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g[i];
            for (std::size_t i = 0; i < bv.size(); ++i) gb[i] += g[av.size() + i];
            break;
        }
        case Op::slice_rows: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            const std::size_t cols = xv.cols();
            for (std::size_t i = 0; i < r.i1 - r.i0; ++i)
                for (std::size_t j = 0; j < cols; ++j)
                    gx[(r.i0 + i) * cols + j] += g[i * cols + j];
            break;
        }
        case Op::stop_gradient:
            break;
        case Op::batchnorm: {
            const DenseArray& xv = recs_[r.in[0]].value;
            DenseArray& gx = grad_of(r.in[0], xv.shape());
            const std::size_t b = xv.rows(), f = xv.cols();
            if (r.bn == nullptr) {
                // frozen: dx = g * (gamma * invstd), packed in aux1
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j)
                        gx[i * f + j] += g[i * f + j] * r.aux1[j];
                break;
            }
            BatchNorm& bn = *r.bn;
            const double* gamma = bn.gamma.value.data();
            if (r.flag) {
                // evaluation mode: running stats are constants
                for (std::size_t j = 0; j < f; ++j) {
                    double dg = 0.0, db = 0.0;
                    for (std::size_t i = 0; i < b; ++i) {
                        const double gij = g[i * f + j];
                        dg += gij * r.aux0[i * f + j];
                        db += gij;
                        gx[i * f + j] += gij * gamma[j] * r.aux1[j];
                    }
                    bn.gamma.grad[j] += dg;
                    bn.beta.grad[j] += db;
                }
            } else {
                // training mode: batch statistics are functions of x
                const double invb = 1.0 / static_cast<double>(b);
                for (std::size_t j = 0; j < f; ++j) {
                    double dg = 0.0, db = 0.0, dxh_sum = 0.0, dxh_xhat = 0.0;
                    for (std::size_t i = 0; i < b; ++i) {
                        const double gij = g[i * f + j];
                        const double xh = r.aux0[i * f + j];
                        dg += gij * xh;
                        db += gij;
                        const double dxh = gij * gamma[j];
                        dxh_sum += dxh;
                        dxh_xhat += dxh * xh;
                    }
                    bn.gamma.grad[j] += dg;
                    bn.beta.grad[j] += db;
                    for (std::size_t i = 0; i < b; ++i) {
                        const double xh = r.aux0[i * f + j];
                        const double dxh = g[i * f + j] * gamma[j];
                        gx[i * f + j] +=
                            r.aux1[j] * (dxh - invb * dxh_sum - invb * xh * dxh_xhat);
                    }
                }
            }
            break;
        }
        }
    }
    grads_.clear();
}

} // namespace madp::nd
