#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace madp::nd {

// Dense row-major f64 array. Everything in the library is rank 0..2:
// scalars [], vectors [n], matrices [rows, cols].
class DenseArray {
public:
    DenseArray() = default;

    explicit DenseArray(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("DenseArray: shape/data size mismatch");
    }

    static DenseArray scalar(double v) { return DenseArray({}, {v}); }

    static DenseArray zeros(std::vector<std::size_t> shape) { return DenseArray(std::move(shape)); }

    static DenseArray full(std::vector<std::size_t> shape, double v) {
        DenseArray a(std::move(shape));
        for (auto& x : a.data_) x = v;
        return a;
    }

    static DenseArray vec(std::initializer_list<double> xs) {
        return DenseArray({xs.size()}, std::vector<double>(xs));
    }

    static DenseArray matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return DenseArray({rows, cols}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // Matrix view helpers: scalars count as 1x1, vectors as 1xN.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const {
        if (rank() == 2) return shape_[1];
        if (rank() == 1) return shape_[0];
        return 1;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool same_shape(const DenseArray& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const DenseArray& a, const DenseArray& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

} // namespace madp::nd
