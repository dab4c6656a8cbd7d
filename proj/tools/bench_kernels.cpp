// Timing comparison of the OpenMP kernels against their serial reference
// implementations, with a bitwise-equality check on every measured case.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "madp/array.hpp"
#include "madp/kernels.hpp"
#include "madp/rng.hpp"

using madp::nd::DenseArray;
using madp::nd::Rng;
namespace k = madp::nd::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
    fn(); // warm once
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

bool bitwise_equal(const DenseArray& a, const DenseArray& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

int main() {
    Rng rng(42);
    std::printf("threads available: %d\n\n", k::max_threads());
    std::printf("%-28s %12s %12s %9s %8s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "bitwise");

    int mismatches = 0;
    // serial_fn calls the _serial reference directly; parallel_fn goes through
    // the dispatching kernel with the parallel path enabled.
    auto report = [&](const std::string& name, const std::function<void()>& serial_fn,
                      const std::function<void()>& parallel_fn, const DenseArray& serial_out,
                      const DenseArray& parallel_out, int iters) {
        k::set_parallel(true);
        const double ts = time_ms(serial_fn, iters);
        const double tp = time_ms(parallel_fn, iters);
        serial_fn();
        parallel_fn();
        const bool same = bitwise_equal(serial_out, parallel_out);
        if (!same) ++mismatches;
        std::printf("%-28s %12.3f %12.3f %8.2fx %8s\n", name.c_str(), ts, tp, ts / tp,
                    same ? "yes" : "NO");
    };

    const std::size_t m = 256, kk = 512, n = 512;
    {
        DenseArray a({m, kk}), b({kk, n}), c1({m, n}), c2({m, n});
        rng.fill_normal(a);
        rng.fill_normal(b);
        report(
            "matmul_nn 256x512x512",
            [&] { k::matmul_nn_serial(c1.data(), a.data(), b.data(), m, kk, n); },
            [&] { k::matmul_nn(c2.data(), a.data(), b.data(), m, kk, n); }, c1, c2, 20);
    }
    {
        DenseArray a({m, kk}), b({n, kk}), c1({m, n}), c2({m, n});
        rng.fill_normal(a);
        rng.fill_normal(b);
        report(
            "matmul_nt 256x512x512",
            [&] { k::matmul_nt_serial(c1.data(), a.data(), b.data(), m, kk, n); },
            [&] { k::matmul_nt(c2.data(), a.data(), b.data(), m, kk, n); }, c1, c2, 20);
    }
    {
        const std::size_t kt = 2048, mt = 256, nt = 256;
        DenseArray a({kt, mt}), b({kt, nt}), c1({mt, nt}), c2({mt, nt});
        rng.fill_normal(a);
        rng.fill_normal(b);
        report(
            "matmul_tn 2048x256x256",
            [&] { k::matmul_tn_serial(c1.data(), a.data(), b.data(), mt, kt, nt); },
            [&] { k::matmul_tn(c2.data(), a.data(), b.data(), mt, kt, nt); }, c1, c2, 20);
    }
    {
        const std::size_t rows = 4096, f = 512;
        DenseArray x({rows, f}), mv1({2, f}), mv2({2, f});
        rng.fill_normal(x);
        report(
            "col_mean_var 4096x512",
            [&] { k::col_mean_var_serial(x.data(), rows, f, mv1.data(), mv1.data() + f); },
            [&] { k::col_mean_var(x.data(), rows, f, mv2.data(), mv2.data() + f); }, mv1, mv2,
            50);
    }
    {
        const std::size_t rows = 2048, f = 512;
        DenseArray x({rows, f}), y1({rows, f}), y2({rows, f});
        rng.fill_normal(x);
        report(
            "log_softmax_rows 2048x512",
            [&] { k::log_softmax_rows_serial(y1.data(), x.data(), rows, f); },
            [&] { k::log_softmax_rows(y2.data(), x.data(), rows, f); }, y1, y2, 50);
    }
    {
        const std::size_t nel = 2048 * 1024;
        DenseArray x({nel}), y1({nel}), y2({nel});
        rng.fill_normal(x);
        report(
            "gelu 2048x1024", [&] { k::gelu_serial(y1.data(), x.data(), nel); },
            [&] { k::gelu(y2.data(), x.data(), nel); }, y1, y2, 50);
    }

    std::printf("\n%s\n", mismatches == 0 ? "all kernels bitwise-identical across paths"
                                          : "BITWISE MISMATCH DETECTED");
    return mismatches == 0 ? 0 : 1;
}
