#include "kernel_table.hpp"

#include <cmath>

namespace ipga::kernels::detail {

namespace {

template <class T> void add_s(std::size_t n, const T* a, const T* b, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T> void sub_s(std::size_t n, const T* a, const T* b, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T> void mul_s(std::size_t n, const T* a, const T* b, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T> void scale_s(std::size_t n, T s, const T* a, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = s * a[i];
}

template <class T> void axpy_s(std::size_t n, T s, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + s * x[i];
}

template <class T> T dot_s(std::size_t n, const T* a, const T* b) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class T> T sum_s(std::size_t n, const T* a) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <class T> T l1_norm_s(std::size_t n, const T* a) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(a[i]);
    return acc;
}

template <class T> void clamp_box_s(std::size_t n, const T* x, const T* lo, const T* hi, T* y) {
    for (std::size_t i = 0; i < n; ++i) {
        T v = x[i] < lo[i] ? lo[i] : x[i];
        y[i] = v > hi[i] ? hi[i] : v;
    }
}

template <class T> void sign_s(std::size_t n, const T* g, T* y) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = (g[i] > T(0)) ? T(1) : ((g[i] < T(0)) ? T(-1) : T(0));
    }
}

template <class T> void sign_step_s(std::size_t n, const T* x, const T* g, T eta, T* y) {
    for (std::size_t i = 0; i < n; ++i) {
        T s = (g[i] > T(0)) ? T(1) : ((g[i] < T(0)) ? T(-1) : T(0));
        y[i] = x[i] - eta * s;
    }
}

template <class T>
void gemm_nn_s(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        const T* arow = a + i * lda;
        for (std::size_t kk = 0; kk < k; ++kk) {
            T s = arow[kk];
            if (s == T(0)) continue;
            const T* brow = b + kk * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

template <class T>
void gemm_nt_s(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * lda;
        T* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            T acc = T(0);
            const T* brow = b + j * ldb;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

template <class T>
void gemm_tn_s(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    if (!accumulate) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            T* crow = c + kk * ldc;
            for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * lda;
        const T* brow = b + i * ldb;
        for (std::size_t kk = 0; kk < k; ++kk) {
            T s = arow[kk];
            if (s == T(0)) continue;
            T* crow = c + kk * ldc;
            for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

template <class T> KernelTable<T> make_table() {
    return KernelTable<T>{
        &add_s<T>, &sub_s<T>, &mul_s<T>, &scale_s<T>, &axpy_s<T>,
        &dot_s<T>, &sum_s<T>, &l1_norm_s<T>,
        &clamp_box_s<T>, &sign_s<T>, &sign_step_s<T>,
        &gemm_nn_s<T>, &gemm_nt_s<T>, &gemm_tn_s<T>,
    };
}

} // namespace

template <> const KernelTable<float>& scalar_table<float>() {
    static const KernelTable<float> t = make_table<float>();
    return t;
}

template <> const KernelTable<double>& scalar_table<double>() {
    static const KernelTable<double> t = make_table<double>();
    return t;
}

} // namespace ipga::kernels::detail
