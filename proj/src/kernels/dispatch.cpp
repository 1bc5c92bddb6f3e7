#include "ipga/kernels.hpp"

#include "kernel_table.hpp"

#include <atomic>
#include <stdexcept>

namespace ipga::kernels {

namespace {

Backend detect() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
    if (__builtin_cpu_supports("avx2") && detail::avx2_table<double>() != nullptr) {
        return Backend::avx2;
    }
#endif
    return Backend::scalar;
}

std::atomic<Backend> g_backend{detect()};

template <class T> const KernelTable<T>& table() {
    if (g_backend.load(std::memory_order_relaxed) == Backend::avx2) {
        return *detail::avx2_table<T>();
    }
    return detail::scalar_table<T>();
}

} // namespace

template <class T> const KernelTable<T>& active_table() { return table<T>(); }
template const KernelTable<float>& active_table<float>();
template const KernelTable<double>& active_table<double>();

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

const char* backend_name(Backend b) {
    switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    }
    return "?";
}

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && detail::avx2_table<double>() != nullptr;
#else
    return false;
#endif
}

void force_backend(Backend b) {
    if (b == Backend::avx2 && !cpu_supports_avx2()) {
        throw std::invalid_argument("kernels: avx2 backend not supported on this CPU");
    }
    g_backend.store(b, std::memory_order_relaxed);
}

void reset_backend() { g_backend.store(detect(), std::memory_order_relaxed); }

template <class T> void add(std::size_t n, const T* a, const T* b, T* y) { table<T>().add(n, a, b, y); }
template <class T> void sub(std::size_t n, const T* a, const T* b, T* y) { table<T>().sub(n, a, b, y); }
template <class T> void mul(std::size_t n, const T* a, const T* b, T* y) { table<T>().mul(n, a, b, y); }
template <class T> void scale(std::size_t n, T s, const T* a, T* y) { table<T>().scale(n, s, a, y); }
template <class T> void axpy(std::size_t n, T s, const T* x, T* y) { table<T>().axpy(n, s, x, y); }
template <class T> T dot(std::size_t n, const T* a, const T* b) { return table<T>().dot(n, a, b); }
template <class T> T sum(std::size_t n, const T* a) { return table<T>().sum(n, a); }
template <class T> T l1_norm(std::size_t n, const T* a) { return table<T>().l1_norm(n, a); }
template <class T> void clamp_box(std::size_t n, const T* x, const T* lo, const T* hi, T* y) {
    table<T>().clamp_box(n, x, lo, hi, y);
}
template <class T> void sign(std::size_t n, const T* g, T* y) { table<T>().sign(n, g, y); }
template <class T> void sign_step(std::size_t n, const T* x, const T* g, T eta, T* y) {
    table<T>().sign_step(n, x, g, eta, y);
}
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    table<T>().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    table<T>().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    table<T>().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template void add<float>(std::size_t, const float*, const float*, float*);
template void add<double>(std::size_t, const double*, const double*, double*);
template void sub<float>(std::size_t, const float*, const float*, float*);
template void sub<double>(std::size_t, const double*, const double*, double*);
template void mul<float>(std::size_t, const float*, const float*, float*);
template void mul<double>(std::size_t, const double*, const double*, double*);
template void scale<float>(std::size_t, float, const float*, float*);
template void scale<double>(std::size_t, double, const double*, double*);
template void axpy<float>(std::size_t, float, const float*, float*);
template void axpy<double>(std::size_t, double, const double*, double*);
template float dot<float>(std::size_t, const float*, const float*);
template double dot<double>(std::size_t, const double*, const double*);
template float sum<float>(std::size_t, const float*);
template double sum<double>(std::size_t, const double*);
template float l1_norm<float>(std::size_t, const float*);
template double l1_norm<double>(std::size_t, const double*);
template void clamp_box<float>(std::size_t, const float*, const float*, const float*, float*);
template void clamp_box<double>(std::size_t, const double*, const double*, const double*, double*);
template void sign<float>(std::size_t, const float*, float*);
template void sign<double>(std::size_t, const double*, double*);
template void sign_step<float>(std::size_t, const float*, const float*, float, float*);
template void sign_step<double>(std::size_t, const double*, const double*, double, double*);
template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t, bool);

} // namespace ipga::kernels
