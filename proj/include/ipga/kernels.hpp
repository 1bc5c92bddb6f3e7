#pragma once

#include <cstddef>

// Low-level array kernels behind everything numeric. Each kernel has a
// scalar reference implementation and an AVX2 variant; the active backend
// is picked once at startup from CPUID and can be forced for tests.
//
// Elementwise kernels (add/sub/mul/scale/axpy/clamp_box/sign/sign_step)
// produce bitwise-identical results on every backend. Reductions
// (dot/sum/l1_norm) may differ in the last ulps because SIMD accumulates
// lanes in a different order. All kernels assume finite inputs.

namespace ipga::kernels {

enum class Backend { scalar, avx2 };

// Entry points of one backend. Hot loops fetch the active table once and
// call through it, instead of paying the dispatch lookup per call.
//
// The gemm kernels are row-major with explicit leading dimensions so
// attention-head slices of a wider matrix can be multiplied in place:
//   gemm_nn: C(M,N) (+)= A(M,K) * B(K,N)
//   gemm_nt: C(M,N) (+)= A(M,K) * B(N,K)^T
//   gemm_tn: C(K,N) (+)= A(M,K)^T * B(M,N)
template <class T>
struct KernelTable {
    void (*add)(std::size_t, const T*, const T*, T*);
    void (*sub)(std::size_t, const T*, const T*, T*);
    void (*mul)(std::size_t, const T*, const T*, T*);
    void (*scale)(std::size_t, T, const T*, T*);
    void (*axpy)(std::size_t, T, const T*, T*);
    T (*dot)(std::size_t, const T*, const T*);
    T (*sum)(std::size_t, const T*);
    T (*l1_norm)(std::size_t, const T*);
    void (*clamp_box)(std::size_t, const T*, const T*, const T*, T*);
    void (*sign)(std::size_t, const T*, T*);
    void (*sign_step)(std::size_t, const T*, const T*, T, T*);
    void (*gemm_nn)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*,
                    std::size_t, T*, std::size_t, bool);
    void (*gemm_nt)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*,
                    std::size_t, T*, std::size_t, bool);
    void (*gemm_tn)(std::size_t, std::size_t, std::size_t, const T*, std::size_t, const T*,
                    std::size_t, T*, std::size_t, bool);
};

template <class T> const KernelTable<T>& active_table();

Backend active_backend();
const char* backend_name(Backend b);
bool cpu_supports_avx2();

// Force a specific backend (tests). Throws std::invalid_argument if the
// CPU cannot run it.
void force_backend(Backend b);
// Return to automatic CPUID-based selection.
void reset_backend();

template <class T> void add(std::size_t n, const T* a, const T* b, T* y);
template <class T> void sub(std::size_t n, const T* a, const T* b, T* y);
template <class T> void mul(std::size_t n, const T* a, const T* b, T* y);
template <class T> void scale(std::size_t n, T s, const T* a, T* y);

// y[i] += s * x[i]
template <class T> void axpy(std::size_t n, T s, const T* x, T* y);

template <class T> T dot(std::size_t n, const T* a, const T* b);
template <class T> T sum(std::size_t n, const T* a);
template <class T> T l1_norm(std::size_t n, const T* a);

// y[i] = min(max(x[i], lo[i]), hi[i])
template <class T> void clamp_box(std::size_t n, const T* x, const T* lo, const T* hi, T* y);

// y[i] = sign(g[i]), with sign(0) = 0
template <class T> void sign(std::size_t n, const T* g, T* y);

// y[i] = x[i] - eta * sign(g[i])
template <class T> void sign_step(std::size_t n, const T* x, const T* g, T eta, T* y);

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

} // namespace ipga::kernels
