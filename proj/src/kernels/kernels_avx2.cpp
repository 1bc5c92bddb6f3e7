// AVX2 kernel variants. Built with -mavx2 and without -mfma: elementwise
// kernels then round exactly like the scalar reference, so they match it
// bitwise. Reductions sum lanes at the end and may differ in the last ulps.

#include "kernel_table.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define IPGA_HAVE_X86 1
#else
#define IPGA_HAVE_X86 0
#endif

#if IPGA_HAVE_X86
#include <immintrin.h>
#endif

namespace ipga::kernels::detail {

#if IPGA_HAVE_X86

namespace {

// ---------------------------------------------------------------- double --

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

void add_d(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_d(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_d(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_d(std::size_t n, double s, const double* a, double* y) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_mul_pd(vs, _mm256_loadu_pd(a + i)));
    }
    for (; i < n; ++i) y[i] = s * a[i];
}

void axpy_d(std::size_t n, double s, const double* x, double* y) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(vs, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + s * x[i];
}

double dot_d(std::size_t n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum_d(std::size_t n, const double* a) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

double l1_norm_d(std::size_t n, const double* a) {
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_and_pd(absmask, _mm256_loadu_pd(a + i)));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += std::abs(a[i]);
    return r;
}

void clamp_box_d(std::size_t n, const double* x, const double* lo, const double* hi, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_max_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(lo + i));
        _mm256_storeu_pd(y + i, _mm256_min_pd(v, _mm256_loadu_pd(hi + i)));
    }
    for (; i < n; ++i) {
        double v = x[i] < lo[i] ? lo[i] : x[i];
        y[i] = v > hi[i] ? hi[i] : v;
    }
}

inline __m256d sign_v(__m256d g) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    __m256d pos = _mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_GT_OQ), one);
    __m256d neg = _mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_LT_OQ), one);
    return _mm256_sub_pd(pos, neg);
}

void sign_d(std::size_t n, const double* g, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, sign_v(_mm256_loadu_pd(g + i)));
    for (; i < n; ++i) y[i] = (g[i] > 0.0) ? 1.0 : ((g[i] < 0.0) ? -1.0 : 0.0);
}

void sign_step_d(std::size_t n, const double* x, const double* g, double eta, double* y) {
    const __m256d ve = _mm256_set1_pd(eta);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d step = _mm256_mul_pd(ve, sign_v(_mm256_loadu_pd(g + i)));
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), step));
    }
    for (; i < n; ++i) {
        double s = (g[i] > 0.0) ? 1.0 : ((g[i] < 0.0) ? -1.0 : 0.0);
        y[i] = x[i] - eta * s;
    }
}

void gemm_nn_d(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = a + i * lda;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double s = arow[kk];
            if (s == 0.0) continue;
            const double* brow = b + kk * ldb;
            const __m256d vs = _mm256_set1_pd(s);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d prod = _mm256_mul_pd(vs, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

void gemm_nt_d(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * ldb;
            __m256d acc = _mm256_setzero_pd();
            std::size_t kk = 0;
            for (; kk + 4 <= k; kk += 4) {
                acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(arow + kk),
                                                       _mm256_loadu_pd(brow + kk)));
            }
            double r = hsum(acc);
            for (; kk < k; ++kk) r += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + r : r;
        }
    }
}

void gemm_tn_d(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
    if (!accumulate) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double* crow = c + kk * ldc;
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        const double* brow = b + i * ldb;
        for (std::size_t kk = 0; kk < k; ++kk) {
            double s = arow[kk];
            if (s == 0.0) continue;
            double* crow = c + kk * ldc;
            const __m256d vs = _mm256_set1_pd(s);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d prod = _mm256_mul_pd(vs, _mm256_loadu_pd(brow + j));
                _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

// ----------------------------------------------------------------- float --

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

void add_f(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

void scale_f(std::size_t n, float s, const float* a, float* y) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_mul_ps(vs, _mm256_loadu_ps(a + i)));
    }
    for (; i < n; ++i) y[i] = s * a[i];
}

void axpy_f(std::size_t n, float s, const float* x, float* y) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 prod = _mm256_mul_ps(vs, _mm256_loadu_ps(x + i));
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + s * x[i];
}

float dot_f(std::size_t n, const float* a, const float* b) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    float r = hsum(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

float sum_f(std::size_t n, const float* a) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
    float r = hsum(acc);
    for (; i < n; ++i) r += a[i];
    return r;
}

float l1_norm_f(std::size_t n, const float* a) {
    const __m256 absmask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fffffff));
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc = _mm256_add_ps(acc, _mm256_and_ps(absmask, _mm256_loadu_ps(a + i)));
    }
    float r = hsum(acc);
    for (; i < n; ++i) r += std::abs(a[i]);
    return r;
}

void clamp_box_f(std::size_t n, const float* x, const float* lo, const float* hi, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_max_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(lo + i));
        _mm256_storeu_ps(y + i, _mm256_min_ps(v, _mm256_loadu_ps(hi + i)));
    }
    for (; i < n; ++i) {
        float v = x[i] < lo[i] ? lo[i] : x[i];
        y[i] = v > hi[i] ? hi[i] : v;
    }
}

inline __m256 sign_v(__m256 g) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 one = _mm256_set1_ps(1.0f);
    __m256 pos = _mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_GT_OQ), one);
    __m256 neg = _mm256_and_ps(_mm256_cmp_ps(g, zero, _CMP_LT_OQ), one);
    return _mm256_sub_ps(pos, neg);
}

void sign_f(std::size_t n, const float* g, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, sign_v(_mm256_loadu_ps(g + i)));
    for (; i < n; ++i) y[i] = (g[i] > 0.0f) ? 1.0f : ((g[i] < 0.0f) ? -1.0f : 0.0f);
}

void sign_step_f(std::size_t n, const float* x, const float* g, float eta, float* y) {
    const __m256 ve = _mm256_set1_ps(eta);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 step = _mm256_mul_ps(ve, sign_v(_mm256_loadu_ps(g + i)));
        _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(x + i), step));
    }
    for (; i < n; ++i) {
        float s = (g[i] > 0.0f) ? 1.0f : ((g[i] < 0.0f) ? -1.0f : 0.0f);
        y[i] = x[i] - eta * s;
    }
}

void gemm_nn_f(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
        const float* arow = a + i * lda;
        for (std::size_t kk = 0; kk < k; ++kk) {
            float s = arow[kk];
            if (s == 0.0f) continue;
            const float* brow = b + kk * ldb;
            const __m256 vs = _mm256_set1_ps(s);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 prod = _mm256_mul_ps(vs, _mm256_loadu_ps(brow + j));
                _mm256_storeu_ps(crow + j, _mm256_add_ps(_mm256_loadu_ps(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

void gemm_nt_f(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        float* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b + j * ldb;
            __m256 acc = _mm256_setzero_ps();
            std::size_t kk = 0;
            for (; kk + 8 <= k; kk += 8) {
                acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(arow + kk),
                                                       _mm256_loadu_ps(brow + kk)));
            }
            float r = hsum(acc);
            for (; kk < k; ++kk) r += arow[kk] * brow[kk];
            crow[j] = accumulate ? crow[j] + r : r;
        }
    }
}

void gemm_tn_f(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
               const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    if (!accumulate) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            float* crow = c + kk * ldc;
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * lda;
        const float* brow = b + i * ldb;
        for (std::size_t kk = 0; kk < k; ++kk) {
            float s = arow[kk];
            if (s == 0.0f) continue;
            float* crow = c + kk * ldc;
            const __m256 vs = _mm256_set1_ps(s);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 prod = _mm256_mul_ps(vs, _mm256_loadu_ps(brow + j));
                _mm256_storeu_ps(crow + j, _mm256_add_ps(_mm256_loadu_ps(crow + j), prod));
            }
            for (; j < n; ++j) crow[j] += s * brow[j];
        }
    }
}

} // namespace

template <> const KernelTable<double>* avx2_table<double>() {
    static const KernelTable<double> t{
        &add_d, &sub_d, &mul_d, &scale_d, &axpy_d,
        &dot_d, &sum_d, &l1_norm_d,
        &clamp_box_d, &sign_d, &sign_step_d,
        &gemm_nn_d, &gemm_nt_d, &gemm_tn_d,
    };
    return &t;
}

template <> const KernelTable<float>* avx2_table<float>() {
    static const KernelTable<float> t{
        &add_f, &sub_f, &mul_f, &scale_f, &axpy_f,
        &dot_f, &sum_f, &l1_norm_f,
        &clamp_box_f, &sign_f, &sign_step_f,
        &gemm_nn_f, &gemm_nt_f, &gemm_tn_f,
    };
    return &t;
}

#else // !IPGA_HAVE_X86

template <> const KernelTable<double>* avx2_table<double>() { return nullptr; }
template <> const KernelTable<float>* avx2_table<float>() { return nullptr; }

#endif

} // namespace ipga::kernels::detail
