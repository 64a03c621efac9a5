#pragma once
// Low-level numeric kernels: scalar reference implementations plus AVX2
// variants selected once at startup. Everything above this layer calls
// through the dispatch table, so the two implementations stay swappable
// and equivalence-testable.

#include <cstddef>

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#define NLSS_SIMD_X86 1
#else
#define NLSS_SIMD_X86 0
#endif

namespace nlss::kern {

// y[i] op= a[i], b[i]
using ew2_fn = void (*)(const double*, const double*, double*, std::size_t);
using ew1_fn = void (*)(const double*, double*, std::size_t);
using axpy_fn = void (*)(double, const double*, double*, std::size_t);
using scale_fn = void (*)(double, double*, std::size_t);
using red_fn = double (*)(const double*, std::size_t);
using dot_fn = double (*)(const double*, const double*, std::size_t);
// C[M x N] row-major, leading dims in elements
using gemm_fn = void (*)(std::size_t, std::size_t, std::size_t,
                         const double*, std::size_t,
                         const double*, std::size_t,
                         double*, std::size_t);

struct Ops {
    ew2_fn add;
    ew2_fn sub;
    ew2_fn mul;
    ew2_fn div;
    ew1_fn relu;
    ew2_fn relu_bwd;   // out[i] = x[i] > 0 ? g[i] : 0   (args: g, x, out)
    axpy_fn axpy;      // y += a * x
    scale_fn scale;    // y *= a
    red_fn sum;
    dot_fn dot;
    gemm_fn gemm_nn;   // C += A[MxK] * B[KxN]
    gemm_fn gemm_nt;   // C += A[MxK] * B[NxK]^T
    gemm_fn gemm_tn;   // C += A[KxM]^T * B[KxN]
    const char* name;
};

// Dispatch table chosen at first use (AVX2+FMA when the CPU has them).
const Ops& ops();

bool avx2_available();

namespace scalar {
extern const Ops table;
}
#if NLSS_SIMD_X86
namespace avx2 {
extern const Ops table;
}
#endif

} // namespace nlss::kern
