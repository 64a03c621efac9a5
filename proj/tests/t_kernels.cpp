// Scalar reference kernels vs the dispatched (AVX2 when available) variants:
// elementwise ops must agree bitwise, reductions and matrix products within
// accumulation-order tolerance, across sizes straddling the vector width.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "nlss/kernels.hpp"
#include "nlss/rng.hpp"

#include <array>
#include <cmath>
#include <vector>

using namespace nlss;

namespace {

std::vector<double> rand_vec(std::size_t n, uint64_t seed) {
    std::vector<double> v(n);
    Rng r(seed);
    for (auto& x : v) x = r.normal();
    return v;
}

const std::vector<std::size_t> kSizes{1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 1023};

} // namespace

TEST_CASE("elementwise kernels agree bitwise with scalar reference") {
    const auto& s = kern::scalar::table;
    const auto& d = kern::ops();
    for (std::size_t n : kSizes) {
        auto a = rand_vec(n, 11 * n + 1);
        auto b = rand_vec(n, 13 * n + 2);
        for (auto& x : b)
            if (x == 0.0) x = 1.0;
        std::vector<double> o1(n), o2(n);

        s.add(a.data(), b.data(), o1.data(), n);
        d.add(a.data(), b.data(), o2.data(), n);
        CHECK(o1 == o2);
        s.sub(a.data(), b.data(), o1.data(), n);
        d.sub(a.data(), b.data(), o2.data(), n);
        CHECK(o1 == o2);
        s.mul(a.data(), b.data(), o1.data(), n);
        d.mul(a.data(), b.data(), o2.data(), n);
        CHECK(o1 == o2);
        s.div(a.data(), b.data(), o1.data(), n);
        d.div(a.data(), b.data(), o2.data(), n);
        CHECK(o1 == o2);
        s.relu(a.data(), o1.data(), n);
        d.relu(a.data(), o2.data(), n);
        CHECK(o1 == o2);
        s.relu_bwd(b.data(), a.data(), o1.data(), n);
        d.relu_bwd(b.data(), a.data(), o2.data(), n);
        CHECK(o1 == o2);

        auto y1 = a, y2 = a;
        s.axpy(0.37, b.data(), y1.data(), n);
        d.axpy(0.37, b.data(), y2.data(), n);
        CHECK(y1 == y2);
        y1 = a;
        y2 = a;
        s.scale(-1.75, y1.data(), n);
        d.scale(-1.75, y2.data(), n);
        CHECK(y1 == y2);
    }
}

TEST_CASE("reduction kernels agree within accumulation tolerance") {
    const auto& s = kern::scalar::table;
    const auto& d = kern::ops();
    for (std::size_t n : kSizes) {
        auto a = rand_vec(n, 3 * n + 5);
        auto b = rand_vec(n, 7 * n + 9);
        double s1 = s.sum(a.data(), n);
        double s2 = d.sum(a.data(), n);
        CHECK(std::fabs(s1 - s2) <= 1e-12 * std::max(1.0, std::fabs(s1)));
        double d1 = s.dot(a.data(), b.data(), n);
        double d2 = d.dot(a.data(), b.data(), n);
        CHECK(std::fabs(d1 - d2) <= 1e-12 * std::max(1.0, std::fabs(d1)));
    }
}

TEST_CASE("relu and relu_bwd semantics") {
    const auto& s = kern::scalar::table;
    std::vector<double> x{-2.0, -0.0, 0.0, 3.5};
    std::vector<double> g{1.0, 2.0, 3.0, 4.0};
    std::vector<double> o(4);
    s.relu(x.data(), o.data(), 4);
    CHECK(o == std::vector<double>{0.0, 0.0, 0.0, 3.5});
    s.relu_bwd(g.data(), x.data(), o.data(), 4);
    CHECK(o == std::vector<double>{0.0, 0.0, 0.0, 4.0});
}

namespace {

void naive_gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
                   const double* B, std::size_t ldb, double* C, std::size_t ldc) {
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += A[i * lda + k] * B[k * ldb + j];
            C[i * ldc + j] += acc;
        }
}

} // namespace

TEST_CASE("gemm variants match a naive triple loop") {
    const auto& s = kern::scalar::table;
    const auto& d = kern::ops();
    for (auto [M, N, K] : std::vector<std::array<std::size_t, 3>>{
             {1, 1, 1}, {2, 3, 4}, {5, 8, 3}, {16, 16, 16}, {7, 19, 11}, {33, 5, 40}}) {
        auto A = rand_vec(M * K, M + 100 * K);
        auto B = rand_vec(K * N, N + 200 * K);
        std::vector<double> Cn(M * N, 0.5), Cs(M * N, 0.5), Cd(M * N, 0.5);
        naive_gemm_nn(M, N, K, A.data(), K, B.data(), N, Cn.data(), N);
        s.gemm_nn(M, N, K, A.data(), K, B.data(), N, Cs.data(), N);
        d.gemm_nn(M, N, K, A.data(), K, B.data(), N, Cd.data(), N);
        for (std::size_t i = 0; i < M * N; ++i) {
            CHECK(std::fabs(Cs[i] - Cn[i]) <= 1e-11 * std::max(1.0, std::fabs(Cn[i])));
            CHECK(std::fabs(Cd[i] - Cn[i]) <= 1e-11 * std::max(1.0, std::fabs(Cn[i])));
        }

        // A stored MxK, B stored NxK: C += A * B^T
        auto Bt = rand_vec(N * K, 3 * N + K);
        std::vector<double> Cn2(M * N, 0.0), Cd2(M * N, 0.0);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j)
                for (std::size_t k = 0; k < K; ++k) Cn2[i * N + j] += A[i * K + k] * Bt[j * K + k];
        d.gemm_nt(M, N, K, A.data(), K, Bt.data(), K, Cd2.data(), N);
        for (std::size_t i = 0; i < M * N; ++i)
            CHECK(std::fabs(Cd2[i] - Cn2[i]) <= 1e-11 * std::max(1.0, std::fabs(Cn2[i])));

        // A stored KxM, B stored KxN: C += A^T * B
        auto At = rand_vec(K * M, 5 * M + K);
        std::vector<double> Cn3(M * N, 0.0), Cd3(M * N, 0.0);
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j)
                for (std::size_t k = 0; k < K; ++k) Cn3[i * N + j] += At[k * M + i] * B[k * N + j];
        d.gemm_tn(M, N, K, At.data(), M, B.data(), N, Cd3.data(), N);
        for (std::size_t i = 0; i < M * N; ++i)
            CHECK(std::fabs(Cd3[i] - Cn3[i]) <= 1e-11 * std::max(1.0, std::fabs(Cn3[i])));
    }
}

TEST_CASE("dispatch table reports an implementation") {
    const auto& d = kern::ops();
    CHECK(d.name != nullptr);
    if (kern::avx2_available()) CHECK(std::string(d.name) == "avx2");
}
