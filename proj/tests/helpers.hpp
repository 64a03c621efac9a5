#pragma once
// Shared test utilities: temp directories, random tensors, finite
// differences, file comparison.

#include "nlss/labels.hpp"
#include "nlss/rng.hpp"
#include "nlss/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace tst {

inline std::string loc_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "loc_%04d.nlds", id);
    return buf;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto p = base / ("nlss_test_" + std::to_string(::getpid()) + "_" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path = p;
                return;
            }
        }
        throw std::runtime_error("could not create temp dir");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<char> slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline bool same_bytes(const std::string& a, const std::string& b) {
    auto va = slurp(a), vb = slurp(b);
    return !va.empty() && va == vb;
}

inline nlss::TensorPtr randn(std::vector<int64_t> shape, uint64_t seed, bool rg = false) {
    auto t = nlss::Tensor::make(std::move(shape), rg);
    nlss::Rng r(seed);
    for (auto& v : t->data) v = r.normal();
    return t;
}

// random per-pixel distributions via softmax of normals
inline nlss::TensorPtr rand_prob(int64_t B, int64_t C, int64_t H, int64_t W, uint64_t seed) {
    auto t = randn({B, C, H, W}, seed);
    return nlss::softmax_channels(t);
}

inline double rel_err(double got, double want) {
    double denom = std::max({std::fabs(got), std::fabs(want), 1e-6});
    return std::fabs(got - want) / denom;
}

// worst relative error of the analytic gradient of make_loss w.r.t. x
// against central finite differences
inline double fd_worst(const std::function<nlss::TensorPtr()>& make_loss, nlss::TensorPtr x,
                       double h = 1e-5) {
    x->zero_grad();
    nlss::backward(make_loss());
    std::vector<double> analytic = x->grad.empty() ? std::vector<double>(x->numel(), 0.0)
                                                   : x->grad;
    double worst = 0.0;
    for (int64_t i = 0; i < x->numel(); ++i) {
        double keep = x->data[i];
        x->data[i] = keep + h;
        double up = make_loss()->data[0];
        x->data[i] = keep - h;
        double dn = make_loss()->data[0];
        x->data[i] = keep;
        double fd = (up - dn) / (2.0 * h);
        double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
        worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
    }
    return worst;
}

} // namespace tst
