// Label smoothing: gaussian kernel anchor values, blur mass preservation,
// temporal averaging, and the mixing identity on labeled pixels.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "nlss/labels.hpp"
#include "nlss/rng.hpp"
#include "nlss/smooth.hpp"

#include <cmath>
#include <numeric>

using namespace nlss;

namespace {

LabelBatch random_labels(int64_t B, int64_t H, int64_t W, int C, uint64_t seed,
                         double unlabeled_share = 0.0) {
    Rng rg(seed);
    LabelBatch y{B, H, W, {}};
    y.v.resize((size_t)(B * H * W));
    for (auto& l : y.v)
        l = rg.uniform() < unlabeled_share ? kUnlabeled : (uint8_t)rg.uniform_int(C);
    return y;
}

} // namespace

TEST_CASE("gaussian kernel: degenerate, flat, and size-3 anchors") {
    CHECK(gaussian_kernel(1, 1.0) == std::vector<double>{1.0});

    auto flat = gaussian_kernel(3, 1e9);
    for (double v : flat) CHECK(std::fabs(v - 1.0 / 9.0) < 1e-12);

    auto k = gaussian_kernel(3, 1.0);
    REQUIRE(k.size() == 9);
    CHECK(std::fabs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) < 1e-12);
    CHECK(std::fabs(k[4] - 0.2041799555716581) < 1e-12);   // center
    CHECK(std::fabs(k[1] - 0.12384140315297397) < 1e-12);  // edge
    CHECK(std::fabs(k[0] - 0.07511360795411151) < 1e-12);  // corner
    CHECK(k[0] == k[2]);
    CHECK(k[0] == k[6]);
    CHECK(k[1] == k[3]);

    CHECK_THROWS_AS(gaussian_kernel(4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_kernel(3, 0.0), std::invalid_argument);
}

TEST_CASE("spatial blur: constant map is a fixed point") {
    LabelBatch y{1, 6, 6, std::vector<uint8_t>(36, 1)};
    auto z = one_hot(y, 3);
    auto m = spatial_mask(z, gaussian_kernel(5, 1.0), 5);
    for (int64_t i = 0; i < z->numel(); ++i) CHECK(std::fabs(m->data[i] - z->data[i]) < 1e-12);
}

TEST_CASE("spatial blur: half-plane flat-kernel golden") {
    LabelBatch y{1, 4, 4, {}};
    y.v.resize(16);
    for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 4; ++c) y.v[r * 4 + c] = c >= 2 ? 1 : 0;
    auto z = one_hot(y, 2);
    std::vector<double> flat(9, 1.0 / 9.0);
    auto m = spatial_mask(z, flat, 3);
    // column 1 sees one class-1 column of its 3x3 window, column 2 sees two
    CHECK(std::fabs(m->data[16 + 1] - 1.0 / 3.0) < 1e-12);
    CHECK(std::fabs(m->data[16 + 2] - 2.0 / 3.0) < 1e-12);
    CHECK(std::fabs(m->data[1] - 2.0 / 3.0) < 1e-12);
    CHECK(std::fabs(m->data[2] - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("spatial blur preserves per-class mass and per-pixel sums") {
    auto y = random_labels(2, 7, 9, 4, 61);
    auto z = one_hot(y, 4);
    auto m = spatial_mask(z, gaussian_kernel(5, 1.0), 5);
    const int64_t hw = 7 * 9;
    for (int64_t b = 0; b < 2; ++b) {
        for (int64_t c = 0; c < 4; ++c) {
            double mz = 0.0, mm = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
                mz += z->data[(b * 4 + c) * hw + i];
                mm += m->data[(b * 4 + c) * hw + i];
            }
            CHECK(std::fabs(mz - mm) < 1e-9);
        }
        for (int64_t i = 0; i < hw; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < 4; ++c) s += m->data[(b * 4 + c) * hw + i];
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("temporal blur averages the seasons") {
    // identical seasons collapse onto the spatial blur, bit for bit
    auto y = random_labels(1, 8, 8, 3, 62);
    auto z = one_hot(y, 3);
    auto k = gaussian_kernel(5, 1.0);
    auto ms = spatial_mask(z, k, 5);
    auto mt = temporal_mask({z, z, z, z}, k, 5);
    CHECK(mt->data == ms->data);

    // 3:1 season split over constant maps gives the season frequencies
    LabelBatch y0{1, 8, 8, std::vector<uint8_t>(64, 0)};
    LabelBatch y1{1, 8, 8, std::vector<uint8_t>(64, 1)};
    auto z0 = one_hot(y0, 2);
    auto z1 = one_hot(y1, 2);
    auto m = temporal_mask({z0, z0, z0, z1}, k, 5);
    CHECK(std::fabs(m->data[27] - 0.75) < 1e-9);
    CHECK(std::fabs(m->data[64 + 27] - 0.25) < 1e-9);

    CHECK_THROWS_AS(temporal_mask({}, k, 5), std::invalid_argument);
    auto zsmall = one_hot(random_labels(1, 4, 4, 3, 63), 3);
    CHECK_THROWS_AS(temporal_mask({z, zsmall}, k, 5), std::invalid_argument);
}

TEST_CASE("smoothing identities") {
    auto y = random_labels(1, 8, 8, 4, 64, 0.15);
    auto z = one_hot(y, 4);
    std::vector<TensorPtr> seasons;
    for (uint64_t s = 0; s < 4; ++s) seasons.push_back(one_hot(random_labels(1, 8, 8, 4, 70 + s, 0.15), 4));
    seasons[0] = z;

    SUBCASE("beta = mu = 0 returns the target untouched") {
        auto zp = smooth_labels(z, seasons, {0.0, 0.0, 5, 1.0});
        CHECK(zp->data == z->data);
    }

    SUBCASE("beta = 1 yields the uniform distribution on labeled pixels") {
        auto zp = smooth_labels(z, seasons, {1.0, 0.0, 5, 1.0});
        for (int64_t i = 0; i < 64; ++i) {
            bool labeled = y.v[i] != kUnlabeled;
            for (int64_t c = 0; c < 4; ++c)
                CHECK(zp->data[c * 64 + i] == (labeled ? 0.25 : 0.0));
        }
    }

    SUBCASE("defaults on a constant region keep (0.975, 0.025)") {
        LabelBatch yc{1, 8, 8, std::vector<uint8_t>(64, 0)};
        auto zc = one_hot(yc, 2);
        auto zp = smooth_labels(zc, {zc, zc, zc, zc}, {0.05, 0.15, 5, 1.0});
        int64_t center = 3 * 8 + 3;
        CHECK(std::fabs(zp->data[center] - 0.975) < 1e-9);
        CHECK(std::fabs(zp->data[64 + center] - 0.025) < 1e-9);
    }

    SUBCASE("fully labeled maps keep per-pixel sums at one") {
        auto yf = random_labels(1, 8, 8, 4, 65);
        auto zf = one_hot(yf, 4);
        std::vector<TensorPtr> sf;
        for (uint64_t s = 0; s < 4; ++s) sf.push_back(one_hot(random_labels(1, 8, 8, 4, 80 + s), 4));
        sf[0] = zf;
        auto zp = smooth_labels(zf, sf, {0.05, 0.15, 5, 1.0});
        for (int64_t i = 0; i < 64; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < 4; ++c) s += zp->data[c * 64 + i];
            CHECK(std::fabs(s - 1.0) < 1e-6);
        }
    }

    SUBCASE("sentinel rows stay zero; blur leakage only ever shrinks sums") {
        // mass blurred into an unlabeled row is dropped, never reassigned, so
        // labeled pixels bordering sentinels sum below one by design
        auto zp = smooth_labels(z, seasons, {0.05, 0.15, 5, 1.0});
        for (int64_t i = 0; i < 64; ++i) {
            double s = 0.0;
            for (int64_t c = 0; c < 4; ++c) {
                double v = zp->data[c * 64 + i];
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                s += v;
            }
            if (y.v[i] != kUnlabeled)
                CHECK(s <= 1.0 + 1e-9);
            else
                CHECK(s == 0.0);
        }
    }

    SUBCASE("constant maps reduce smoothing to the uniform mix") {
        LabelBatch yc{1, 8, 8, std::vector<uint8_t>(64, 2)};
        auto zc = one_hot(yc, 4);
        auto zp = smooth_labels(zc, {zc, zc, zc, zc}, {0.08, 0.12, 5, 1.0});
        for (int64_t i = 0; i < 64; ++i)
            for (int64_t c = 0; c < 4; ++c) {
                double expect = (c == 2 ? 1.0 - 0.08 : 0.0) + 0.08 / 4.0;
                CHECK(std::fabs(zp->data[c * 64 + i] - expect) < 1e-12);
            }
    }

    SUBCASE("class channel permutation commutes with smoothing") {
        auto zp = smooth_labels(z, seasons, {0.05, 0.15, 5, 1.0});
        std::vector<int> perm{2, 0, 3, 1};
        auto permute = [&](const TensorPtr& t) {
            auto out = Tensor::make(t->shape, false);
            for (int64_t c = 0; c < 4; ++c)
                std::copy(t->data.begin() + c * 64, t->data.begin() + (c + 1) * 64,
                          out->data.begin() + perm[c] * 64);
            return out;
        };
        std::vector<TensorPtr> sp;
        for (auto& s : seasons) sp.push_back(permute(s));
        auto zpp = smooth_labels(permute(z), sp, {0.05, 0.15, 5, 1.0});
        CHECK(zpp->data == permute(zp)->data);
    }

    SUBCASE("invalid parameters are rejected") {
        CHECK_THROWS_AS(smooth_labels(z, seasons, {0.6, 0.5, 5, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS(smooth_labels(z, seasons, {-0.1, 0.0, 5, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS(smooth_labels(z, seasons, {0.05, 0.15, 4, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS(smooth_labels(z, {}, {0.05, 0.15, 5, 1.0}), std::invalid_argument);
    }
}
