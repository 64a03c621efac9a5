#include "nlss/smooth.hpp"

#include <cmath>
#include <stdexcept>

namespace nlss {

namespace {

void check_params(const SmoothingParams& p) {
    if (p.beta < 0.0 || p.mu < 0.0 || p.beta + p.mu > 1.0)
        throw std::invalid_argument("smoothing: need beta >= 0, mu >= 0, beta + mu <= 1");
    if (p.kernel_size < 1 || p.kernel_size % 2 == 0)
        throw std::invalid_argument("smoothing: kernel_size must be a positive odd number");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("smoothing: sigma must be positive");
}

// mirror about the edge with the edge pixel repeated: -1 -> 0, n -> n-1
int64_t reflect(int64_t i, int64_t n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

} // namespace

std::vector<double> gaussian_kernel(int size, double sigma) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("gaussian_kernel: size must be a positive odd number");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    std::vector<double> k((size_t)size * size);
    const int r = size / 2;
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            double v = std::exp(-(double)(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k[(size_t)(dy + r) * size + (dx + r)] = v;
            sum += v;
        }
    }
    for (auto& v : k) v /= sum;
    return k;
}

TensorPtr spatial_mask(const TensorPtr& z, const std::vector<double>& kernel, int size) {
    if (!z || z->shape.size() != 4)
        throw std::invalid_argument("spatial_mask: expected a B x C x H x W tensor");
    if (size < 1 || size % 2 == 0 || (int64_t)kernel.size() != (int64_t)size * size)
        throw std::invalid_argument("spatial_mask: kernel does not match size");
    const int64_t B = z->shape[0], C = z->shape[1], H = z->shape[2], W = z->shape[3];
    const int r = size / 2;
    auto out = Tensor::make(z->shape, false);
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* src = z->data.data() + bc * H * W;
        double* dst = out->data.data() + bc * H * W;
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy) {
                    int64_t sy = reflect(y + dy, H);
                    for (int dx = -r; dx <= r; ++dx) {
                        int64_t sx = reflect(x + dx, W);
                        acc += kernel[(size_t)(dy + r) * size + (dx + r)] * src[sy * W + sx];
                    }
                }
                dst[y * W + x] = acc;
            }
        }
    }
    return out;
}

TensorPtr temporal_mask(const std::vector<TensorPtr>& season_z,
                        const std::vector<double>& kernel, int size) {
    if (season_z.empty()) throw std::invalid_argument("temporal_mask: no season maps");
    for (auto& s : season_z)
        if (!s || s->shape != season_z[0]->shape)
            throw std::invalid_argument("temporal_mask: season maps must share one shape");
    auto mean = Tensor::make(season_z[0]->shape, false);
    const int64_t n = mean->numel();
    const double inv = 1.0 / (double)season_z.size();
    for (auto& s : season_z)
        for (int64_t i = 0; i < n; ++i) mean->data[i] += s->data[i];
    for (int64_t i = 0; i < n; ++i) mean->data[i] *= inv;
    return spatial_mask(mean, kernel, size);
}

TensorPtr smooth_labels(const TensorPtr& z, const std::vector<TensorPtr>& season_z,
                        const SmoothingParams& p) {
    check_params(p);
    if (!z || z->shape.size() != 4)
        throw std::invalid_argument("smooth_labels: expected a B x C x H x W tensor");
    if (season_z.empty())
        throw std::invalid_argument("smooth_labels: season maps are required");

    const int64_t B = z->shape[0], C = z->shape[1], H = z->shape[2], W = z->shape[3];
    const int64_t hw = H * W;
    auto kernel = gaussian_kernel(p.kernel_size, p.sigma);
    auto ms = spatial_mask(z, kernel, p.kernel_size);
    auto mt = temporal_mask(season_z, kernel, p.kernel_size);
    if (mt->shape != z->shape)
        throw std::invalid_argument("smooth_labels: season maps do not match the target shape");

    const double keep = 1.0 - p.beta - p.mu;
    const double unif = p.beta / (double)C;
    auto out = Tensor::make(z->shape, false);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i < hw; ++i) {
            // unlabeled pixels have an all-zero row and must stay that way
            bool labeled = false;
            for (int64_t c = 0; c < C && !labeled; ++c)
                labeled = z->data[(b * C + c) * hw + i] > 0.0;
            if (!labeled) continue;
            for (int64_t c = 0; c < C; ++c) {
                int64_t j = (b * C + c) * hw + i;
                out->data[j] = keep * z->data[j] + unif +
                               p.mu * 0.5 * (ms->data[j] + mt->data[j]);
            }
        }
    }
    return out;
}

} // namespace nlss
