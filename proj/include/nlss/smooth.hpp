#pragma once
// Label smoothing for noisy one-hot targets. Mixes the hard target with a
// uniform floor plus two Gaussian-blurred soft masks: one from the current
// season's labels (spatial) and one from the season-averaged labels
// (temporal). Rows that are all-zero (unlabeled pixels) stay all-zero.

#include "nlss/tensor.hpp"

#include <vector>

namespace nlss {

struct SmoothingParams {
    double beta = 0.05;   // uniform mixing weight
    double mu = 0.15;     // spatial-temporal mixing weight
    int kernel_size = 5;  // odd
    double sigma = 1.0;
};

// size x size kernel, entries exp(-(dx^2+dy^2) / (2 sigma^2)) normalized to
// sum 1, offsets taken from the center cell. Even sizes are rejected.
std::vector<double> gaussian_kernel(int size, double sigma);

// Per-class 2-D convolution of z (B x C x H x W) with the kernel, borders
// handled by mirroring edge pixels inward (edge row repeated), which keeps
// the per-class mass of the map unchanged.
TensorPtr spatial_mask(const TensorPtr& z, const std::vector<double>& kernel, int size);

// Blur of the mean one-hot map across seasons. All season maps must share
// one shape.
TensorPtr temporal_mask(const std::vector<TensorPtr>& season_z,
                        const std::vector<double>& kernel, int size);

// z' = (1 - beta - mu) z + beta/C + mu (M_s + M_t)/2 on labeled pixels,
// where M_s blurs this season's map and M_t blurs the season average.
// season_z must hold every season's one-hot map including the current one.
TensorPtr smooth_labels(const TensorPtr& z, const std::vector<TensorPtr>& season_z,
                        const SmoothingParams& p);

} // namespace nlss
