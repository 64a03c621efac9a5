#pragma once
// Integer label maps. 255 marks unlabeled pixels; one-hot rows for those
// stay all-zero so losses and smoothing skip them.

#include "nlss/tensor.hpp"

#include <cstdint>
#include <vector>

namespace nlss {

constexpr uint8_t kUnlabeled = 255;

struct LabelBatch {
    int64_t B = 0, H = 0, W = 0;
    std::vector<uint8_t> v;  // B*H*W

    int64_t numel() const { return B * H * W; }
};

TensorPtr one_hot(const LabelBatch& y, int num_classes);

} // namespace nlss
