#include "nlss/labels.hpp"

#include <stdexcept>
#include <string>

namespace nlss {

TensorPtr one_hot(const LabelBatch& y, int num_classes) {
    if (num_classes < 1) throw std::invalid_argument("one_hot: num_classes must be >= 1");
    if ((int64_t)y.v.size() != y.numel())
        throw std::invalid_argument("one_hot: label buffer size mismatch");
    auto z = Tensor::make({y.B, (int64_t)num_classes, y.H, y.W}, false);
    const int64_t hw = y.H * y.W;
    for (int64_t b = 0; b < y.B; ++b) {
        for (int64_t i = 0; i < hw; ++i) {
            uint8_t c = y.v[b * hw + i];
            if (c == kUnlabeled) continue;
            if (c >= num_classes)
                throw std::invalid_argument("one_hot: class id " + std::to_string(c) +
                                            " out of range for " + std::to_string(num_classes) +
                                            " classes");
            z->data[(b * num_classes + c) * hw + i] = 1.0;
        }
    }
    return z;
}

} // namespace nlss
