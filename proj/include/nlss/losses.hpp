#pragma once
// Segmentation losses (weighted CE + joint Dice) and the detached-target
// KL consistency loss. Labels, weights and targets are constants here;
// gradients flow only into the prediction Q.

#include "nlss/tensor.hpp"

namespace nlss {

struct LossFlags {
    bool degenerate = false;  // empty weight/label support in the batch
};

// Z: B x C x H x W soft labels (all-zero rows mark unlabeled pixels).
// W: B x H x W weights in [0,1]. Loss = -(sum w z log q) / (sum_labeled w).
TensorPtr ce_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W,
                  LossFlags* flags = nullptr);

// 1 - 2*sum(w z q) / sum(w (z+q)), one joint ratio over pixels and classes.
TensorPtr dice_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W,
                    LossFlags* flags = nullptr);

TensorPtr seg_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W,
                   LossFlags* flags = nullptr);

// sum(w_e p log(p/q)) / sum(w_e). P must come from detach().
TensorPtr kl_consistency(const TensorPtr& P, const TensorPtr& Q, const TensorPtr& We,
                         LossFlags* flags = nullptr);

struct TotalLossParts {
    TensorPtr total, seg1, seg2, kl12, kl21;
};

// seg(Q1) + seg(Q2) + kl(detach(Q1)||Q2) + kl(detach(Q2)||Q1), each KL
// weighted by the teacher modality's entity mask. consistency_weight scales
// the two KL terms inside the total (parts stay unscaled).
TotalLossParts total_loss(const TensorPtr& Q1, const TensorPtr& Q2, const TensorPtr& Z,
                          const TensorPtr& Wl1, const TensorPtr& Wl2,
                          const TensorPtr& We1, const TensorPtr& We2,
                          double consistency_weight = 1.0);

} // namespace nlss
