#pragma once
// Confidence masks for noisy-label co-training. Each modality scores its own
// softmax output per pixel (confidence at the given label, and a normalized
// negative-entropy score), the partner modality's score sharpens it, and the
// enhanced scores become per-pixel loss weights: a per-class batch-local
// threshold for the labeled weights, an affine ramp for the entity weights.
// All inputs are detached probabilities; nothing here builds graph nodes.

#include "nlss/labels.hpp"
#include "nlss/tensor.hpp"

#include <string>
#include <utility>

namespace nlss {

enum class ConfKind { label_based, entity_based };

struct ConfMask {
    TensorPtr t;  // B x H x W in [0,1]
    ConfKind kind = ConfKind::label_based;
    bool enhanced = false;
};

struct SelectFlags {
    // set when some class had no positive confidence mass, so the whole
    // class fell back to weight 1
    bool zero_confidence_class = false;
};

// f = p at the annotated class; 0 at unlabeled pixels. Class ids >= C are a
// data error.
ConfMask label_confidence(const TensorPtr& P, const LabelBatch& y);

// f = 1 + (1/log C) * sum_c p log p, clamped into [0,1]. C == 1 gives f == 1
// everywhere (a one-class distribution carries no entropy signal).
ConfMask entity_confidence(const TensorPtr& P);

// F' = 0.5 * F_own * (1 + F_partner). Both masks must be of the same kind
// and not already enhanced.
ConfMask enhance(const ConfMask& own, const ConfMask& partner);

// w = min(1, f / t_c) with t_c the floor(alpha * N_c)-th largest enhanced
// label confidence among pixels annotated c in this batch (count clamped
// below at 1). Unlabeled pixels get weight 0. alpha must be in (0, 1].
TensorPtr threshold_label(const ConfMask& fl, const LabelBatch& y, double alpha,
                          SelectFlags* flags = nullptr);

// w = (1 - gamma) + gamma * f, gamma in [0, 1].
TensorPtr weight_entity(const ConfMask& fe, double gamma);

struct SelectionSchedule {
    double alpha0 = 0.5;
    int ramp_epochs = 80;
};

// Returns (alpha, gamma) for an epoch: alpha decays geometrically from 1 to
// alpha0 over the ramp and then holds, gamma ramps linearly from 0 to 1.
std::pair<double, double> selection_schedule(int epoch, const SelectionSchedule& s);

// Writes the six per-modality masks as tensor files into dir, named
// step{NNNNN}_m{d}_{F_l,F_e,Fp_l,Fp_e,W_l,W_e}.nlt1.
void dump_masks(const std::string& dir, int step, int modality,
                const ConfMask& fl, const ConfMask& fe,
                const ConfMask& fpl, const ConfMask& fpe,
                const TensorPtr& wl, const TensorPtr& we);

} // namespace nlss
