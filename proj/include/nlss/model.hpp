#pragma once
// Per-modality mini U-Net pair with single / middle-fusion / late-fusion
// wiring. Middle fusion aliases one decoder parameter set across both
// modalities; late fusion clones it so the copies train apart.

#include "nlss/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace nlss {

struct MiniUNetConfig {
    int in_channels[2] = {2, 2};
    int base_width = 16;
    int depth = 3;
    int num_classes = 4;
};

enum class FusionMode { single, middle, late };

struct FusionSpec {
    FusionMode mode = FusionMode::late;
    int single_modality = 0;  // used when mode == single
    bool share_decoder() const { return mode == FusionMode::middle; }
};

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct ConvBn {
    TensorPtr w, b;            // conv kernel (Cout,Cin,kh,kw) and bias
    TensorPtr gamma, beta;     // null when the layer has no norm
    std::shared_ptr<BnStats> stats;
    int stride = 1;
    int pad = 1;
};

struct UNet {
    std::vector<ConvBn> enc;   // stem followed by stride-2 stages
    std::vector<ConvBn> dec;   // one block per up level, bottom first
    ConvBn head;               // 1x1 classifier, no norm
};

struct NamedParam {
    std::string name;
    TensorPtr t;
};
struct NamedStats {
    std::string name;
    std::shared_ptr<BnStats> s;
};

struct ModelPair {
    MiniUNetConfig cfg;
    FusionSpec fusion;
    std::vector<UNet> nets;  // one entry for single mode, two otherwise

    // Unique trainable tensors (shared decoder listed once).
    std::vector<NamedParam> parameters() const;
    std::vector<NamedStats> bn_stats() const;
    int64_t param_count() const;

    int net_index(int modality) const;  // maps modality {0,1} to nets slot
};

ModelPair build_model(const MiniUNetConfig& cfg, const FusionSpec& fusion, uint64_t seed);

// Q = softmax over classes, shape B x C x H x W. encoder_training overrides
// the encoder's train/eval state (-1 follows training); a frozen transfer
// keeps the encoder in eval mode while the decoder trains.
TensorPtr forward(const ModelPair& m, int modality, const TensorPtr& x, bool training,
                  int encoder_training = -1);

// Per-stage encoder outputs (stem + one per stage), input side first.
std::vector<TensorPtr> encoder_features(const ModelPair& m, int modality,
                                        const TensorPtr& x, bool training);

// Checkpoints: "NLCK" magic, config block, named NLT1 tensors, bn stats,
// then an optional trainer-state section used by resume.
struct TrainerState {
    std::vector<std::pair<std::string, std::string>> keys;
    std::vector<std::pair<std::string, std::vector<double>>> tensors;
    bool present = false;
};

void save_checkpoint(const std::string& path, const ModelPair& m,
                     const TrainerState* trainer = nullptr);
ModelPair load_checkpoint(const std::string& path, TrainerState* trainer = nullptr);

} // namespace nlss
