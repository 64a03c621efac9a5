#pragma once
// Flat key-value experiment configuration: `key = value` lines grouped under
// bracketed sections. Unknown keys are rejected; every run writes the fully
// resolved configuration next to its outputs so any artifact can be
// reproduced from that file plus the seed.

#include "nlss/synth.hpp"
#include "nlss/train.hpp"

#include <string>

namespace nlss {

struct ExperimentConfig {
    SceneSpec scene;
    TrainConfig train;
    int transfer_source_modality = 2;  // 1-based, matches modality naming
    bool transfer_frozen = true;
    bool transfer_random_init = false;
    std::string transfer_pretrained;
    std::string data_dir;
    std::string checkpoint;    // for evaluate / analyze
    std::string checkpoint_b;  // optional second model for analyze
};

// Defaults when path is empty.
ExperimentConfig load_config(const std::string& path);

void write_resolved(const std::string& path, const ExperimentConfig& c);

} // namespace nlss
