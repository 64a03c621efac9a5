#pragma once
// Pretraining loop for the co-trained modality pair, Adam with bias
// correction, a halve-on-plateau learning-rate scheduler, the frozen or
// fine-tuned transfer protocol, and CSV run logging.

#include "nlss/losses.hpp"
#include "nlss/metrics.hpp"
#include "nlss/model.hpp"
#include "nlss/select.hpp"
#include "nlss/smooth.hpp"
#include "nlss/synth.hpp"

#include <map>
#include <string>
#include <vector>

namespace nlss {

enum class TrainMode {
    single_modal1,
    single_modal2,
    midF,
    lateF,
    cromss_midF,
    cromss_lateF,
};

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);
bool mode_uses_selection(TrainMode m);
bool mode_is_single(TrainMode m);
FusionSpec fusion_for_mode(TrainMode m);

struct TrainConfig {
    TrainMode mode = TrainMode::cromss_midF;
    double lr = 5e-3;
    int batch = 8;
    int epochs = 60;
    int crop = 32;
    int base_width = 16;
    int depth = 3;
    int plateau_patience = 9;
    double plateau_factor = 0.5;
    double plateau_rel_threshold = 1e-4;
    SelectionSchedule schedule{0.5, 24};
    SmoothingParams smoothing{0.05, 0.15, 5, 1.0};
    double consistency_weight = 1.0;
    uint64_t seed = 1;
    int checkpoint_every = 20;
    int miou_every = 0;      // 0: only the final epoch gets a metric snapshot
    bool dump_masks = false;
    std::string out_dir;     // empty: keep everything in memory
    std::string resume_from; // checkpoint with trainer state
};

struct AdamState {
    int64_t t = 0;
    std::map<std::string, std::vector<double>> m, v;
};

// Bias-corrected Adam on every tensor with requires_grad; zeroes the
// gradients it consumed. Non-finite gradients abort.
void adam_step(const std::vector<NamedParam>& params, AdamState& st, double lr);

struct PlateauState {
    double lr = 0.0;
    double best = 0.0;
    int bad = 0;
    bool seen = false;
    int patience = 9;
    double factor = 0.5;
    double rel_threshold = 1e-4;
};

// Min-mode: an epoch counts as improvement when loss < best * (1 - rel
// threshold); after `patience` consecutive non-improving epochs the rate is
// multiplied by `factor` and the counter resets.
double plateau_update(PlateauState& st, double val_loss);

struct RunLogRow {
    int epoch = 0;
    double lr = 0, alpha = 0, gamma = 0;
    double train_total = 0, train_seg1 = 0, train_seg2 = 0, train_kl12 = 0, train_kl21 = 0;
    double val_total = 0, val_seg1 = 0, val_seg2 = 0, val_kl12 = 0, val_kl21 = 0;
    double val_miou = -1.0;  // against validation annotations; -1 = not measured
    double wall_s = 0;
};

struct RunLog {
    std::vector<RunLogRow> rows;
};

void write_runlog_csv(const std::string& path, const RunLog& log);

struct PretrainResult {
    ModelPair model;
    RunLog log;
};

PretrainResult pretrain(const TrainSet& ds, const TrainConfig& cfg);

struct TransferConfig {
    TrainConfig train;            // mode must be a single-modal one
    int source_modality = 1;      // encoder taken from this modality (0 or 1)
    bool frozen = true;
    bool random_init = false;     // baseline arm: skip loading pretrained weights
    std::string pretrained_path;  // NLCK checkpoint
};

struct TransferResult {
    ModelPair model;
    RunLog log;
};

TransferResult transfer(const TrainSet& downstream, const TransferConfig& cfg);

// Mean softmax over the model's modalities (or the single net), argmax to a
// label map, scored against the given reference on the listed locations
// (season-0 images). reference maps are indexed by location id.
MetricsReport evaluate_model(const ModelPair& m, const TrainSet& ds,
                             const std::vector<std::vector<uint8_t>>& reference,
                             const std::vector<int>& ids, int scope /* 0,1 modality,2 mean */);

// Label map for one location's season-0 tile under the given scope.
std::vector<uint8_t> predict_labels(const ModelPair& m, const TrainSet& ds, int id, int scope);

} // namespace nlss
