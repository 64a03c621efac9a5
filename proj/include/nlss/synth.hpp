#pragma once
// Synthetic two-modality segmentation scenes. Clean label maps are Voronoi
// partitions; images are class-conditional Gaussian textures where modality 1
// has heavily overlapping class distributions ("weak") and modality 2 well
// separated ones ("strong"); the four seasons jitter image statistics and,
// when noise is enabled, drift a small fraction of boundary labels. Noisy
// annotations come from symmetric flips, boundary erosion, or both.
//
// Training code only ever sees TrainLocation, which has no clean-label
// member; evaluation loads clean maps through the separate EvalLabels path.

#include "nlss/labels.hpp"
#include "nlss/rng.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nlss {

enum class NoiseKind { symmetric_flip, boundary_erode, mixed };

NoiseKind noise_kind_from_string(const std::string& s);
std::string to_string(NoiseKind k);

struct ModalitySpec {
    int channels = 2;
    double separability = 1.0;  // class-mean spacing in texture-noise units
};

struct NoiseSpec {
    NoiseKind kind = NoiseKind::mixed;
    double rate = 0.3;  // in [0, 1)
};

struct SceneSpec {
    int num_locations = 200;
    int H = 64, W = 64;
    int C = 4;
    int seasons = 4;
    ModalitySpec modality1{2, 0.8};  // weak
    ModalitySpec modality2{2, 2.0};  // strong
    NoiseSpec noise;
    double val_fraction = 0.1;
    uint64_t seed = 1;
};

void validate_spec(const SceneSpec& s);

struct NormStats {
    std::vector<double> mean, sigma;  // per channel
};

struct TrainLocation {
    int id = 0;
    // images[season][modality]: channels x H x W, raw (unnormalized)
    std::vector<std::array<std::vector<double>, 2>> images;
    std::vector<std::vector<uint8_t>> noisy_labels;  // per season, H x W
};

struct DatasetInfo {
    SceneSpec spec;
    std::vector<int> train_ids, val_ids;
    std::array<NormStats, 2> stats;  // per modality, from the train split only
};

struct TrainSet {
    DatasetInfo info;
    std::vector<TrainLocation> locations;  // indexed by location id
};

// Evaluation-only view; never reachable from TrainSet.
struct EvalLabels {
    std::vector<std::vector<uint8_t>> clean;  // indexed by location id
};

// Writes manifest.txt plus one loc_<id>.nlds per location; deterministic
// from spec.seed regardless of thread count (per-location derived seeds).
void generate_dataset(const SceneSpec& spec, const std::string& dir, int threads = 1);

TrainSet load_dataset(const std::string& dir);
EvalLabels load_clean_labels(const std::string& dir);

// Corrupts a label map. symmetric_flip reassigns each pixel uniformly among
// the other classes with probability rate; boundary_erode shifts class
// boundaries by up to two one-pixel sweeps touching about rate of the
// pixels (interiors more than two pixels from a boundary never change);
// mixed applies each at rate/2.
std::vector<uint8_t> inject_noise(const std::vector<uint8_t>& y, int H, int W, int C,
                                  NoiseKind kind, double rate, uint64_t seed);

// Clamp to mean +- 2 sigma, then map that interval onto [0,1].
double normalize_value(double x, double mean, double sigma);
void normalize_image(std::vector<double>& img, int channels, int64_t plane, const NormStats& st);

struct AugmentedSample {
    std::array<std::vector<double>, 2> images;     // chosen season, channels x crop x crop
    std::vector<std::vector<uint8_t>> labels;      // every season, crop x crop
    int tau = 0;                                   // chosen season
    int size = 0;
};

// Joint random crop / flip (p 0.5) / quarter-turn rotation (p 0.2) over both
// modality images and every season's label map, plus season selection for
// the returned image pair. Draw order: season, crop y, crop x, flip, rotate.
AugmentedSample augment(const TrainLocation& loc, const SceneSpec& spec, int crop, Rng& rng);

// Fraction of pixels labeled in both masks whose maskB class belongs to
// relation[maskA class]. maskA classes missing from the relation are a data
// error.
double agreement_accuracy(const std::vector<uint8_t>& maskA,
                          const std::vector<uint8_t>& maskB,
                          const std::map<int, std::vector<int>>& relation);

} // namespace nlss
