#pragma once
// Segmentation scoring plus two distribution-comparison utilities: a binned
// KL divergence for weight/statistic histograms and the accumulated variance
// ratio of a PCA over feature vectors.

#include <cstdint>
#include <vector>

namespace nlss {

struct ConfusionMatrix {
    int C = 0;
    std::vector<int64_t> counts;  // rows = true class, cols = predicted

    int64_t& at(int truth, int pred) { return counts[(size_t)truth * C + pred]; }
    int64_t at(int truth, int pred) const { return counts[(size_t)truth * C + pred]; }
    int64_t total() const;
};

// Accumulates over aligned maps; pixels with sentinel truth are skipped.
ConfusionMatrix confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& truth, int C);
void accumulate(ConfusionMatrix& cm, const std::vector<uint8_t>& pred,
                const std::vector<uint8_t>& truth);

struct MetricsReport {
    double oa = 0.0, aa = 0.0, miou = 0.0, mf1 = 0.0;
    std::vector<double> recall, iou, f1;  // per class; -1 where unsupported
    bool empty = false;                   // no labeled pixels at all
};

// OA = trace/total; per-class recall = diag/rowsum; IoU = TP/(TP+FP+FN);
// F1 = 2TP/(2TP+FP+FN). Macro means skip classes absent from both truth and
// prediction.
MetricsReport metrics(const ConfusionMatrix& cm);
MetricsReport metrics(const std::vector<uint8_t>& pred,
                      const std::vector<uint8_t>& truth, int C);

// Discrete KL(A||B) over a shared 100-bin histogram spanning the combined
// range, with additive smoothing 1e-10 on empty bins. A zero combined range
// is defined as 0.
double hist_kl(const std::vector<double>& a, const std::vector<double>& b, int bins = 100);

struct PcaCurve {
    std::vector<double> accumulated;  // cumulative variance fractions, ends at 1
    bool rank_zero = false;           // covariance had no variance at all
};

// vectors: n rows of dimension dim, row-major.
PcaCurve pca_accumulated_variance(const std::vector<double>& vectors, int64_t n, int64_t dim);

struct NoiseDetectionReport {
    int64_t flagged = 0;       // pixels with weight < 1
    int64_t noisy = 0;         // pixels whose noisy label differs from clean
    int64_t flagged_noisy = 0;
    double precision = -1.0;   // -1 when no pixels were flagged
    double recall = -1.0;      // -1 when there are no noisy pixels
};

// Treats weight < 1 as "flagged noisy" and scores that against the true
// corruption set. Sentinel pixels in either map are skipped.
NoiseDetectionReport noise_detection_report(const std::vector<double>& weights,
                                            const std::vector<uint8_t>& clean,
                                            const std::vector<uint8_t>& noisy);

} // namespace nlss
