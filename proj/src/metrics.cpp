#include "nlss/metrics.hpp"

#include "nlss/labels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nlss {

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (auto v : counts) t += v;
    return t;
}

ConfusionMatrix confusion(const std::vector<uint8_t>& pred,
                          const std::vector<uint8_t>& truth, int C) {
    if (C < 1) throw std::invalid_argument("confusion: need at least one class");
    ConfusionMatrix cm;
    cm.C = C;
    cm.counts.assign((size_t)C * C, 0);
    accumulate(cm, pred, truth);
    return cm;
}

void accumulate(ConfusionMatrix& cm, const std::vector<uint8_t>& pred,
                const std::vector<uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("confusion: pred and truth size mismatch");
    for (size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] == kUnlabeled) continue;
        if (truth[i] >= cm.C || pred[i] >= cm.C)
            throw std::invalid_argument("confusion: class id out of range");
        ++cm.at(truth[i], pred[i]);
    }
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    MetricsReport r;
    const int C = cm.C;
    r.recall.assign(C, -1.0);
    r.iou.assign(C, -1.0);
    r.f1.assign(C, -1.0);
    int64_t total = cm.total();
    if (total == 0) {
        r.empty = true;
        return r;
    }
    int64_t trace = 0;
    for (int c = 0; c < C; ++c) trace += cm.at(c, c);
    r.oa = (double)trace / (double)total;

    double sr = 0.0, si = 0.0, sf = 0.0;
    int supported = 0;
    for (int c = 0; c < C; ++c) {
        int64_t tp = cm.at(c, c), row = 0, col = 0;
        for (int k = 0; k < C; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        if (row == 0 && col == 0) continue;  // absent from both, excluded
        int64_t fn = row - tp, fp = col - tp;
        r.recall[c] = row > 0 ? (double)tp / (double)row : 0.0;
        r.iou[c] = (double)tp / (double)(tp + fp + fn);
        r.f1[c] = (double)(2 * tp) / (double)(2 * tp + fp + fn);
        sr += r.recall[c];
        si += r.iou[c];
        sf += r.f1[c];
        ++supported;
    }
    r.aa = sr / supported;
    r.miou = si / supported;
    r.mf1 = sf / supported;
    return r;
}

MetricsReport metrics(const std::vector<uint8_t>& pred,
                      const std::vector<uint8_t>& truth, int C) {
    return metrics(confusion(pred, truth, C));
}

double hist_kl(const std::vector<double>& a, const std::vector<double>& b, int bins) {
    if (a.empty() || b.empty()) throw std::invalid_argument("hist_kl: empty sample");
    if (bins < 1) throw std::invalid_argument("hist_kl: need at least one bin");
    double lo = a[0], hi = a[0];
    for (double v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : b) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) return 0.0;  // constant combined sample

    const double eps = 1e-10;
    std::vector<double> ha(bins, 0.0), hb(bins, 0.0);
    auto fill = [&](const std::vector<double>& v, std::vector<double>& h) {
        for (double x : v) {
            int i = (int)((x - lo) / (hi - lo) * bins);
            h[std::clamp(i, 0, bins - 1)] += 1.0;
        }
        for (auto& c : h) c = c / (double)v.size() + eps;
    };
    fill(a, ha);
    fill(b, hb);
    // renormalize after smoothing so both are proper distributions
    double sa = 0.0, sb = 0.0;
    for (int i = 0; i < bins; ++i) {
        sa += ha[i];
        sb += hb[i];
    }
    double kl = 0.0;
    for (int i = 0; i < bins; ++i) kl += (ha[i] / sa) * std::log((ha[i] / sa) / (hb[i] / sb));
    return std::max(0.0, kl);
}

PcaCurve pca_accumulated_variance(const std::vector<double>& vectors, int64_t n, int64_t dim) {
    if (n < 2 || dim < 1) throw std::invalid_argument("pca: need >= 2 vectors of dim >= 1");
    if ((int64_t)vectors.size() != n * dim)
        throw std::invalid_argument("pca: buffer does not match n x dim");
    Eigen::Map<const Eigen::MatrixXd> X(vectors.data(), dim, n);  // column-major view
    Eigen::VectorXd mean = X.rowwise().mean();
    Eigen::MatrixXd centered = X.colwise() - mean;
    Eigen::MatrixXd cov = centered * centered.transpose() / (double)(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("pca: eigensolver failed");

    Eigen::VectorXd ev = es.eigenvalues();  // ascending
    std::vector<double> lam(dim);
    for (int64_t i = 0; i < dim; ++i) lam[i] = std::max(0.0, ev[dim - 1 - i]);
    double total = 0.0;
    for (double l : lam) total += l;

    PcaCurve out;
    out.accumulated.resize(dim);
    if (total <= 0.0) {
        out.rank_zero = true;
        std::fill(out.accumulated.begin(), out.accumulated.end(), 1.0);
        return out;
    }
    double acc = 0.0;
    for (int64_t i = 0; i < dim; ++i) {
        acc += lam[i];
        out.accumulated[i] = acc / total;
    }
    out.accumulated[dim - 1] = 1.0;
    return out;
}

NoiseDetectionReport noise_detection_report(const std::vector<double>& weights,
                                            const std::vector<uint8_t>& clean,
                                            const std::vector<uint8_t>& noisy) {
    if (weights.size() != clean.size() || clean.size() != noisy.size())
        throw std::invalid_argument("noise_detection_report: size mismatch");
    NoiseDetectionReport r;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (clean[i] == kUnlabeled || noisy[i] == kUnlabeled) continue;
        bool flagged = weights[i] < 1.0;
        bool is_noisy = clean[i] != noisy[i];
        r.flagged += flagged;
        r.noisy += is_noisy;
        r.flagged_noisy += flagged && is_noisy;
    }
    if (r.flagged > 0) r.precision = (double)r.flagged_noisy / (double)r.flagged;
    if (r.noisy > 0) r.recall = (double)r.flagged_noisy / (double)r.noisy;
    return r;
}

} // namespace nlss
