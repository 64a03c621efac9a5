#include "nlss/select.hpp"

#include "nlss/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace nlss {

namespace {

void check_probs(const TensorPtr& P, const char* who) {
    if (!P || P->shape.size() != 4)
        throw std::invalid_argument(std::string(who) + ": expected a B x C x H x W tensor");
}

void check_pair(const TensorPtr& P, const LabelBatch& y, const char* who) {
    check_probs(P, who);
    if (P->shape[0] != y.B || P->shape[2] != y.H || P->shape[3] != y.W)
        throw std::invalid_argument(std::string(who) + ": label map shape does not match probabilities");
    if ((int64_t)y.v.size() != y.numel())
        throw std::invalid_argument(std::string(who) + ": label buffer size mismatch");
}

} // namespace

ConfMask label_confidence(const TensorPtr& P, const LabelBatch& y) {
    check_pair(P, y, "label_confidence");
    const int64_t C = P->shape[1], hw = y.H * y.W;
    auto f = Tensor::make({y.B, y.H, y.W}, false);
    for (int64_t b = 0; b < y.B; ++b) {
        for (int64_t i = 0; i < hw; ++i) {
            uint8_t c = y.v[b * hw + i];
            if (c == kUnlabeled) continue;
            if (c >= C)
                throw std::invalid_argument("label_confidence: class id out of range");
            f->data[b * hw + i] = P->data[(b * C + c) * hw + i];
        }
    }
    return {f, ConfKind::label_based, false};
}

ConfMask entity_confidence(const TensorPtr& P) {
    check_probs(P, "entity_confidence");
    const int64_t B = P->shape[0], C = P->shape[1], H = P->shape[2], W = P->shape[3];
    const int64_t hw = H * W;
    auto f = Tensor::make({B, H, W}, false);
    if (C == 1) {
        std::fill(f->data.begin(), f->data.end(), 1.0);
        return {f, ConfKind::entity_based, false};
    }
    const double k = std::log((double)C);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t i = 0; i < hw; ++i) {
            double ent = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double p = P->data[(b * C + c) * hw + i];
                if (p > 0.0) ent += p * std::log(p);
            }
            double v = 1.0 + ent / k;
            f->data[b * hw + i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return {f, ConfKind::entity_based, false};
}

ConfMask enhance(const ConfMask& own, const ConfMask& partner) {
    if (!own.t || !partner.t) throw std::invalid_argument("enhance: null mask");
    if (own.kind != partner.kind)
        throw std::logic_error("enhance: cannot mix label-based and entity-based masks");
    if (own.enhanced || partner.enhanced)
        throw std::logic_error("enhance: inputs must be raw confidence masks");
    if (own.t->shape != partner.t->shape)
        throw std::invalid_argument("enhance: mask shape mismatch");
    auto out = Tensor::make(own.t->shape, false);
    const int64_t n = out->numel();
    for (int64_t i = 0; i < n; ++i)
        out->data[i] = 0.5 * own.t->data[i] * (1.0 + partner.t->data[i]);
    return {out, own.kind, true};
}

TensorPtr threshold_label(const ConfMask& fl, const LabelBatch& y, double alpha,
                          SelectFlags* flags) {
    if (!fl.t) throw std::invalid_argument("threshold_label: null mask");
    if (fl.kind != ConfKind::label_based)
        throw std::logic_error("threshold_label: needs a label-based mask");
    if (fl.t->shape != std::vector<int64_t>{y.B, y.H, y.W})
        throw std::invalid_argument("threshold_label: mask shape does not match labels");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::invalid_argument("threshold_label: alpha must be in (0, 1]");

    const int64_t n = y.numel();
    int64_t max_class = -1;
    for (int64_t i = 0; i < n; ++i)
        if (y.v[i] != kUnlabeled && y.v[i] > max_class) max_class = y.v[i];

    auto w = Tensor::make(fl.t->shape, false);
    if (max_class < 0) return w;  // nothing labeled, all weights stay 0

    // per-class confidence pools over the whole batch
    std::vector<std::vector<double>> pool((size_t)max_class + 1);
    for (int64_t i = 0; i < n; ++i)
        if (y.v[i] != kUnlabeled) pool[y.v[i]].push_back(fl.t->data[i]);

    std::vector<double> thresh((size_t)max_class + 1, 0.0);
    for (size_t c = 0; c < pool.size(); ++c) {
        auto& p = pool[c];
        if (p.empty()) continue;
        int64_t k = (int64_t)std::floor(alpha * (double)p.size());
        if (k < 1) k = 1;
        std::nth_element(p.begin(), p.begin() + (k - 1), p.end(), std::greater<double>());
        thresh[c] = p[k - 1];
        if (thresh[c] <= 0.0 && flags) flags->zero_confidence_class = true;
    }

    for (int64_t i = 0; i < n; ++i) {
        uint8_t c = y.v[i];
        if (c == kUnlabeled) continue;
        double t = thresh[c];
        w->data[i] = t > 0.0 ? std::min(1.0, fl.t->data[i] / t) : 1.0;
    }
    return w;
}

TensorPtr weight_entity(const ConfMask& fe, double gamma) {
    if (!fe.t) throw std::invalid_argument("weight_entity: null mask");
    if (fe.kind != ConfKind::entity_based)
        throw std::logic_error("weight_entity: needs an entity-based mask");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::invalid_argument("weight_entity: gamma must be in [0, 1]");
    auto w = Tensor::make(fe.t->shape, false);
    const int64_t n = w->numel();
    for (int64_t i = 0; i < n; ++i)
        w->data[i] = (1.0 - gamma) + gamma * fe.t->data[i];
    return w;
}

std::pair<double, double> selection_schedule(int epoch, const SelectionSchedule& s) {
    if (s.ramp_epochs < 1)
        throw std::invalid_argument("selection_schedule: ramp_epochs must be >= 1");
    if (!(s.alpha0 > 0.0 && s.alpha0 <= 1.0))
        throw std::invalid_argument("selection_schedule: alpha0 must be in (0, 1]");
    if (epoch < 0) throw std::invalid_argument("selection_schedule: negative epoch");
    double r = (double)std::min(epoch, s.ramp_epochs) / (double)s.ramp_epochs;
    return {std::pow(s.alpha0, r), r};
}

void dump_masks(const std::string& dir, int step, int modality,
                const ConfMask& fl, const ConfMask& fe,
                const ConfMask& fpl, const ConfMask& fpe,
                const TensorPtr& wl, const TensorPtr& we) {
    std::filesystem::create_directories(dir);
    auto path = [&](const char* name) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "step%05d_m%d_%s.nlt1", step, modality, name);
        return dir + "/" + buf;
    };
    save_nlt1_file(path("F_l"), fl.t->shape, fl.t->data);
    save_nlt1_file(path("F_e"), fe.t->shape, fe.t->data);
    save_nlt1_file(path("Fp_l"), fpl.t->shape, fpl.t->data);
    save_nlt1_file(path("Fp_e"), fpe.t->shape, fpe.t->data);
    save_nlt1_file(path("W_l"), wl->shape, wl->data);
    save_nlt1_file(path("W_e"), we->shape, we->data);
}

} // namespace nlss
