#include "nlss/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace nlss {

namespace {

constexpr double kLogFloor = 1e-12;

struct Dims {
    int64_t B, C, HW;
};

Dims check_inputs(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W, const char* op) {
    if (Q->shape.size() != 4 || Z->shape.size() != 4)
        throw std::invalid_argument(std::string(op) + ": expected BCHW inputs");
    if (Q->shape != Z->shape)
        throw std::invalid_argument(std::string(op) + ": prediction/label shape mismatch");
    if (W->shape.size() != 3 || W->shape[0] != Q->shape[0] ||
        W->shape[1] != Q->shape[2] || W->shape[2] != Q->shape[3])
        throw std::invalid_argument(std::string(op) + ": weight mask must be BHW");
    return {Q->shape[0], Q->shape[1], Q->shape[2] * Q->shape[3]};
}

TensorPtr degenerate_scalar(LossFlags* flags) {
    if (flags) flags->degenerate = true;
    return Tensor::scalar(0.0);
}

} // namespace

TensorPtr ce_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W, LossFlags* flags) {
    Dims d = check_inputs(Q, Z, W, "ce_loss");
    auto zc = std::make_shared<std::vector<double>>(Z->data);
    auto wc = std::make_shared<std::vector<double>>(W->data);
    double loss = 0.0, sw = 0.0;
    for (int64_t b = 0; b < d.B; ++b)
        for (int64_t i = 0; i < d.HW; ++i) {
            double w = (*wc)[b * d.HW + i];
            int64_t base = b * d.C * d.HW + i;
            bool labeled = false;
            double acc = 0.0;
            for (int64_t c = 0; c < d.C; ++c) {
                double z = (*zc)[base + c * d.HW];
                if (z > 0.0) {
                    labeled = true;
                    acc += z * std::log(std::max(Q->data[base + c * d.HW], kLogFloor));
                }
            }
            if (labeled) {
                loss -= w * acc;
                sw += w;
            }
        }
    if (sw <= 0.0) return degenerate_scalar(flags);
    loss /= sw;

    auto out = Tensor::make({1}, grad_enabled() && Q->requires_grad);
    out->data[0] = loss;
    if (out->requires_grad) {
        out->prev.push_back(Q);
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [Q, zc, wc, sw, d, ow] {
            auto o = ow.lock();
            double g = o->grad[0] / sw;
            double* gq = Q->g();
            for (int64_t b = 0; b < d.B; ++b)
                for (int64_t i = 0; i < d.HW; ++i) {
                    double w = (*wc)[b * d.HW + i];
                    if (w == 0.0) continue;
                    int64_t base = b * d.C * d.HW + i;
                    for (int64_t c = 0; c < d.C; ++c) {
                        double z = (*zc)[base + c * d.HW];
                        double q = Q->data[base + c * d.HW];
                        if (z > 0.0 && q > kLogFloor) gq[base + c * d.HW] -= g * w * z / q;
                    }
                }
        };
    }
    return out;
}

TensorPtr dice_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W, LossFlags* flags) {
    Dims d = check_inputs(Q, Z, W, "dice_loss");
    auto zc = std::make_shared<std::vector<double>>(Z->data);
    // weights masked to labeled pixels so unlabeled ones add nothing
    auto wl = std::make_shared<std::vector<double>>(W->data);
    for (int64_t b = 0; b < d.B; ++b)
        for (int64_t i = 0; i < d.HW; ++i) {
            int64_t base = b * d.C * d.HW + i;
            double zsum = 0.0;
            for (int64_t c = 0; c < d.C; ++c) zsum += (*zc)[base + c * d.HW];
            if (zsum <= 0.0) (*wl)[b * d.HW + i] = 0.0;
        }
    double num = 0.0, den = 0.0;
    for (int64_t b = 0; b < d.B; ++b)
        for (int64_t i = 0; i < d.HW; ++i) {
            double w = (*wl)[b * d.HW + i];
            if (w == 0.0) continue;
            int64_t base = b * d.C * d.HW + i;
            for (int64_t c = 0; c < d.C; ++c) {
                double z = (*zc)[base + c * d.HW];
                double q = Q->data[base + c * d.HW];
                num += w * z * q;
                den += w * (z + q);
            }
        }
    if (den <= 0.0) return degenerate_scalar(flags);

    auto out = Tensor::make({1}, grad_enabled() && Q->requires_grad);
    out->data[0] = 1.0 - 2.0 * num / den;
    if (out->requires_grad) {
        out->prev.push_back(Q);
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [Q, zc, wl, num, den, d, ow] {
            auto o = ow.lock();
            double g = o->grad[0];
            double inv2 = 1.0 / (den * den);
            double* gq = Q->g();
            for (int64_t b = 0; b < d.B; ++b)
                for (int64_t i = 0; i < d.HW; ++i) {
                    double w = (*wl)[b * d.HW + i];
                    if (w == 0.0) continue;
                    int64_t base = b * d.C * d.HW + i;
                    for (int64_t c = 0; c < d.C; ++c) {
                        double z = (*zc)[base + c * d.HW];
                        gq[base + c * d.HW] -= g * 2.0 * w * (z * den - num) * inv2;
                    }
                }
        };
    }
    return out;
}

TensorPtr seg_loss(const TensorPtr& Q, const TensorPtr& Z, const TensorPtr& W, LossFlags* flags) {
    return add(ce_loss(Q, Z, W, flags), dice_loss(Q, Z, W, flags));
}

TensorPtr kl_consistency(const TensorPtr& P, const TensorPtr& Q, const TensorPtr& We,
                         LossFlags* flags) {
    if (P->requires_grad || P->backward_fn)
        throw std::logic_error("kl_consistency: target must be a detached tensor");
    Dims d = check_inputs(Q, P, We, "kl_consistency");
    auto pc = std::make_shared<std::vector<double>>(P->data);
    auto wc = std::make_shared<std::vector<double>>(We->data);
    double loss = 0.0, sw = 0.0;
    for (int64_t b = 0; b < d.B; ++b)
        for (int64_t i = 0; i < d.HW; ++i) {
            double w = (*wc)[b * d.HW + i];
            sw += w;
            if (w == 0.0) continue;
            int64_t base = b * d.C * d.HW + i;
            double acc = 0.0;
            for (int64_t c = 0; c < d.C; ++c) {
                double p = (*pc)[base + c * d.HW];
                if (p > 0.0)
                    acc += p * std::log(p / std::max(Q->data[base + c * d.HW], kLogFloor));
            }
            loss += w * acc;
        }
    if (sw <= 0.0) return degenerate_scalar(flags);
    loss /= sw;

    auto out = Tensor::make({1}, grad_enabled() && Q->requires_grad);
    out->data[0] = loss;
    if (out->requires_grad) {
        out->prev.push_back(Q);
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [Q, pc, wc, sw, d, ow] {
            auto o = ow.lock();
            double g = o->grad[0] / sw;
            double* gq = Q->g();
            for (int64_t b = 0; b < d.B; ++b)
                for (int64_t i = 0; i < d.HW; ++i) {
                    double w = (*wc)[b * d.HW + i];
                    if (w == 0.0) continue;
                    int64_t base = b * d.C * d.HW + i;
                    for (int64_t c = 0; c < d.C; ++c) {
                        double p = (*pc)[base + c * d.HW];
                        double q = Q->data[base + c * d.HW];
                        if (p > 0.0 && q > kLogFloor) gq[base + c * d.HW] -= g * w * p / q;
                    }
                }
        };
    }
    return out;
}

TotalLossParts total_loss(const TensorPtr& Q1, const TensorPtr& Q2, const TensorPtr& Z,
                          const TensorPtr& Wl1, const TensorPtr& Wl2,
                          const TensorPtr& We1, const TensorPtr& We2,
                          double consistency_weight) {
    TotalLossParts parts;
    auto P1 = detach(Q1);
    auto P2 = detach(Q2);
    parts.seg1 = seg_loss(Q1, Z, Wl1);
    parts.seg2 = seg_loss(Q2, Z, Wl2);
    parts.kl12 = kl_consistency(P1, Q2, We1);
    parts.kl21 = kl_consistency(P2, Q1, We2);
    auto kl = add(parts.kl12, parts.kl21);
    if (consistency_weight != 1.0) kl = mul_k(kl, consistency_weight);
    parts.total = add(add(parts.seg1, parts.seg2), kl);
    return parts;
}

} // namespace nlss
