#include "nlss/tensor.hpp"
#include "nlss/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace nlss {

TensorPtr Tensor::make(std::vector<int64_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    int64_t n = 1;
    for (int64_t e : t->shape) {
        if (e <= 0) throw std::invalid_argument("tensor: nonpositive extent");
        n *= e;
    }
    t->data.assign(static_cast<size_t>(n), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
    auto t = make({1}, requires_grad);
    t->data[0] = v;
    return t;
}

int64_t Tensor::numel() const {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

double* Tensor::g() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad.data();
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

void backward(const TensorPtr& loss) {
    if (!loss || loss->numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar tensor");
    // iterative DFS topological order
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->prev.size()) {
            Tensor* child = node->prev[idx++].get();
            if (child && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    if (loss->requires_grad) loss->g()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

namespace {

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape;
}

TensorPtr node_like(const TensorPtr& a, std::vector<int64_t> shape,
                    std::initializer_list<TensorPtr> inputs) {
    bool rg = false;
    if (g_grad_enabled)
        for (const auto& in : inputs) rg = rg || (in && in->requires_grad);
    auto out = Tensor::make(std::move(shape), rg);
    if (rg)
        for (const auto& in : inputs)
            if (in) out->prev.push_back(in);
    return out;
}

void require_4d(const Tensor& t, const char* op) {
    if (t.shape.size() != 4)
        throw std::invalid_argument(std::string(op) + ": expected 4-D tensor");
}

} // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) throw std::invalid_argument("add: shape mismatch");
    auto out = node_like(a, a->shape, {a, b});
    kern::ops().add(a->data.data(), b->data.data(), out->data.data(), out->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, b, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            if (a->requires_grad) kern::ops().axpy(1.0, o->g(), a->g(), n);
            if (b->requires_grad) kern::ops().axpy(1.0, o->g(), b->g(), n);
        };
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) throw std::invalid_argument("sub: shape mismatch");
    auto out = node_like(a, a->shape, {a, b});
    kern::ops().sub(a->data.data(), b->data.data(), out->data.data(), out->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, b, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            if (a->requires_grad) kern::ops().axpy(1.0, o->g(), a->g(), n);
            if (b->requires_grad) kern::ops().axpy(-1.0, o->g(), b->g(), n);
        };
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) throw std::invalid_argument("mul: shape mismatch");
    auto out = node_like(a, a->shape, {a, b});
    kern::ops().mul(a->data.data(), b->data.data(), out->data.data(), out->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, b, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            std::vector<double> tmp(n);
            if (a->requires_grad) {
                kern::ops().mul(o->g(), b->data.data(), tmp.data(), n);
                kern::ops().axpy(1.0, tmp.data(), a->g(), n);
            }
            if (b->requires_grad) {
                kern::ops().mul(o->g(), a->data.data(), tmp.data(), n);
                kern::ops().axpy(1.0, tmp.data(), b->g(), n);
            }
        };
    }
    return out;
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) throw std::invalid_argument("div: shape mismatch");
    auto out = node_like(a, a->shape, {a, b});
    kern::ops().div(a->data.data(), b->data.data(), out->data.data(), out->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, b, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            std::vector<double> tmp(n);
            if (a->requires_grad) {
                kern::ops().div(o->g(), b->data.data(), tmp.data(), n);
                kern::ops().axpy(1.0, tmp.data(), a->g(), n);
            }
            if (b->requires_grad) {
                // d/db (a/b) = -a / b^2
                for (size_t i = 0; i < n; ++i)
                    tmp[i] = -o->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
                kern::ops().axpy(1.0, tmp.data(), b->g(), n);
            }
        };
    }
    return out;
}

TensorPtr mul_k(const TensorPtr& a, double k) {
    auto out = node_like(a, a->shape, {a});
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * k;
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, k, ow] {
            auto o = ow.lock();
            kern::ops().axpy(k, o->g(), a->g(), o->data.size());
        };
    }
    return out;
}

TensorPtr add_k(const TensorPtr& a, double k) {
    auto out = node_like(a, a->shape, {a});
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + k;
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, ow] {
            auto o = ow.lock();
            kern::ops().axpy(1.0, o->g(), a->g(), o->data.size());
        };
    }
    return out;
}

TensorPtr relu(const TensorPtr& x) {
    auto out = node_like(x, x->shape, {x});
    kern::ops().relu(x->data.data(), out->data.data(), out->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            std::vector<double> tmp(n);
            kern::ops().relu_bwd(o->g(), x->data.data(), tmp.data(), n);
            kern::ops().axpy(1.0, tmp.data(), x->g(), n);
        };
    }
    return out;
}

TensorPtr log_clamped(const TensorPtr& x, double floor) {
    auto out = node_like(x, x->shape, {x});
    for (size_t i = 0; i < out->data.size(); ++i)
        out->data[i] = std::log(std::max(x->data[i], floor));
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, floor, ow] {
            auto o = ow.lock();
            double* xg = x->g();
            for (size_t i = 0; i < o->data.size(); ++i)
                if (x->data[i] > floor) xg[i] += o->grad[i] / x->data[i];
        };
    }
    return out;
}

TensorPtr exp_op(const TensorPtr& x) {
    auto out = node_like(x, x->shape, {x});
    for (size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::exp(x->data[i]);
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, ow] {
            auto o = ow.lock();
            size_t n = o->data.size();
            std::vector<double> tmp(n);
            kern::ops().mul(o->g(), o->data.data(), tmp.data(), n);
            kern::ops().axpy(1.0, tmp.data(), x->g(), n);
        };
    }
    return out;
}

TensorPtr softmax_channels(const TensorPtr& logits) {
    require_4d(*logits, "softmax");
    int64_t B = logits->shape[0], C = logits->shape[1];
    int64_t HW = logits->shape[2] * logits->shape[3];
    if (C < 1) throw std::domain_error("softmax: empty channel axis");
    auto out = node_like(logits, logits->shape, {logits});
    const double* in = logits->data.data();
    double* q = out->data.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < HW; ++i) {
            int64_t base = b * C * HW + i;
            double m = in[base];
            for (int64_t c = 1; c < C; ++c) m = std::max(m, in[base + c * HW]);
            double z = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double e = std::exp(in[base + c * HW] - m);
                q[base + c * HW] = e;
                z += e;
            }
            for (int64_t c = 0; c < C; ++c) q[base + c * HW] /= z;
        }
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [logits, B, C, HW, ow] {
            auto o = ow.lock();
            const double* q = o->data.data();
            const double* gq = o->grad.data();
            double* gl = logits->g();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < HW; ++i) {
                    int64_t base = b * C * HW + i;
                    double dotqg = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        dotqg += gq[base + c * HW] * q[base + c * HW];
                    for (int64_t c = 0; c < C; ++c)
                        gl[base + c * HW] += q[base + c * HW] * (gq[base + c * HW] - dotqg);
                }
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = node_like(x, {1}, {x});
    out->data[0] = kern::ops().sum(x->data.data(), x->data.size());
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, ow] {
            auto o = ow.lock();
            double g = o->grad[0];
            double* xg = x->g();
            for (size_t i = 0; i < x->data.size(); ++i) xg[i] += g;
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& x) {
    return mul_k(sum_all(x), 1.0 / static_cast<double>(x->numel()));
}

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    require_4d(*a, "concat");
    require_4d(*b, "concat");
    if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3])
        throw std::invalid_argument("concat: spatial/batch mismatch");
    int64_t B = a->shape[0], Ca = a->shape[1], Cb = b->shape[1];
    int64_t HW = a->shape[2] * a->shape[3];
    auto out = node_like(a, {B, Ca + Cb, a->shape[2], a->shape[3]}, {a, b});
    for (int64_t n = 0; n < B; ++n) {
        std::copy_n(a->data.data() + n * Ca * HW, Ca * HW,
                    out->data.data() + n * (Ca + Cb) * HW);
        std::copy_n(b->data.data() + n * Cb * HW, Cb * HW,
                    out->data.data() + n * (Ca + Cb) * HW + Ca * HW);
    }
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [a, b, B, Ca, Cb, HW, ow] {
            auto o = ow.lock();
            for (int64_t n = 0; n < B; ++n) {
                const double* og = o->grad.data() + n * (Ca + Cb) * HW;
                if (a->requires_grad)
                    kern::ops().axpy(1.0, og, a->g() + n * Ca * HW, Ca * HW);
                if (b->requires_grad)
                    kern::ops().axpy(1.0, og + Ca * HW, b->g() + n * Cb * HW, Cb * HW);
            }
        };
    }
    return out;
}

TensorPtr slice_channels(const TensorPtr& x, int64_t c0, int64_t c1) {
    require_4d(*x, "slice");
    if (c0 < 0 || c1 <= c0 || c1 > x->shape[1])
        throw std::invalid_argument("slice: channel range out of bounds");
    int64_t B = x->shape[0], C = x->shape[1], Cs = c1 - c0;
    int64_t HW = x->shape[2] * x->shape[3];
    auto out = node_like(x, {B, Cs, x->shape[2], x->shape[3]}, {x});
    for (int64_t n = 0; n < B; ++n)
        std::copy_n(x->data.data() + (n * C + c0) * HW, Cs * HW,
                    out->data.data() + n * Cs * HW);
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, c0, B, C, Cs, HW, ow] {
            auto o = ow.lock();
            for (int64_t n = 0; n < B; ++n)
                kern::ops().axpy(1.0, o->grad.data() + n * Cs * HW,
                                 x->g() + (n * C + c0) * HW, Cs * HW);
        };
    }
    return out;
}

TensorPtr upsample_nearest2x(const TensorPtr& x) {
    require_4d(*x, "upsample");
    int64_t B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
    auto out = node_like(x, {B, C, 2 * H, 2 * W}, {x});
    for (int64_t nc = 0; nc < B * C; ++nc) {
        const double* src = x->data.data() + nc * H * W;
        double* dst = out->data.data() + nc * 4 * H * W;
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < W; ++j) {
                double v = src[i * W + j];
                int64_t o = (2 * i) * (2 * W) + 2 * j;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * W] = v;
                dst[o + 2 * W + 1] = v;
            }
    }
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, B, C, H, W, ow] {
            auto o = ow.lock();
            double* xg = x->g();
            for (int64_t nc = 0; nc < B * C; ++nc) {
                const double* og = o->grad.data() + nc * 4 * H * W;
                double* dst = xg + nc * H * W;
                for (int64_t i = 0; i < H; ++i)
                    for (int64_t j = 0; j < W; ++j) {
                        int64_t s = (2 * i) * (2 * W) + 2 * j;
                        dst[i * W + j] += og[s] + og[s + 1] + og[s + 2 * W] + og[s + 2 * W + 1];
                    }
            }
        };
    }
    return out;
}

namespace {

void im2col(const double* img, int64_t Cin, int64_t H, int64_t W,
            int64_t kh, int64_t kw, int stride, int pad,
            int64_t Ho, int64_t Wo, double* col) {
    for (int64_t c = 0; c < Cin; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                double* row = col + ((c * kh + ky) * kw + kx) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        std::fill_n(row + oy * Wo, Wo, 0.0);
                        continue;
                    }
                    const double* src = img + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride - pad + kx;
                        row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
}

void col2im_add(const double* col, int64_t Cin, int64_t H, int64_t W,
                int64_t kh, int64_t kw, int stride, int pad,
                int64_t Ho, int64_t Wo, double* img) {
    for (int64_t c = 0; c < Cin; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                const double* row = col + ((c * kh + ky) * kw + kx) * Ho * Wo;
                for (int64_t oy = 0; oy < Ho; ++oy) {
                    int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    double* dst = img + (c * H + iy) * W;
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        int64_t ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
                    }
                }
            }
}

} // namespace

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& bias,
                 int stride, int pad) {
    require_4d(*x, "conv2d");
    require_4d(*w, "conv2d");
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
    int64_t B = x->shape[0], Cin = x->shape[1], H = x->shape[2], W = x->shape[3];
    int64_t Cout = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    if (w->shape[1] != Cin) throw std::invalid_argument("conv2d: channel mismatch");
    if (bias && (bias->shape.size() != 1 || bias->shape[0] != Cout))
        throw std::invalid_argument("conv2d: bias shape mismatch");
    int64_t Ho = (H + 2 * pad - kh) / stride + 1;
    int64_t Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");

    int64_t K = Cin * kh * kw, No = Ho * Wo;
    auto out = node_like(x, {B, Cout, Ho, Wo}, {x, w, bias});
    std::vector<double> col(static_cast<size_t>(K * No));
    for (int64_t n = 0; n < B; ++n) {
        im2col(x->data.data() + n * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
        double* y = out->data.data() + n * Cout * No;
        if (bias)
            for (int64_t co = 0; co < Cout; ++co)
                std::fill_n(y + co * No, No, bias->data[co]);
        kern::ops().gemm_nn(Cout, No, K, w->data.data(), K, col.data(), No, y, No);
    }
    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, w, bias, stride, pad, B, Cin, H, W, Cout, kh, kw, Ho, Wo, ow] {
            auto o = ow.lock();
            int64_t K = Cin * kh * kw, No = Ho * Wo;
            std::vector<double> col(static_cast<size_t>(K * No));
            std::vector<double> dcol(static_cast<size_t>(K * No));
            for (int64_t n = 0; n < B; ++n) {
                const double* gy = o->grad.data() + n * Cout * No;
                if (bias && bias->requires_grad) {
                    double* gb = bias->g();
                    for (int64_t co = 0; co < Cout; ++co)
                        gb[co] += kern::ops().sum(gy + co * No, No);
                }
                if (w->requires_grad) {
                    im2col(x->data.data() + n * Cin * H * W, Cin, H, W, kh, kw,
                           stride, pad, Ho, Wo, col.data());
                    kern::ops().gemm_nt(Cout, K, No, gy, No, col.data(), No, w->g(), K);
                }
                if (x->requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    kern::ops().gemm_tn(K, No, Cout, w->data.data(), K, gy, No, dcol.data(), No);
                    col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                               x->g() + n * Cin * H * W);
                }
            }
        };
    }
    return out;
}

TensorPtr batch_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     BnStats& running, bool training, double momentum, double eps) {
    require_4d(*x, "batch_norm");
    int64_t B = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
    int64_t n = B * HW;
    if (n < 1) throw std::invalid_argument("batch_norm: needs at least one spatial element");
    if (gamma->numel() != C || beta->numel() != C)
        throw std::invalid_argument("batch_norm: parameter shape mismatch");
    if (running.mean.size() != static_cast<size_t>(C)) {
        running.mean.assign(C, 0.0);
        running.var.assign(C, 1.0);
    }
    auto out = node_like(x, x->shape, {x, gamma, beta});
    auto xhat = std::make_shared<std::vector<double>>(x->data.size());
    auto invstd = std::make_shared<std::vector<double>>(C);
    std::vector<double> mean(C), var(C);

    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t b = 0; b < B; ++b)
                s += kern::ops().sum(x->data.data() + (b * C + c) * HW, HW);
            mean[c] = s / n;
        }
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t b = 0; b < B; ++b) {
                const double* p = x->data.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    double d = p[i] - mean[c];
                    s += d * d;
                }
            }
            var[c] = s / n;
        }
        for (int64_t c = 0; c < C; ++c) {
            running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * mean[c];
            double unbiased = n > 1 ? var[c] * n / (n - 1.0) : var[c];
            running.var[c] = (1.0 - momentum) * running.var[c] + momentum * unbiased;
        }
    } else {
        mean = running.mean;
        var = running.var;
    }
    for (int64_t c = 0; c < C; ++c) (*invstd)[c] = 1.0 / std::sqrt(var[c] + eps);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* p = x->data.data() + (b * C + c) * HW;
            double* xh = xhat->data() + (b * C + c) * HW;
            double* y = out->data.data() + (b * C + c) * HW;
            double is = (*invstd)[c], m = mean[c];
            double gm = gamma->data[c], bt = beta->data[c];
            for (int64_t i = 0; i < HW; ++i) {
                xh[i] = (p[i] - m) * is;
                y[i] = gm * xh[i] + bt;
            }
        }

    if (out->requires_grad) {
        auto ow = std::weak_ptr<Tensor>(out);
        out->backward_fn = [x, gamma, beta, xhat, invstd, training, B, C, HW, n, ow] {
            auto o = ow.lock();
            for (int64_t c = 0; c < C; ++c) {
                double sum_gy = 0.0, sum_gy_xh = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    const double* gy = o->grad.data() + (b * C + c) * HW;
                    const double* xh = xhat->data() + (b * C + c) * HW;
                    sum_gy += kern::ops().sum(gy, HW);
                    sum_gy_xh += kern::ops().dot(gy, xh, HW);
                }
                if (gamma->requires_grad) gamma->g()[c] += sum_gy_xh;
                if (beta->requires_grad) beta->g()[c] += sum_gy;
                if (x->requires_grad) {
                    double gm_is = gamma->data[c] * (*invstd)[c];
                    double* gx = x->g();
                    if (training) {
                        double mg = sum_gy / n, mgx = sum_gy_xh / n;
                        for (int64_t b = 0; b < B; ++b) {
                            const double* gy = o->grad.data() + (b * C + c) * HW;
                            const double* xh = xhat->data() + (b * C + c) * HW;
                            double* dst = gx + (b * C + c) * HW;
                            for (int64_t i = 0; i < HW; ++i)
                                dst[i] += gm_is * (gy[i] - mg - xh[i] * mgx);
                        }
                    } else {
                        for (int64_t b = 0; b < B; ++b)
                            kern::ops().axpy(gm_is, o->grad.data() + (b * C + c) * HW,
                                             gx + (b * C + c) * HW, HW);
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr detach(const TensorPtr& x) {
    auto out = Tensor::make(x->shape, false);
    out->data = x->data;
    return out;
}

} // namespace nlss
