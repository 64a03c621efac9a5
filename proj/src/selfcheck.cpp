#include "nlss/selfcheck.hpp"

#include "nlss/kernels.hpp"
#include "nlss/labels.hpp"
#include "nlss/losses.hpp"
#include "nlss/metrics.hpp"
#include "nlss/model.hpp"
#include "nlss/select.hpp"
#include "nlss/smooth.hpp"
#include "nlss/synth.hpp"
#include "nlss/train.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

namespace nlss {

namespace {

struct Suite {
    std::vector<CheckResult> results;

    void check(const std::string& name, bool pass, const std::string& detail = "") {
        results.push_back({name, pass, pass ? "" : detail});
    }
    void near(const std::string& name, double got, double want, double tol) {
        bool ok = std::isfinite(got) && std::fabs(got - want) <= tol;
        char buf[128];
        std::snprintf(buf, sizeof buf, "got %.12g, want %.12g (tol %g)", got, want, tol);
        check(name, ok, buf);
    }
};

TensorPtr prob_pixel(std::initializer_list<double> ps) {
    auto t = Tensor::make({1, (int64_t)ps.size(), 1, 1}, false);
    std::copy(ps.begin(), ps.end(), t->data.begin());
    return t;
}

TensorPtr mask_pixel(double w) {
    auto t = Tensor::make({1, 1, 1}, false);
    t->data[0] = w;
    return t;
}

// central finite differences against the analytic gradient of a rebuilt loss
double fd_worst_rel_err(const std::function<TensorPtr(const TensorPtr&)>& make_loss,
                        TensorPtr x) {
    x->zero_grad();
    auto loss = make_loss(x);
    backward(loss);
    std::vector<double> analytic = x->grad;
    const double h = 1e-5;
    double worst = 0.0;
    for (int64_t i = 0; i < x->numel(); ++i) {
        double keep = x->data[i];
        x->data[i] = keep + h;
        double up = make_loss(x)->data[0];
        x->data[i] = keep - h;
        double dn = make_loss(x)->data[0];
        x->data[i] = keep;
        double fd = (up - dn) / (2.0 * h);
        double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
        worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
    }
    return worst;
}

} // namespace

std::vector<CheckResult> run_selfchecks() {
    Suite s;

    // ---- loss golden values, direct evaluation
    {
        auto z = prob_pixel({1.0, 0.0});
        auto q = prob_pixel({0.5, 0.5});
        s.near("ce: one pixel, q=0.5", ce_loss(q, z, mask_pixel(1))->data[0],
               std::log(2.0), 1e-9);
        auto zq = prob_pixel({0.3, 0.7});
        s.near("ce: z=q gives entropy", ce_loss(zq, zq, mask_pixel(1))->data[0],
               -(0.3 * std::log(0.3) + 0.7 * std::log(0.7)), 1e-9);
        auto q64 = prob_pixel({0.6, 0.4});
        s.near("dice: (1,0) vs (0.6,0.4)", dice_loss(q64, z, mask_pixel(1))->data[0], 0.4, 1e-9);
        auto p10 = prob_pixel({1.0, 0.0});
        s.near("kl: (1,0) vs uniform", kl_consistency(p10, q, mask_pixel(1))->data[0],
               std::log(2.0), 1e-9);
        s.near("kl: p=q", kl_consistency(detach(zq), zq, mask_pixel(1))->data[0], 0.0, 1e-12);
    }

    // ---- confidence masks
    {
        auto p = prob_pixel({0.9, 0.1});
        double ent = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
        s.near("entity confidence (0.9,0.1)", entity_confidence(p).t->data[0],
               1.0 - ent / std::log(2.0), 1e-9);
        s.near("entity confidence golden", entity_confidence(p).t->data[0], 0.531004, 1e-6);

        ConfMask a{mask_pixel(0.5), ConfKind::label_based, false};
        ConfMask b{mask_pixel(0.5), ConfKind::label_based, false};
        s.near("enhance midpoint 3/8", enhance(a, b).t->data[0], 0.375, 1e-12);
        ConfMask c{mask_pixel(0.8), ConfKind::label_based, false};
        ConfMask d{mask_pixel(0.2), ConfKind::label_based, false};
        s.near("enhance 0.8 by 0.2", enhance(c, d).t->data[0], 0.48, 1e-12);
        s.near("enhance 0.2 by 0.8", enhance(d, c).t->data[0], 0.18, 1e-12);
    }

    // ---- thresholding and entity weighting
    {
        auto f = Tensor::make({1, 1, 4}, false);
        f->data = {0.9, 0.8, 0.4, 0.2};
        LabelBatch y{1, 1, 4, {0, 0, 0, 0}};
        auto w = threshold_label({f, ConfKind::label_based, true}, y, 0.5);
        bool ok = std::fabs(w->data[0] - 1.0) < 1e-12 && std::fabs(w->data[1] - 1.0) < 1e-12 &&
                  std::fabs(w->data[2] - 0.5) < 1e-12 && std::fabs(w->data[3] - 0.25) < 1e-12;
        s.check("threshold weights [1,1,0.5,0.25]", ok);
        ConfMask fe{mask_pixel(0.4), ConfKind::entity_based, true};
        s.near("entity weight 0.7", weight_entity(fe, 0.5)->data[0], 0.7, 1e-12);
    }

    // ---- schedules
    {
        SelectionSchedule sch{0.5, 24};
        auto [a0, g0] = selection_schedule(0, sch);
        auto [af, gf] = selection_schedule(24, sch);
        auto [am, gm] = selection_schedule(12, sch);
        s.near("alpha(0)", a0, 1.0, 1e-12);
        s.near("gamma(0)", g0, 0.0, 1e-12);
        s.near("alpha(ramp)", af, 0.5, 1e-12);
        s.near("gamma(ramp)", gf, 1.0, 1e-12);
        s.near("alpha(half ramp)", am, std::sqrt(0.5), 1e-9);
        (void)gm;
    }

    // ---- smoothing
    {
        LabelBatch y{1, 8, 8, std::vector<uint8_t>(64, 0)};
        auto z = one_hot(y, 2);
        std::vector<TensorPtr> seasons{z, z, z, z};
        auto zp = smooth_labels(z, seasons, SmoothingParams{0.05, 0.15, 5, 1.0});
        int64_t center = 3 * 8 + 3;
        s.near("smoothing constant region, kept class", zp->data[center], 0.975, 1e-9);
        s.near("smoothing constant region, other class", zp->data[64 + center], 0.025, 1e-9);
    }

    // ---- metrics
    {
        ConfusionMatrix cm;
        cm.C = 2;
        cm.counts = {2, 0, 1, 1};
        auto r = metrics(cm);
        s.near("metrics OA", r.oa, 0.75, 1e-9);
        s.near("metrics AA", r.aa, 0.75, 1e-9);
        s.near("metrics mIoU", r.miou, 7.0 / 12.0, 1e-9);
        s.near("metrics mF1", r.mf1, 11.0 / 15.0, 1e-9);
    }

    // ---- agreement relation
    {
        std::vector<uint8_t> a{1, 2, 2, 1};
        std::vector<uint8_t> b{0, 1, 0, 2};
        std::map<int, std::vector<int>> rel{{1, {0}}, {2, {0, 1}}};
        s.near("agreement 3 of 4", agreement_accuracy(a, b, rel), 0.75, 1e-12);
    }

    // ---- normalization
    {
        s.near("normalize midpoint", normalize_value(3.0, 3.0, 1.0), 0.5, 1e-12);
        s.near("normalize +1 sigma", normalize_value(4.0, 3.0, 1.0), 0.75, 1e-12);
        s.near("normalize clamp high", normalize_value(9.0, 3.0, 1.0), 1.0, 1e-12);
    }

    // ---- conv and adam oracles
    {
        auto x = Tensor::make({1, 1, 3, 3}, false);
        std::fill(x->data.begin(), x->data.end(), 1.0);
        auto w = Tensor::make({1, 1, 3, 3}, false);
        std::fill(w->data.begin(), w->data.end(), 1.0);
        auto y = conv2d(x, w, nullptr, 1, 0);
        s.near("conv 3x3 ones, no pad", y->data[0], 9.0, 1e-12);

        auto p = Tensor::make({1}, true);
        p->data[0] = 0.0;
        p->g()[0] = 1.0;
        AdamState st;
        adam_step({{"p", p}}, st, 1e-3);
        s.near("adam first step", p->data[0], -1e-3 / (1.0 + 1e-8), 1e-9);
    }

    // ---- gaussian kernel against direct evaluation
    {
        auto k = gaussian_kernel(3, 1.0);
        double raw = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) raw += std::exp(-(dx * dx + dy * dy) / 2.0);
        s.near("gaussian 3x3 center", k[4], 1.0 / raw, 1e-12);
        double sum = 0.0;
        for (double v : k) sum += v;
        s.near("gaussian sums to 1", sum, 1.0, 1e-12);
    }

    // ---- finite differences through softmax into each loss
    {
        Rng rng(99);
        auto logits = Tensor::make({1, 3, 2, 2}, true);
        for (auto& v : logits->data) v = rng.normal();
        LabelBatch y{1, 2, 2, {0, 2, 1, 0}};
        auto z = one_hot(y, 3);
        auto w = Tensor::make({1, 2, 2}, false);
        w->data = {1.0, 0.5, 0.8, 0.2};

        auto seg_of = [&](const TensorPtr& x) { return seg_loss(softmax_channels(x), z, w); };
        s.near("fd: seg loss", fd_worst_rel_err(seg_of, logits), 0.0, 1e-4);

        auto fixed = Tensor::make({1, 3, 2, 2}, false);
        for (auto& v : fixed->data) v = rng.uniform(0.05, 0.5);
        auto pfix = softmax_channels(fixed);
        auto kl_of = [&](const TensorPtr& x) {
            return kl_consistency(detach(pfix), softmax_channels(x), w);
        };
        s.near("fd: kl consistency", fd_worst_rel_err(kl_of, logits), 0.0, 1e-4);
    }

    // ---- elementary tensor ops and the softmax-CE gradient
    {
        auto x = Tensor::make({3}, false);
        x->data = {-1.0, 0.0, 2.0};
        auto r = relu(x);
        s.check("relu clamps negatives",
                r->data[0] == 0.0 && r->data[1] == 0.0 && r->data[2] == 2.0);

        auto two = Tensor::make({1, 2, 1, 1}, false);
        two->data = {0.0, 0.0};
        auto sm = softmax_channels(two);
        s.near("softmax of zeros", sm->data[0], 0.5, 1e-12);

        auto v = Tensor::make({2}, true);
        v->data = {1.0, 2.0};
        backward(sum_all(mul(v, v)));
        s.check("grad of sum(x*x)",
                std::fabs(v->grad[0] - 2.0) < 1e-12 && std::fabs(v->grad[1] - 4.0) < 1e-12);

        auto logits = Tensor::make({1, 3, 1, 1}, true);
        logits->data = {0.2, -0.4, 1.1};
        LabelBatch y{1, 1, 1, {2}};
        auto z = one_hot(y, 3);
        auto q = softmax_channels(logits);
        backward(ce_loss(q, z, mask_pixel(1)));
        double worst = 0.0;
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, std::fabs(logits->grad[c] - (q->data[c] - z->data[c])));
        s.near("softmax-CE gradient is q minus onehot", worst, 0.0, 1e-9);
    }

    // ---- spatial and temporal masks
    {
        // half-plane boundary under a flat 3x3 kernel: majority side sees 2/3
        LabelBatch y{1, 4, 4, {}};
        y.v.assign(16, 0);
        for (int r = 0; r < 4; ++r)
            for (int c = 2; c < 4; ++c) y.v[r * 4 + c] = 1;
        auto z = one_hot(y, 2);
        std::vector<double> flat(9, 1.0 / 9.0);
        auto ms = spatial_mask(z, flat, 3);
        s.near("half-plane boundary, own class", ms->data[0 * 16 + 1], 2.0 / 3.0, 1e-9);
        s.near("half-plane boundary, other class", ms->data[1 * 16 + 1], 1.0 / 3.0, 1e-9);

        // three seasons class 0, one season class 1, spatially constant
        LabelBatch y0{1, 8, 8, std::vector<uint8_t>(64, 0)};
        LabelBatch y1{1, 8, 8, std::vector<uint8_t>(64, 1)};
        auto z0 = one_hot(y0, 2);
        std::vector<TensorPtr> seasons{z0, z0, z0, one_hot(y1, 2)};
        auto mt = temporal_mask(seasons, gaussian_kernel(5, 1.0), 5);
        s.near("temporal mask 3:1 split, class 0", mt->data[27], 0.75, 1e-9);
        s.near("temporal mask 3:1 split, class 1", mt->data[64 + 27], 0.25, 1e-9);
    }

    // ---- pca accumulated variance
    {
        std::vector<double> iso{1, 0, -1, 0, 0, 1, 0, -1};
        auto c1 = pca_accumulated_variance(iso, 4, 2);
        s.near("pca isotropic first component", c1.accumulated[0], 0.5, 1e-9);
        s.near("pca isotropic curve ends at 1", c1.accumulated[1], 1.0, 1e-9);
        std::vector<double> line;
        for (double t : {-1.0, 0.0, 1.0, 2.0})
            for (double b : {1.0, 2.0, 3.0}) line.push_back(t * b);
        auto c2 = pca_accumulated_variance(line, 4, 3);
        s.check("pca rank-1 curve is all ones",
                std::fabs(c2.accumulated[0] - 1.0) < 1e-9 &&
                    std::fabs(c2.accumulated[2] - 1.0) < 1e-9);
    }

    // ---- plateau scheduler traces
    {
        PlateauState st;
        st.lr = 1.0;
        st.patience = 3;
        st.factor = 0.5;
        st.rel_threshold = 1e-4;
        for (double v : {1.0, 0.9, 0.8, 0.7}) plateau_update(st, v);
        s.near("plateau: improving loss keeps lr", st.lr, 1.0, 0.0);
        PlateauState st2;
        st2.lr = 1.0;
        st2.patience = 3;
        plateau_update(st2, 0.7);  // first sighting sets the best
        for (int i = 0; i < 3; ++i) plateau_update(st2, 0.7);
        s.near("plateau: one halving after patience flat epochs", st2.lr, 0.5, 0.0);
        for (int i = 0; i < 3; ++i) plateau_update(st2, 0.7);
        s.near("plateau: second plateau halves again", st2.lr, 0.25, 0.0);
    }

    // ---- optimizer stationarity and histogram-kl identity
    {
        auto p = Tensor::make({1}, true);
        p->data[0] = 1.25;
        AdamState st;
        p->g()[0] = 0.0;
        adam_step({{"p", p}}, st, 1e-3);
        s.near("adam: zero gradient leaves parameter", p->data[0], 1.25, 0.0);

        Rng rng(5);
        std::vector<double> a(512);
        for (auto& v : a) v = rng.normal();
        s.near("hist_kl of a sample with itself", hist_kl(a, a), 0.0, 1e-12);
    }

    // ---- kernel dispatch equivalence
    {
        Rng rng(7);
        std::vector<double> a(97), b(97), o1(97), o2(97);
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.normal();
            b[i] = rng.normal();
        }
        kern::scalar::table.mul(a.data(), b.data(), o1.data(), (int64_t)a.size());
        kern::ops().mul(a.data(), b.data(), o2.data(), (int64_t)a.size());
        bool same = true;
        for (size_t i = 0; i < a.size(); ++i) same = same && o1[i] == o2[i];
        s.check(std::string("kernel mul matches scalar (") + kern::ops().name + ")", same);
        double d1 = kern::scalar::table.dot(a.data(), b.data(), (int64_t)a.size());
        double d2 = kern::ops().dot(a.data(), b.data(), (int64_t)a.size());
        s.near("kernel dot matches scalar", d2, d1, 1e-9 * std::fabs(d1) + 1e-12);
    }

    return s.results;
}

} // namespace nlss
