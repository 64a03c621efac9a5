// Training loop: Adam and plateau scheduling, run logging, end-to-end tiny
// pretrains in every mode, bitwise determinism and resume, the late-fusion
// symmetry property, gradient routing through the consistency terms, the
// transfer protocol, and divergence handling.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "nlss/select.hpp"
#include "nlss/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nlss;

namespace {

SceneSpec tiny_scene(uint64_t seed = 5) {
    SceneSpec s;
    s.num_locations = 8;
    s.H = 16;
    s.W = 16;
    s.C = 3;
    s.seasons = 2;
    s.noise = {NoiseKind::mixed, 0.3};
    s.val_fraction = 0.25;
    s.seed = seed;
    return s;
}

TrainConfig tiny_cfg(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    c.lr = 5e-3;
    c.batch = 4;
    c.epochs = 2;
    c.crop = 8;
    c.base_width = 4;
    c.depth = 2;
    c.schedule = {0.5, 4};
    c.checkpoint_every = 0;
    return c;
}

// in-memory two-modality set with identical images in both modalities
TrainSet mirrored_set(bool poison = false) {
    TrainSet ds;
    ds.info.spec = tiny_scene();
    ds.info.spec.noise.rate = 0.0;
    ds.info.train_ids = {0, 1, 2, 3, 4, 5};
    ds.info.val_ids = {6, 7};
    for (int m = 0; m < 2; ++m) ds.info.stats[m] = {{0.0, 0.0}, {1.0, 1.0}};
    Rng rg(404);
    for (int id = 0; id < 8; ++id) {
        TrainLocation loc;
        loc.id = id;
        for (int t = 0; t < 2; ++t) {
            std::vector<double> img(2 * 16 * 16);
            for (auto& v : img) v = rg.normal();
            if (poison && id == 0)
                for (auto& v : img) v = std::nan("");  // any crop of this tile trips the guard
            loc.images.push_back({img, img});
            std::vector<uint8_t> lab(16 * 16);
            for (auto& l : lab) l = (uint8_t)rg.uniform_int(3);
            loc.noisy_labels.push_back(lab);
        }
        ds.locations.push_back(std::move(loc));
    }
    return ds;
}

bool same_loss_columns(const RunLogRow& a, const RunLogRow& b) {
    return a.epoch == b.epoch && a.lr == b.lr && a.alpha == b.alpha && a.gamma == b.gamma &&
           a.train_total == b.train_total && a.train_seg1 == b.train_seg1 &&
           a.train_seg2 == b.train_seg2 && a.train_kl12 == b.train_kl12 &&
           a.train_kl21 == b.train_kl21 && a.val_total == b.val_total &&
           a.val_seg1 == b.val_seg1 && a.val_seg2 == b.val_seg2 && a.val_kl12 == b.val_kl12 &&
           a.val_kl21 == b.val_kl21 && a.val_miou == b.val_miou;
}

} // namespace

TEST_CASE("adam: first-step oracle, zero-gradient stationarity, determinism") {
    auto p = Tensor::make({1}, true);
    p->data[0] = 0.0;
    p->g()[0] = 1.0;
    AdamState st;
    adam_step({{"p", p}}, st, 1e-3);
    CHECK(p->data[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(p->grad[0] == 0.0);  // consumed

    auto q = Tensor::make({2}, true);
    q->data = {1.25, -3.0};
    AdamState st2;
    adam_step({{"q", q}}, st2, 1e-2);  // zero grads: no movement
    CHECK(q->data[0] == 1.25);
    CHECK(q->data[1] == -3.0);

    // two parameters fed the same gradient sequence move identically
    auto a = Tensor::make({1}, true);
    auto b = Tensor::make({1}, true);
    a->data[0] = b->data[0] = 0.7;
    AdamState sa, sb;
    Rng rg(11);
    for (int i = 0; i < 20; ++i) {
        double g = rg.normal();
        a->g()[0] = g;
        b->g()[0] = g;
        adam_step({{"x", a}}, sa, 3e-3);
        adam_step({{"x", b}}, sb, 3e-3);
    }
    CHECK(a->data[0] == b->data[0]);

    auto n = Tensor::make({1}, true);
    n->g()[0] = std::nan("");
    AdamState sn;
    CHECK_THROWS_AS(adam_step({{"n", n}}, sn, 1e-3), std::runtime_error);
}

TEST_CASE("plateau scheduler traces") {
    PlateauState st;
    st.lr = 1.0;
    st.patience = 3;
    // steadily improving validation keeps the rate
    for (double v : {1.0, 0.9, 0.8, 0.7}) plateau_update(st, v);
    CHECK(st.lr == 1.0);

    PlateauState st2;
    st2.lr = 1.0;
    st2.patience = 3;
    plateau_update(st2, 0.7);  // first sighting sets the best
    for (int i = 0; i < 3; ++i) plateau_update(st2, 0.7);
    CHECK(st2.lr == 0.5);
    for (int i = 0; i < 3; ++i) plateau_update(st2, 0.7);
    CHECK(st2.lr == 0.25);

    // exactly best*(1 - rel) is not strict improvement
    PlateauState st3;
    st3.lr = 1.0;
    st3.patience = 1;
    st3.rel_threshold = 1e-2;
    plateau_update(st3, 1.0);
    plateau_update(st3, 0.99);
    CHECK(st3.lr == 0.5);

    // a clear improvement resets the counter
    PlateauState st4;
    st4.lr = 1.0;
    st4.patience = 2;
    plateau_update(st4, 1.0);
    plateau_update(st4, 1.0);
    plateau_update(st4, 0.5);
    plateau_update(st4, 0.5);
    CHECK(st4.lr == 1.0);
}

TEST_CASE("run log csv layout") {
    tst::TempDir td;
    RunLog log;
    RunLogRow r;
    r.epoch = 3;
    r.lr = 0.005;
    r.alpha = 0.75;
    r.gamma = 0.25;
    r.train_total = 1.0 / 3.0;
    r.val_miou = -1.0;
    r.wall_s = 0.125;
    log.rows.push_back(r);
    auto path = td.sub("runlog.csv");
    write_runlog_csv(path, log);

    std::ifstream f(path);
    std::string header, line;
    std::getline(f, header);
    CHECK(header ==
          "epoch,lr,alpha,gamma,train_total,train_seg1,train_seg2,train_kl12,train_kl21,"
          "val_total,val_seg1,val_seg2,val_kl12,val_kl21,val_miou,wall_s");
    std::getline(f, line);
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 16);
    CHECK(cells[0] == "3");
    CHECK(std::stod(cells[4]) == 1.0 / 3.0);  // %.17g survives the round trip
    CHECK(std::stod(cells[14]) == -1.0);
}

TEST_CASE("every training mode runs and logs finite losses") {
    tst::TempDir td;
    generate_dataset(tiny_scene(), td.str(), 1);
    auto ds = load_dataset(td.str());

    for (TrainMode mode : {TrainMode::single_modal1, TrainMode::single_modal2, TrainMode::midF,
                           TrainMode::lateF, TrainMode::cromss_midF, TrainMode::cromss_lateF}) {
        CAPTURE(to_string(mode));
        auto res = pretrain(ds, tiny_cfg(mode));
        REQUIRE(res.log.rows.size() == 2);
        for (const auto& row : res.log.rows) {
            CHECK(std::isfinite(row.train_total));
            CHECK(std::isfinite(row.val_total));
            CHECK(row.train_total > 0.0);
            if (mode_is_single(mode)) {
                CHECK(row.train_kl12 == 0.0);
                CHECK(row.train_kl21 == 0.0);
            } else {
                CHECK(row.train_kl12 >= 0.0);
                CHECK(row.train_kl21 >= 0.0);
            }
        }
        // metric snapshot lands on the final epoch only (miou_every = 0)
        CHECK(res.log.rows[0].val_miou == -1.0);
        CHECK(res.log.rows[1].val_miou >= 0.0);
        CHECK(res.log.rows[1].val_miou <= 1.0);

        // second epoch sits on the schedule ramp
        CHECK(res.log.rows[0].alpha == 1.0);
        CHECK(res.log.rows[0].gamma == 0.0);
        CHECK(res.log.rows[1].alpha == doctest::Approx(std::pow(0.5, 0.25)).epsilon(1e-12));
        CHECK(res.log.rows[1].gamma == 0.25);
    }
}

TEST_CASE("identical configuration reproduces loss columns and checkpoints bitwise") {
    tst::TempDir data, runa, runb;
    generate_dataset(tiny_scene(), data.str(), 1);
    auto ds = load_dataset(data.str());

    auto cfg = tiny_cfg(TrainMode::cromss_midF);
    cfg.checkpoint_every = 1;
    cfg.out_dir = runa.str();
    auto ra = pretrain(ds, cfg);
    cfg.out_dir = runb.str();
    auto rb = pretrain(ds, cfg);

    REQUIRE(ra.log.rows.size() == rb.log.rows.size());
    for (size_t i = 0; i < ra.log.rows.size(); ++i)
        CHECK(same_loss_columns(ra.log.rows[i], rb.log.rows[i]));
    CHECK(tst::same_bytes(runa.sub("checkpoints/final.nlck"), runb.sub("checkpoints/final.nlck")));

    auto cfg2 = cfg;
    cfg2.seed = 99;
    cfg2.out_dir = "";
    auto rc = pretrain(ds, cfg2);
    CHECK(rc.log.rows[1].train_total != ra.log.rows[1].train_total);
}

TEST_CASE("resuming from a checkpoint matches the uninterrupted run") {
    tst::TempDir data, full, half, cont;
    generate_dataset(tiny_scene(), data.str(), 1);
    auto ds = load_dataset(data.str());

    auto cfg = tiny_cfg(TrainMode::cromss_midF);
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    cfg.out_dir = full.str();
    auto rf = pretrain(ds, cfg);

    auto c2 = cfg;
    c2.epochs = 2;
    c2.out_dir = half.str();
    pretrain(ds, c2);

    auto c3 = cfg;
    c3.out_dir = cont.str();
    c3.resume_from = half.sub("checkpoints/epoch_001.nlck");
    auto rr = pretrain(ds, c3);

    REQUIRE(rr.log.rows.size() == 2);  // epochs 2 and 3 only
    CHECK(same_loss_columns(rr.log.rows[0], rf.log.rows[2]));
    CHECK(same_loss_columns(rr.log.rows[1], rf.log.rows[3]));
    CHECK(tst::same_bytes(full.sub("checkpoints/final.nlck"), cont.sub("checkpoints/final.nlck")));

    auto bad = cfg;
    bad.mode = TrainMode::cromss_lateF;
    bad.resume_from = half.sub("checkpoints/epoch_001.nlck");
    CHECK_THROWS_AS(pretrain(ds, bad), std::invalid_argument);
}

TEST_CASE("late fusion with mirrored modalities stays exactly symmetric") {
    auto ds = mirrored_set();
    auto cfg = tiny_cfg(TrainMode::lateF);
    cfg.smoothing = {0.0, 0.0, 1, 1.0};
    cfg.epochs = 3;
    auto res = pretrain(ds, cfg);
    for (const auto& row : res.log.rows) {
        CHECK(row.train_seg1 == row.train_seg2);
        CHECK(row.train_kl12 == row.train_kl21);
        CHECK(row.val_seg1 == row.val_seg2);
    }
}

TEST_CASE("consistency gradients flow into the student only") {
    MiniUNetConfig mc;
    mc.in_channels[0] = 2;
    mc.in_channels[1] = 2;
    mc.base_width = 4;
    mc.depth = 2;
    mc.num_classes = 3;
    auto W = Tensor::make({1, 16, 16}, false);
    for (auto& v : W->data) v = 1.0;

    // late fusion: teaching modality 2 from modality 1 leaves every modality-1
    // parameter untouched
    auto late = build_model(mc, {FusionMode::late, 0}, 3);
    auto q1 = forward(late, 0, tst::randn({1, 2, 16, 16}, 21), true);
    auto q2 = forward(late, 1, tst::randn({1, 2, 16, 16}, 22), true);
    backward(kl_consistency(detach(q1), q2, W));
    for (const auto& p : late.parameters()) {
        double gsum = 0.0;
        for (double g : p.t->grad) gsum += std::fabs(g);
        if (p.name.rfind("m0.", 0) == 0)
            CHECK(gsum == 0.0);
        else
            CHECK(gsum > 0.0);
    }

    // middle fusion: the shared decoder still learns from the same term
    auto mid = build_model(mc, {FusionMode::middle, 0}, 3);
    auto m1 = forward(mid, 0, tst::randn({1, 2, 16, 16}, 23), true);
    auto m2 = forward(mid, 1, tst::randn({1, 2, 16, 16}, 24), true);
    backward(kl_consistency(detach(m1), m2, W));
    for (const auto& p : mid.parameters()) {
        double gsum = 0.0;
        for (double g : p.t->grad) gsum += std::fabs(g);
        if (p.name.rfind("m0.", 0) == 0)
            CHECK(gsum == 0.0);
        else
            CHECK(gsum > 0.0);  // m1 encoder and the shared decoder
    }
}

TEST_CASE("confidence masks never join the autograd graph") {
    auto x = tst::randn({1, 3, 4, 4}, 31, true);
    auto P = detach(softmax_channels(x));
    LabelBatch y{1, 4, 4, std::vector<uint8_t>(16, 1)};
    auto fl = label_confidence(P, y);
    auto fe = entity_confidence(P);
    auto e = enhance(fl, label_confidence(P, y));
    auto wl = threshold_label(e, y, 0.5);
    auto we = weight_entity(enhance(fe, entity_confidence(P)), 0.5);
    for (const auto& t : {fl.t, fe.t, e.t, wl, we}) {
        CHECK_FALSE(t->requires_grad);
        CHECK_FALSE((bool)t->backward_fn);
        CHECK(t->prev.empty());
    }
}

TEST_CASE("transfer loads, freezes, and fine-tunes the pretrained encoder") {
    tst::TempDir src, dst, ck;
    generate_dataset(tiny_scene(5), src.str(), 1);
    auto up = load_dataset(src.str());
    auto spec2 = tiny_scene(9);
    spec2.C = 4;  // downstream task has its own class alphabet
    spec2.noise.rate = 0.0;
    generate_dataset(spec2, dst.str(), 1);
    auto down = load_dataset(dst.str());

    auto pre = pretrain(up, tiny_cfg(TrainMode::cromss_midF));
    auto ckpt = ck.sub("pre.nlck");
    save_checkpoint(ckpt, pre.model);
    int srcnet = pre.model.net_index(1);

    TransferConfig tc;
    tc.train = tiny_cfg(TrainMode::single_modal2);
    tc.source_modality = 1;
    tc.frozen = true;
    tc.pretrained_path = ckpt;

    auto fr = transfer(down, tc);
    REQUIRE(fr.log.rows.size() == 2);
    CHECK(fr.model.nets[0].head.w->shape[0] == 4);
    auto& pe = pre.model.nets[srcnet];
    for (size_t i = 0; i < pe.enc.size(); ++i) {
        CHECK(fr.model.nets[0].enc[i].w->data == pe.enc[i].w->data);
        CHECK(fr.model.nets[0].enc[i].stats->mean == pe.enc[i].stats->mean);
    }

    auto tf = tc;
    tf.frozen = false;
    auto ft = transfer(down, tf);
    bool moved = false;
    for (size_t i = 0; i < pe.enc.size(); ++i)
        moved = moved || ft.model.nets[0].enc[i].w->data != pe.enc[i].w->data;
    CHECK(moved);

    auto ri = tc;
    ri.random_init = true;
    ri.pretrained_path = "";
    auto rr = transfer(down, ri);
    bool differs = false;
    for (size_t i = 0; i < pe.enc.size(); ++i)
        differs = differs || rr.model.nets[0].enc[i].w->data != pe.enc[i].w->data;
    CHECK(differs);

    auto bad = tc;
    bad.source_modality = 0;  // disagrees with single_modal2
    CHECK_THROWS_AS(transfer(down, bad), std::invalid_argument);
    auto multi = tc;
    multi.train.mode = TrainMode::midF;
    CHECK_THROWS_AS(transfer(down, multi), std::invalid_argument);
}

TEST_CASE("prediction and evaluation surface") {
    tst::TempDir td;
    generate_dataset(tiny_scene(), td.str(), 1);
    auto ds = load_dataset(td.str());
    auto res = pretrain(ds, tiny_cfg(TrainMode::midF));
    auto ev = load_clean_labels(td.str());

    auto lab = predict_labels(res.model, ds, ds.info.val_ids[0], 2);
    CHECK(lab.size() == 16 * 16);
    for (uint8_t v : lab) CHECK(v < 3);
    CHECK(predict_labels(res.model, ds, ds.info.val_ids[0], 2) == lab);

    auto rep = evaluate_model(res.model, ds, ev.clean, ds.info.val_ids, 2);
    CHECK(rep.miou >= 0.0);
    CHECK(rep.miou <= 1.0);
    CHECK(rep.recall.size() == 3);

    auto single = pretrain(ds, tiny_cfg(TrainMode::single_modal1));
    CHECK_THROWS_AS(predict_labels(single.model, ds, 0, 1), std::invalid_argument);
    CHECK_NOTHROW(predict_labels(single.model, ds, 0, 0));
}

TEST_CASE("non-finite losses abort and leave a post-mortem checkpoint") {
    auto ds = mirrored_set(true);
    auto cfg = tiny_cfg(TrainMode::midF);
    tst::TempDir out;
    cfg.out_dir = out.str();
    CHECK_THROWS_AS(pretrain(ds, cfg), std::runtime_error);
    CHECK(std::filesystem::exists(out.sub("checkpoints/diverged.nlck")));
}
