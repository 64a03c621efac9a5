#include "nlss/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace nlss {

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "single_modal1") return TrainMode::single_modal1;
    if (s == "single_modal2") return TrainMode::single_modal2;
    if (s == "midF") return TrainMode::midF;
    if (s == "lateF") return TrainMode::lateF;
    if (s == "cromss_midF") return TrainMode::cromss_midF;
    if (s == "cromss_lateF") return TrainMode::cromss_lateF;
    throw std::invalid_argument("unknown training mode: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::single_modal1: return "single_modal1";
        case TrainMode::single_modal2: return "single_modal2";
        case TrainMode::midF: return "midF";
        case TrainMode::lateF: return "lateF";
        case TrainMode::cromss_midF: return "cromss_midF";
        case TrainMode::cromss_lateF: return "cromss_lateF";
    }
    return "?";
}

bool mode_uses_selection(TrainMode m) {
    return m == TrainMode::cromss_midF || m == TrainMode::cromss_lateF;
}

bool mode_is_single(TrainMode m) {
    return m == TrainMode::single_modal1 || m == TrainMode::single_modal2;
}

FusionSpec fusion_for_mode(TrainMode m) {
    FusionSpec f;
    switch (m) {
        case TrainMode::single_modal1: f.mode = FusionMode::single; f.single_modality = 0; break;
        case TrainMode::single_modal2: f.mode = FusionMode::single; f.single_modality = 1; break;
        case TrainMode::midF:
        case TrainMode::cromss_midF: f.mode = FusionMode::middle; break;
        case TrainMode::lateF:
        case TrainMode::cromss_lateF: f.mode = FusionMode::late; break;
    }
    return f;
}

// ------------------------------------------------------------------ adam

void adam_step(const std::vector<NamedParam>& params, AdamState& st, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++st.t;
    double c1 = 1.0 - std::pow(b1, (double)st.t);
    double c2 = 1.0 - std::pow(b2, (double)st.t);
    for (const auto& p : params) {
        if (!p.t->requires_grad) continue;
        const int64_t n = p.t->numel();
        auto& m = st.m[p.name];
        auto& v = st.v[p.name];
        if (m.empty()) m.assign(n, 0.0);
        if (v.empty()) v.assign(n, 0.0);
        if ((int64_t)m.size() != n || (int64_t)v.size() != n)
            throw std::invalid_argument("optimizer: state shape mismatch for " + p.name);
        const bool has_grad = !p.t->grad.empty();
        for (int64_t i = 0; i < n; ++i) {
            double g = has_grad ? p.t->grad[i] : 0.0;
            if (!std::isfinite(g))
                throw std::runtime_error("optimizer: non-finite gradient in " + p.name);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            p.t->data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
        if (has_grad) p.t->zero_grad();
    }
}

// --------------------------------------------------------------- plateau

double plateau_update(PlateauState& st, double val_loss) {
    bool improved = !st.seen || val_loss < st.best * (1.0 - st.rel_threshold);
    if (improved) {
        st.best = val_loss;
        st.bad = 0;
        st.seen = true;
    } else if (++st.bad >= st.patience) {
        st.lr *= st.factor;
        st.bad = 0;
    }
    return st.lr;
}

// ---------------------------------------------------------------- runlog

void write_runlog_csv(const std::string& path, const RunLog& log) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "epoch,lr,alpha,gamma,train_total,train_seg1,train_seg2,train_kl12,train_kl21,"
         "val_total,val_seg1,val_seg2,val_kl12,val_kl21,val_miou,wall_s\n";
    char buf[400];
    for (const auto& r : log.rows) {
        std::snprintf(buf, sizeof buf,
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.epoch, r.lr, r.alpha, r.gamma, r.train_total, r.train_seg1,
                      r.train_seg2, r.train_kl12, r.train_kl21, r.val_total, r.val_seg1,
                      r.val_seg2, r.val_kl12, r.val_kl21, r.val_miou, r.wall_s);
        f << buf;
    }
    if (!f) throw std::runtime_error("short write on " + path);
}

// ------------------------------------------------------------- internals

namespace {

struct Batch {
    TensorPtr x1, x2;                 // normalized inputs (x2 null in single mode)
    LabelBatch y;                     // chosen-season labels
    TensorPtr ztarget;                // smoothed soft targets
};

struct LossTerms {
    double total = 0, seg1 = 0, seg2 = 0, kl12 = 0, kl21 = 0;
};

TensorPtr ones_mask(int64_t B, int64_t H, int64_t W) {
    auto t = Tensor::make({B, H, W}, false);
    std::fill(t->data.begin(), t->data.end(), 1.0);
    return t;
}

TensorPtr soft_targets(const std::vector<LabelBatch>& seasons, int tau_unused,
                       const LabelBatch& y, int C, const SmoothingParams& sp) {
    (void)tau_unused;
    auto z = one_hot(y, C);
    if (sp.beta == 0.0 && sp.mu == 0.0) return z;
    std::vector<TensorPtr> season_z;
    season_z.reserve(seasons.size());
    for (const auto& s : seasons) season_z.push_back(one_hot(s, C));
    return smooth_labels(z, season_z, sp);
}

// crops one training batch; draws: per sample, the augment sequence
Batch make_train_batch(const TrainSet& ds, const std::vector<int>& ids, size_t i0, size_t i1,
                       const TrainConfig& cfg, bool single, int single_mod, Rng& rng) {
    const SceneSpec& sp = ds.info.spec;
    const int B = (int)(i1 - i0), n = cfg.crop;
    const int64_t hw = (int64_t)n * n;
    Batch b;
    b.y.B = B;
    b.y.H = n;
    b.y.W = n;
    b.y.v.resize((size_t)B * hw);
    std::vector<LabelBatch> seasons(sp.seasons);
    for (auto& s : seasons) {
        s.B = B;
        s.H = n;
        s.W = n;
        s.v.resize((size_t)B * hw);
    }
    if (!single) {
        b.x1 = Tensor::make({B, sp.modality1.channels, n, n}, false);
        b.x2 = Tensor::make({B, sp.modality2.channels, n, n}, false);
    } else if (single_mod == 0) {
        b.x1 = Tensor::make({B, sp.modality1.channels, n, n}, false);
    } else {
        b.x2 = Tensor::make({B, sp.modality2.channels, n, n}, false);
    }

    for (int i = 0; i < B; ++i) {
        auto s = augment(ds.locations[ids[i0 + i]], sp, n, rng);
        for (int m = 0; m < 2; ++m) {
            TensorPtr dst = m == 0 ? b.x1 : b.x2;
            if (!dst) continue;
            int ch = m == 0 ? sp.modality1.channels : sp.modality2.channels;
            normalize_image(s.images[m], ch, hw, ds.info.stats[m]);
            std::copy(s.images[m].begin(), s.images[m].end(),
                      dst->data.begin() + (size_t)i * ch * hw);
        }
        std::copy(s.labels[s.tau].begin(), s.labels[s.tau].end(),
                  b.y.v.begin() + (size_t)i * hw);
        for (int t = 0; t < sp.seasons; ++t)
            std::copy(s.labels[t].begin(), s.labels[t].end(),
                      seasons[t].v.begin() + (size_t)i * hw);
    }
    b.ztarget = soft_targets(seasons, 0, b.y, sp.C, cfg.smoothing);
    return b;
}

// full season-0 tile of one location, as a batch of one
Batch make_tile_batch(const TrainSet& ds, int id, const TrainConfig& cfg, bool single,
                      int single_mod) {
    const SceneSpec& sp = ds.info.spec;
    const int64_t hw = (int64_t)sp.H * sp.W;
    const TrainLocation& loc = ds.locations[id];
    Batch b;
    b.y.B = 1;
    b.y.H = sp.H;
    b.y.W = sp.W;
    b.y.v = loc.noisy_labels[0];
    std::vector<LabelBatch> seasons(sp.seasons);
    for (int t = 0; t < sp.seasons; ++t)
        seasons[t] = LabelBatch{1, sp.H, sp.W, loc.noisy_labels[t]};
    for (int m = 0; m < 2; ++m) {
        if (single && m != single_mod) continue;
        int ch = m == 0 ? sp.modality1.channels : sp.modality2.channels;
        auto img = loc.images[0][m];
        normalize_image(img, ch, hw, ds.info.stats[m]);
        auto x = Tensor::make({1, ch, sp.H, sp.W}, false);
        x->data = img;
        (m == 0 ? b.x1 : b.x2) = x;
    }
    return b;
}

struct StepMasks {
    TensorPtr wl1, wl2, we1, we2;
};

StepMasks selection_masks(const TensorPtr& Q1, const TensorPtr& Q2, const LabelBatch& y,
                          double alpha, double gamma, SelectFlags* flags,
                          const std::string& dump_dir, int step) {
    auto P1 = detach(Q1), P2 = detach(Q2);
    auto fl1 = label_confidence(P1, y), fl2 = label_confidence(P2, y);
    auto fe1 = entity_confidence(P1), fe2 = entity_confidence(P2);
    auto fpl1 = enhance(fl1, fl2), fpl2 = enhance(fl2, fl1);
    auto fpe1 = enhance(fe1, fe2), fpe2 = enhance(fe2, fe1);
    StepMasks m;
    m.wl1 = threshold_label(fpl1, y, alpha, flags);
    m.wl2 = threshold_label(fpl2, y, alpha, flags);
    m.we1 = weight_entity(fpe1, gamma);
    m.we2 = weight_entity(fpe2, gamma);
    if (!dump_dir.empty()) {
        dump_masks(dump_dir, step, 0, fl1, fe1, fpl1, fpe1, m.wl1, m.we1);
        dump_masks(dump_dir, step, 1, fl2, fe2, fpl2, fpe2, m.wl2, m.we2);
    }
    return m;
}

LossTerms run_losses(const ModelPair& model, const Batch& b, const TrainConfig& cfg,
                     double alpha, double gamma, bool training, bool frozen_encoder,
                     bool selection, const std::string& dump_dir, int step,
                     TensorPtr* total_out) {
    const bool single = mode_is_single(cfg.mode);
    const int enc_train = frozen_encoder ? 0 : -1;
    LossTerms t;
    if (single) {
        int d = fusion_for_mode(cfg.mode).single_modality;
        const TensorPtr& x = d == 0 ? b.x1 : b.x2;
        auto Q = forward(model, d, x, training, enc_train);
        auto ones = ones_mask(b.y.B, b.y.H, b.y.W);
        auto loss = seg_loss(Q, b.ztarget, ones);
        t.total = loss->data[0];
        (d == 0 ? t.seg1 : t.seg2) = loss->data[0];
        if (total_out) *total_out = loss;
        return t;
    }
    auto Q1 = forward(model, 0, b.x1, training, enc_train);
    auto Q2 = forward(model, 1, b.x2, training, enc_train);
    TensorPtr wl1, wl2, we1, we2;
    if (selection) {
        SelectFlags sf;
        auto m = selection_masks(Q1, Q2, b.y, alpha, gamma, &sf, dump_dir, step);
        wl1 = m.wl1;
        wl2 = m.wl2;
        we1 = m.we1;
        we2 = m.we2;
    } else {
        wl1 = wl2 = we1 = we2 = ones_mask(b.y.B, b.y.H, b.y.W);
    }
    auto parts = total_loss(Q1, Q2, b.ztarget, wl1, wl2, we1, we2, cfg.consistency_weight);
    t.total = parts.total->data[0];
    t.seg1 = parts.seg1->data[0];
    t.seg2 = parts.seg2->data[0];
    t.kl12 = parts.kl12->data[0];
    t.kl21 = parts.kl21->data[0];
    if (total_out) *total_out = parts.total;
    return t;
}

void accumulate_terms(LossTerms& acc, const LossTerms& t) {
    acc.total += t.total;
    acc.seg1 += t.seg1;
    acc.seg2 += t.seg2;
    acc.kl12 += t.kl12;
    acc.kl21 += t.kl21;
}

void scale_terms(LossTerms& acc, double k) {
    acc.total *= k;
    acc.seg1 *= k;
    acc.seg2 *= k;
    acc.kl12 *= k;
    acc.kl21 *= k;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

TrainerState pack_trainer(int epoch, const PlateauState& pl, const AdamState& ad) {
    TrainerState ts;
    ts.present = true;
    ts.keys = {{"epoch", std::to_string(epoch)},
               {"lr", fmt17(pl.lr)},
               {"best", fmt17(pl.best)},
               {"bad", std::to_string(pl.bad)},
               {"seen", pl.seen ? "1" : "0"},
               {"adam_t", std::to_string(ad.t)}};
    for (const auto& [k, v] : ad.m) ts.tensors.push_back({"adam.m." + k, v});
    for (const auto& [k, v] : ad.v) ts.tensors.push_back({"adam.v." + k, v});
    return ts;
}

void unpack_trainer(const TrainerState& ts, int& epoch, PlateauState& pl, AdamState& ad) {
    auto key = [&](const std::string& k) -> std::string {
        for (const auto& [a, b] : ts.keys)
            if (a == k) return b;
        throw std::runtime_error("checkpoint trainer state missing key " + k);
    };
    epoch = std::stoi(key("epoch"));
    pl.lr = std::stod(key("lr"));
    pl.best = std::stod(key("best"));
    pl.bad = std::stoi(key("bad"));
    pl.seen = key("seen") == "1";
    ad.t = std::stoll(key("adam_t"));
    for (const auto& [name, v] : ts.tensors) {
        if (name.rfind("adam.m.", 0) == 0) ad.m[name.substr(7)] = v;
        else if (name.rfind("adam.v.", 0) == 0) ad.v[name.substr(7)] = v;
    }
}

// shared by pretrain and transfer
RunLog train_loop(const TrainSet& ds, const TrainConfig& cfg, ModelPair& model,
                  bool frozen_encoder) {
    const SceneSpec& sp = ds.info.spec;
    const bool single = mode_is_single(cfg.mode);
    const bool selection = mode_uses_selection(cfg.mode);
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (ds.info.train_ids.empty() || ds.info.val_ids.empty())
        throw std::invalid_argument("train: dataset has an empty split");

    auto params = model.parameters();
    AdamState adam;
    PlateauState plateau;
    plateau.lr = cfg.lr;
    plateau.patience = cfg.plateau_patience;
    plateau.factor = cfg.plateau_factor;
    plateau.rel_threshold = cfg.plateau_rel_threshold;
    int epoch0 = 0;

    if (!cfg.resume_from.empty()) {
        TrainerState ts;
        ModelPair loaded = load_checkpoint(cfg.resume_from, &ts);
        if (!ts.present)
            throw std::invalid_argument("resume: checkpoint lacks trainer state: " + cfg.resume_from);
        if (loaded.fusion.mode != model.fusion.mode ||
            loaded.fusion.single_modality != model.fusion.single_modality)
            throw std::invalid_argument("resume: checkpoint mode differs from configuration");
        model = std::move(loaded);
        params = model.parameters();
        int done = 0;
        unpack_trainer(ts, done, plateau, adam);
        epoch0 = done + 1;
    }

    std::string ckpt_dir;
    if (!cfg.out_dir.empty()) {
        ckpt_dir = cfg.out_dir + "/checkpoints";
        std::filesystem::create_directories(ckpt_dir);
    }

    RunLog log;
    const int steps = (int)((ds.info.train_ids.size() + cfg.batch - 1) / cfg.batch);

    for (int epoch = epoch0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        auto [alpha, gamma] = selection_schedule(epoch, cfg.schedule);

        // the visit order must be a function of the epoch alone, so a
        // resumed run replays exactly the batches the full run saw
        std::vector<int> order = ds.info.train_ids;
        Rng erng(derive_seed(cfg.seed, 10000 + (uint64_t)epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[erng.uniform_int((int64_t)i)]);

        LossTerms train_acc;
        for (int s = 0; s < steps; ++s) {
            size_t i0 = (size_t)s * cfg.batch;
            size_t i1 = std::min(order.size(), i0 + cfg.batch);
            auto batch = make_train_batch(ds, order, i0, i1, cfg,
                                          single, fusion_for_mode(cfg.mode).single_modality,
                                          erng);
            std::string dump_dir;
            if (cfg.dump_masks && selection && !cfg.out_dir.empty() && s == 0)
                dump_dir = cfg.out_dir + "/masks";
            TensorPtr total;
            LossTerms t = run_losses(model, batch, cfg, alpha, gamma, true, frozen_encoder,
                                     selection, dump_dir, epoch * steps + s, &total);
            if (!std::isfinite(t.total)) {
                if (!ckpt_dir.empty()) save_checkpoint(ckpt_dir + "/diverged.nlck", model);
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(s));
            }
            backward(total);
            try {
                adam_step(params, adam, plateau.lr);
            } catch (const std::exception&) {
                // normalization can launder poisoned activations into a
                // finite loss whose backward chain is still non-finite;
                // leave the same post-mortem snapshot before aborting
                if (!ckpt_dir.empty()) save_checkpoint(ckpt_dir + "/diverged.nlck", model);
                throw;
            }
            accumulate_terms(train_acc, t);
        }
        scale_terms(train_acc, 1.0 / steps);

        LossTerms val_acc;
        {
            NoGradGuard ng;
            for (int id : ds.info.val_ids) {
                auto tile = make_tile_batch(ds, id, cfg, single,
                                            fusion_for_mode(cfg.mode).single_modality);
                tile.ztarget = soft_targets({}, 0, tile.y, sp.C, SmoothingParams{0, 0, 1, 1});
                if (cfg.smoothing.beta != 0.0 || cfg.smoothing.mu != 0.0) {
                    std::vector<LabelBatch> seasons(sp.seasons);
                    for (int t = 0; t < sp.seasons; ++t)
                        seasons[t] = LabelBatch{1, sp.H, sp.W,
                                                ds.locations[id].noisy_labels[t]};
                    tile.ztarget = soft_targets(seasons, 0, tile.y, sp.C, cfg.smoothing);
                }
                LossTerms t = run_losses(model, tile, cfg, alpha, gamma, false, frozen_encoder,
                                         false, "", 0, nullptr);
                accumulate_terms(val_acc, t);
            }
        }
        scale_terms(val_acc, 1.0 / (double)ds.info.val_ids.size());

        RunLogRow row;
        row.epoch = epoch;
        row.lr = plateau.lr;
        row.alpha = alpha;
        row.gamma = gamma;
        row.train_total = train_acc.total;
        row.train_seg1 = train_acc.seg1;
        row.train_seg2 = train_acc.seg2;
        row.train_kl12 = train_acc.kl12;
        row.train_kl21 = train_acc.kl21;
        row.val_total = val_acc.total;
        row.val_seg1 = val_acc.seg1;
        row.val_seg2 = val_acc.seg2;
        row.val_kl12 = val_acc.kl12;
        row.val_kl21 = val_acc.kl21;

        bool last = epoch == cfg.epochs - 1;
        if (last || (cfg.miou_every > 0 && (epoch + 1) % cfg.miou_every == 0)) {
            // snapshot against the validation annotations (season 0); clean
            // maps stay out of reach of the training path
            std::vector<std::vector<uint8_t>> ref(ds.locations.size());
            for (int id : ds.info.val_ids) ref[id] = ds.locations[id].noisy_labels[0];
            row.val_miou = evaluate_model(model, ds, ref, ds.info.val_ids, 2).miou;
        }

        plateau_update(plateau, val_acc.total);
        row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.rows.push_back(row);

        if (!cfg.out_dir.empty()) {
            write_runlog_csv(cfg.out_dir + "/runlog.csv", log);
            bool ckpt = last || (cfg.checkpoint_every > 0 &&
                                 (epoch + 1) % cfg.checkpoint_every == 0);
            if (ckpt) {
                char name[48];
                std::snprintf(name, sizeof name, "/epoch_%03d.nlck", epoch);
                auto ts = pack_trainer(epoch, plateau, adam);
                save_checkpoint(ckpt_dir + name, model, &ts);
                if (last) save_checkpoint(ckpt_dir + "/final.nlck", model, &ts);
            }
        }
    }
    return log;
}

} // namespace

PretrainResult pretrain(const TrainSet& ds, const TrainConfig& cfg) {
    const SceneSpec& sp = ds.info.spec;
    MiniUNetConfig mc;
    mc.in_channels[0] = sp.modality1.channels;
    mc.in_channels[1] = sp.modality2.channels;
    mc.base_width = cfg.base_width;
    mc.depth = cfg.depth;
    mc.num_classes = sp.C;
    PretrainResult r{build_model(mc, fusion_for_mode(cfg.mode), derive_seed(cfg.seed, 1)), {}};
    r.log = train_loop(ds, cfg, r.model, false);
    return r;
}

TransferResult transfer(const TrainSet& downstream, const TransferConfig& tc) {
    if (!mode_is_single(tc.train.mode))
        throw std::invalid_argument("transfer: mode must be single-modal");
    if (tc.source_modality != 0 && tc.source_modality != 1)
        throw std::invalid_argument("transfer: source modality must be 0 or 1");
    const SceneSpec& sp = downstream.info.spec;

    TrainConfig cfg = tc.train;
    cfg.smoothing = SmoothingParams{0.0, 0.0, 1, 1.0};  // plain targets downstream
    FusionSpec fusion = fusion_for_mode(cfg.mode);
    if (fusion.single_modality != tc.source_modality)
        throw std::invalid_argument("transfer: mode modality disagrees with source modality");

    MiniUNetConfig mc;
    mc.in_channels[0] = sp.modality1.channels;
    mc.in_channels[1] = sp.modality2.channels;
    mc.base_width = cfg.base_width;
    mc.depth = cfg.depth;
    mc.num_classes = sp.C;
    TransferResult r{build_model(mc, fusion, derive_seed(cfg.seed, 2)), {}};

    if (!tc.random_init) {
        ModelPair pre = load_checkpoint(tc.pretrained_path);
        int src = pre.net_index(tc.source_modality);
        const UNet& from = pre.nets[src];
        UNet& to = r.model.nets[0];
        if (pre.cfg.in_channels[tc.source_modality] != mc.in_channels[tc.source_modality] ||
            pre.cfg.base_width != mc.base_width || pre.cfg.depth != mc.depth ||
            from.enc.size() != to.enc.size())
            throw std::invalid_argument("transfer: pretrained encoder does not fit this input");
        for (size_t i = 0; i < from.enc.size(); ++i) {
            if (from.enc[i].w->shape != to.enc[i].w->shape)
                throw std::invalid_argument("transfer: pretrained encoder does not fit this input");
            to.enc[i].w->data = from.enc[i].w->data;
            to.enc[i].b->data = from.enc[i].b->data;
            if (from.enc[i].gamma) {
                to.enc[i].gamma->data = from.enc[i].gamma->data;
                to.enc[i].beta->data = from.enc[i].beta->data;
                *to.enc[i].stats = *from.enc[i].stats;
            }
        }
    }

    if (tc.frozen) {
        for (auto& blk : r.model.nets[0].enc) {
            blk.w->requires_grad = false;
            blk.b->requires_grad = false;
            if (blk.gamma) {
                blk.gamma->requires_grad = false;
                blk.beta->requires_grad = false;
            }
        }
    }

    r.log = train_loop(downstream, cfg, r.model, tc.frozen);
    return r;
}

// ------------------------------------------------------------ evaluation

std::vector<uint8_t> predict_labels(const ModelPair& m, const TrainSet& ds, int id, int scope) {
    const SceneSpec& sp = ds.info.spec;
    const int64_t hw = (int64_t)sp.H * sp.W;
    NoGradGuard ng;
    const bool single = m.fusion.mode == FusionMode::single;
    auto input = [&](int mod) {
        int ch = mod == 0 ? sp.modality1.channels : sp.modality2.channels;
        auto img = ds.locations[id].images[0][mod];
        normalize_image(img, ch, hw, ds.info.stats[mod]);
        auto x = Tensor::make({1, ch, sp.H, sp.W}, false);
        x->data = img;
        return x;
    };
    TensorPtr q;
    if (single) {
        int d = m.fusion.single_modality;
        if (scope != 2 && scope != d)
            throw std::invalid_argument("predict: modality not present in single-modal pair");
        q = forward(m, d, input(d), false);
    } else if (scope == 0 || scope == 1) {
        q = forward(m, scope, input(scope), false);
    } else if (scope == 2) {
        auto q1 = forward(m, 0, input(0), false);
        auto q2 = forward(m, 1, input(1), false);
        q = mul_k(add(q1, q2), 0.5);
    } else {
        throw std::invalid_argument("predict: scope must be 0, 1 or 2");
    }
    std::vector<uint8_t> out((size_t)hw);
    const int C = sp.C;
    for (int64_t i = 0; i < hw; ++i) {
        int arg = 0;
        double best = q->data[i];
        for (int c = 1; c < C; ++c) {
            double v = q->data[c * hw + i];
            if (v > best) {
                best = v;
                arg = c;
            }
        }
        out[i] = (uint8_t)arg;
    }
    return out;
}

MetricsReport evaluate_model(const ModelPair& m, const TrainSet& ds,
                             const std::vector<std::vector<uint8_t>>& reference,
                             const std::vector<int>& ids, int scope) {
    ConfusionMatrix cm;
    cm.C = ds.info.spec.C;
    cm.counts.assign((size_t)cm.C * cm.C, 0);
    for (int id : ids) {
        if (id < 0 || id >= (int)reference.size() || reference[id].empty())
            throw std::invalid_argument("evaluate: no reference labels for location " +
                                        std::to_string(id));
        accumulate(cm, predict_labels(m, ds, id, scope), reference[id]);
    }
    return metrics(cm);
}

} // namespace nlss
