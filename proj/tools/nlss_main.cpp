// nlss: command-line front end tying the library together. Subcommands:
//   generate   synthesize a two-modality dataset with label noise
//   pretrain   co-train (or single-modal train) on noisy labels
//   transfer   fine-tune / linear-probe one modality from a checkpoint
//   evaluate   score a checkpoint on the held-out split's clean labels
//   analyze    weight/feature divergence and PCA variance reports
//   selftest   built-in oracle suite (golden values, gradient checks)
// Exit codes: 0 success, 1 domain failure, 2 usage.

#include "nlss/config.hpp"
#include "nlss/metrics.hpp"
#include "nlss/model.hpp"
#include "nlss/selfcheck.hpp"
#include "nlss/synth.hpp"
#include "nlss/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace nlss;

namespace {

struct Args {
    std::string config;
    std::string out;
    std::string mode;
    std::string frozen;      // "", "true", "false", "1", "0"
    std::string dump_masks;  // same domain as frozen
    long long seed = -1;     // <0 means not given
    bool force = false;
};

bool to_bool(const std::string& v) { return v == "true" || v == "1"; }

int env_threads() {
    const char* s = std::getenv("NLSS_THREADS");
    if (!s || !*s) return 1;
    int n = std::atoi(s);
    return n < 1 ? 1 : n;
}

ExperimentConfig resolve(const Args& a) {
    ExperimentConfig cfg = load_config(a.config);
    if (a.seed >= 0) {
        cfg.scene.seed = (uint64_t)a.seed;
        cfg.train.seed = (uint64_t)a.seed;
    }
    if (!a.mode.empty()) cfg.train.mode = train_mode_from_string(a.mode);
    if (!a.dump_masks.empty()) cfg.train.dump_masks = to_bool(a.dump_masks);
    if (!a.frozen.empty()) cfg.transfer_frozen = to_bool(a.frozen);
    return cfg;
}

void refuse_overwrite(const fs::path& marker, bool force, const char* what) {
    if (fs::exists(marker) && !force)
        throw std::runtime_error(std::string(what) + " already exists at " +
                                 marker.parent_path().string() + " (pass --force to overwrite)");
}

void write_num_csv(std::FILE* f, double v) {
    std::fprintf(f, "%.17g", v);
}

void write_metrics_csv(const std::string& path, const MetricsReport& rep) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "metric,value\n");
    auto row = [&](const std::string& name, double v) {
        std::fprintf(f, "%s,", name.c_str());
        write_num_csv(f, v);
        std::fprintf(f, "\n");
    };
    row("oa", rep.oa);
    row("aa", rep.aa);
    row("miou", rep.miou);
    row("mf1", rep.mf1);
    for (size_t c = 0; c < rep.recall.size(); ++c) row("recall_c" + std::to_string(c), rep.recall[c]);
    for (size_t c = 0; c < rep.iou.size(); ++c) row("iou_c" + std::to_string(c), rep.iou[c]);
    for (size_t c = 0; c < rep.f1.size(); ++c) row("f1_c" + std::to_string(c), rep.f1[c]);
    std::fclose(f);
}

int cmd_generate(const Args& a) {
    ExperimentConfig cfg = resolve(a);
    refuse_overwrite(fs::path(a.out) / "manifest.txt", a.force, "dataset");
    fs::create_directories(a.out);
    generate_dataset(cfg.scene, a.out, env_threads());
    cfg.data_dir = a.out;  // resolved config points at its own output
    write_resolved((fs::path(a.out) / "config.resolved").string(), cfg);
    std::printf("generated %d locations (%dx%d, %d classes, %d seasons) at %s\n",
                cfg.scene.num_locations, cfg.scene.H, cfg.scene.W, cfg.scene.C,
                cfg.scene.seasons, a.out.c_str());
    return 0;
}

void print_final_row(const RunLog& log) {
    if (log.rows.empty()) return;
    const RunLogRow& r = log.rows.back();
    std::printf("epoch %d done: train %.6f val %.6f", r.epoch, r.train_total, r.val_total);
    if (r.val_miou >= 0.0) std::printf(" miou %.4f", r.val_miou);
    std::printf("\n");
}

int cmd_pretrain(const Args& a) {
    ExperimentConfig cfg = resolve(a);
    if (cfg.data_dir.empty())
        throw std::runtime_error("pretrain needs a dataset: set [paths] data in the config");
    refuse_overwrite(fs::path(a.out) / "runlog.csv", a.force, "run log");
    TrainSet ds = load_dataset(cfg.data_dir);
    cfg.train.out_dir = a.out;
    fs::create_directories(a.out);
    write_resolved((fs::path(a.out) / "config.resolved").string(), cfg);
    PretrainResult res = pretrain(ds, cfg.train);
    print_final_row(res.log);
    std::printf("run log: %s\n", (fs::path(a.out) / "runlog.csv").string().c_str());
    return 0;
}

int cmd_transfer(const Args& a) {
    ExperimentConfig cfg = resolve(a);
    if (cfg.data_dir.empty())
        throw std::runtime_error("transfer needs a dataset: set [paths] data in the config");
    refuse_overwrite(fs::path(a.out) / "runlog.csv", a.force, "run log");
    TrainSet ds = load_dataset(cfg.data_dir);

    TransferConfig tc;
    tc.train = cfg.train;
    tc.frozen = cfg.transfer_frozen;
    tc.random_init = cfg.transfer_random_init;
    tc.pretrained_path = cfg.transfer_pretrained;
    if (!a.mode.empty()) {
        // --mode picks the downstream modality directly
        tc.train.mode = train_mode_from_string(a.mode);
        if (!mode_is_single(tc.train.mode))
            throw std::runtime_error("transfer runs single-modal: --mode must be single_modal1 or single_modal2");
        tc.source_modality = tc.train.mode == TrainMode::single_modal1 ? 0 : 1;
    } else {
        if (cfg.transfer_source_modality != 1 && cfg.transfer_source_modality != 2)
            throw std::runtime_error("transfer.source_modality must be 1 or 2");
        tc.source_modality = cfg.transfer_source_modality - 1;
        tc.train.mode = tc.source_modality == 0 ? TrainMode::single_modal1
                                                : TrainMode::single_modal2;
    }
    if (!tc.random_init && tc.pretrained_path.empty())
        throw std::runtime_error("transfer needs [transfer] pretrained (or random_init = true)");

    cfg.train = tc.train;
    cfg.transfer_frozen = tc.frozen;
    tc.train.out_dir = a.out;
    fs::create_directories(a.out);
    write_resolved((fs::path(a.out) / "config.resolved").string(), cfg);
    TransferResult res = transfer(ds, tc);
    print_final_row(res.log);
    std::printf("run log: %s\n", (fs::path(a.out) / "runlog.csv").string().c_str());
    return 0;
}

int cmd_evaluate(const Args& a) {
    ExperimentConfig cfg = resolve(a);
    if (cfg.checkpoint.empty())
        throw std::runtime_error("evaluate needs [paths] checkpoint in the config");
    if (cfg.data_dir.empty())
        throw std::runtime_error("evaluate needs [paths] data in the config");
    ModelPair m = load_checkpoint(cfg.checkpoint);
    TrainSet ds = load_dataset(cfg.data_dir);
    EvalLabels truth = load_clean_labels(cfg.data_dir);
    int scope = m.fusion.mode == FusionMode::single ? m.fusion.single_modality : 2;
    MetricsReport rep = evaluate_model(m, ds, truth.clean, ds.info.val_ids, scope);
    fs::create_directories(a.out);
    write_resolved((fs::path(a.out) / "config.resolved").string(), cfg);
    write_metrics_csv((fs::path(a.out) / "metrics.csv").string(), rep);
    std::printf("oa %.4f  aa %.4f  miou %.4f  mf1 %.4f  (%zu val locations)\n",
                rep.oa, rep.aa, rep.miou, rep.mf1, ds.info.val_ids.size());
    return 0;
}

// Histogram-KL rows comparing every common parameter and batch-norm statistic
// of two checkpoints.
void write_kl_report(const std::string& path, const ModelPair& ma, const ModelPair& mb) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "kind,name,kl\n");
    auto row = [&](const char* kind, const std::string& name, double v) {
        std::fprintf(f, "%s,%s,", kind, name.c_str());
        write_num_csv(f, v);
        std::fprintf(f, "\n");
    };
    auto pb = mb.parameters();
    for (const NamedParam& p : ma.parameters()) {
        for (const NamedParam& q : pb) {
            if (q.name != p.name) continue;
            if (q.t->numel() == p.t->numel())
                row("param", p.name, hist_kl(p.t->data, q.t->data));
            break;
        }
    }
    auto sb = mb.bn_stats();
    for (const NamedStats& s : ma.bn_stats()) {
        for (const NamedStats& q : sb) {
            if (q.name != s.name) continue;
            if (q.s->mean.size() == s.s->mean.size()) {
                row("bn_mean", s.name, hist_kl(s.s->mean, q.s->mean));
                row("bn_var", s.name, hist_kl(s.s->var, q.s->var));
            }
            break;
        }
    }
    std::fclose(f);
}

// Accumulated PCA variance of per-stage encoder features over a few held-out
// tiles; one curve per (modality, stage).
void write_pca_report(const std::string& path, const ModelPair& m, const TrainSet& ds) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "modality,stage,component,accumulated\n");

    std::vector<int> ids = ds.info.val_ids;
    if (ids.size() > 4) ids.resize(4);
    std::vector<int> modalities;
    if (m.fusion.mode == FusionMode::single) modalities.push_back(m.fusion.single_modality);
    else modalities = {0, 1};

    NoGradGuard ng;
    for (int d : modalities) {
        // Gather per-pixel channel vectors, one pool per stage.
        std::vector<std::vector<double>> pool;   // row-major n x dim per stage
        std::vector<int64_t> n_vec, dim_vec;
        for (int id : ids) {
            const TrainLocation& loc = ds.locations[id];
            int ch = d == 0 ? ds.info.spec.modality1.channels : ds.info.spec.modality2.channels;
            int64_t hw_in = (int64_t)ds.info.spec.H * ds.info.spec.W;
            std::vector<double> img = loc.images[0][d];
            normalize_image(img, ch, hw_in, ds.info.stats[d]);
            auto x = Tensor::make({1, ch, ds.info.spec.H, ds.info.spec.W});
            x->data = img;
            auto feats = encoder_features(m, d, x, /*training=*/false);
            if (pool.empty()) {
                pool.resize(feats.size());
                n_vec.assign(feats.size(), 0);
                dim_vec.assign(feats.size(), 0);
            }
            for (size_t s = 0; s < feats.size(); ++s) {
                int64_t C = feats[s]->shape[1];
                int64_t hw = feats[s]->shape[2] * feats[s]->shape[3];
                dim_vec[s] = C;
                const double* v = feats[s]->data.data();
                for (int64_t p = 0; p < hw; ++p) {
                    for (int64_t c = 0; c < C; ++c) pool[s].push_back(v[c * hw + p]);
                    ++n_vec[s];
                }
            }
        }
        for (size_t s = 0; s < pool.size(); ++s) {
            PcaCurve curve = pca_accumulated_variance(pool[s], n_vec[s], dim_vec[s]);
            for (size_t k = 0; k < curve.accumulated.size(); ++k) {
                std::fprintf(f, "%d,%zu,%zu,", d + 1, s, k + 1);
                write_num_csv(f, curve.accumulated[k]);
                std::fprintf(f, "\n");
            }
        }
    }
    std::fclose(f);
}

int cmd_analyze(const Args& a) {
    ExperimentConfig cfg = resolve(a);
    if (cfg.checkpoint.empty())
        throw std::runtime_error("analyze needs [paths] checkpoint in the config");
    ModelPair m = load_checkpoint(cfg.checkpoint);
    fs::create_directories(a.out);
    write_resolved((fs::path(a.out) / "config.resolved").string(), cfg);
    bool wrote = false;
    if (!cfg.checkpoint_b.empty()) {
        ModelPair mb = load_checkpoint(cfg.checkpoint_b);
        std::string p = (fs::path(a.out) / "klreport.csv").string();
        write_kl_report(p, m, mb);
        std::printf("weight divergence report: %s\n", p.c_str());
        wrote = true;
    }
    if (!cfg.data_dir.empty()) {
        TrainSet ds = load_dataset(cfg.data_dir);
        std::string p = (fs::path(a.out) / "pca.csv").string();
        write_pca_report(p, m, ds);
        std::printf("feature variance report: %s\n", p.c_str());
        wrote = true;
    }
    if (!wrote)
        throw std::runtime_error(
            "analyze needs [paths] checkpoint_b (weight divergence) or [paths] data (feature variance)");
    return 0;
}

int cmd_selftest() {
    auto results = run_selfchecks();
    int failed = 0;
    for (const CheckResult& r : results) {
        if (r.pass) {
            std::printf("ok   %s\n", r.name.c_str());
        } else {
            ++failed;
            std::printf("FAIL %s: %s\n", r.name.c_str(), r.detail.c_str());
        }
    }
    std::printf("%zu checks, %d failed\n", results.size(), failed);
    return failed == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal noisy-label segmentation workbench"};
    app.require_subcommand(1);

    Args a;
    const std::vector<std::string> bools = {"true", "false", "1", "0"};
    const std::vector<std::string> all_modes = {"single_modal1", "single_modal2", "midF",
                                                "lateF",         "cromss_midF",   "cromss_lateF"};
    const std::vector<std::string> single_modes = {"single_modal1", "single_modal2"};

    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", a.config, "experiment config file");
        c->add_option("--seed", a.seed, "override the experiment seed")
            ->check(CLI::NonNegativeNumber);
        c->add_option("--out", a.out, "output directory")->required();
    };

    CLI::App* g = app.add_subcommand("generate", "synthesize a two-modality noisy-label dataset");
    add_common(g);
    g->add_flag("--force", a.force, "overwrite an existing dataset");

    CLI::App* p = app.add_subcommand("pretrain", "train on noisy labels");
    add_common(p);
    p->add_option("--mode", a.mode, "training mode")->check(CLI::IsMember(all_modes));
    p->add_option("--dump-masks", a.dump_masks, "write per-epoch confidence masks (true/false)")
        ->check(CLI::IsMember(bools));
    p->add_flag("--force", a.force, "overwrite an existing run directory");

    CLI::App* t = app.add_subcommand("transfer", "adapt a pretrained encoder to one modality");
    add_common(t);
    t->add_option("--mode", a.mode, "downstream modality")->check(CLI::IsMember(single_modes));
    t->add_option("--frozen", a.frozen, "freeze the encoder (true/false)")
        ->check(CLI::IsMember(bools));
    t->add_option("--dump-masks", a.dump_masks, "write per-epoch confidence masks (true/false)")
        ->check(CLI::IsMember(bools));
    t->add_flag("--force", a.force, "overwrite an existing run directory");

    CLI::App* e = app.add_subcommand("evaluate", "score a checkpoint on held-out clean labels");
    add_common(e);

    CLI::App* n = app.add_subcommand("analyze", "weight-divergence and feature-variance reports");
    add_common(n);

    CLI::App* s = app.add_subcommand("selftest", "run the built-in oracle suite");
    (void)s;

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return 2;
    }

    try {
        if (g->parsed()) return cmd_generate(a);
        if (p->parsed()) return cmd_pretrain(a);
        if (t->parsed()) return cmd_transfer(a);
        if (e->parsed()) return cmd_evaluate(a);
        if (n->parsed()) return cmd_analyze(a);
        if (s->parsed()) return cmd_selftest();
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 2;
}
