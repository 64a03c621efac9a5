#include "nlss/model.hpp"
#include "nlss/rng.hpp"
#include "nlss/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nlss {

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "single") return FusionMode::single;
    if (s == "middle") return FusionMode::middle;
    if (s == "late") return FusionMode::late;
    throw std::invalid_argument("unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::single: return "single";
        case FusionMode::middle: return "middle";
        default: return "late";
    }
}

namespace {

std::vector<int> encoder_widths(const MiniUNetConfig& cfg) {
    std::vector<int> w(cfg.depth + 1);
    w[0] = cfg.base_width;
    int cap = cfg.base_width * 4;
    for (int i = 1; i <= cfg.depth; ++i) w[i] = std::min(cfg.base_width << i, cap);
    return w;
}

std::vector<int> decoder_widths(const std::vector<int>& ew) {
    // one width per up level, bottom level first
    std::vector<int> dw;
    for (size_t i = ew.size() - 1; i >= 1; --i) dw.push_back(std::max(8, ew[i - 1] / 2));
    return dw;
}

TensorPtr he_uniform(Rng& rng, int64_t cout, int64_t cin, int64_t kh, int64_t kw) {
    auto t = Tensor::make({cout, cin, kh, kw}, true);
    double limit = std::sqrt(6.0 / static_cast<double>(cin * kh * kw));
    for (auto& v : t->data) v = rng.uniform(-limit, limit);
    return t;
}

ConvBn make_block(Rng& rng, int cin, int cout, int k, int stride, bool with_bn) {
    ConvBn b;
    b.w = he_uniform(rng, cout, cin, k, k);
    b.b = Tensor::make({cout}, true);
    b.stride = stride;
    b.pad = k / 2;
    if (with_bn) {
        b.gamma = Tensor::make({cout}, true);
        std::fill(b.gamma->data.begin(), b.gamma->data.end(), 1.0);
        b.beta = Tensor::make({cout}, true);
        b.stats = std::make_shared<BnStats>();
        b.stats->mean.assign(cout, 0.0);
        b.stats->var.assign(cout, 1.0);
    }
    return b;
}

ConvBn clone_block(const ConvBn& src) {
    ConvBn b;
    auto copy = [](const TensorPtr& t) {
        if (!t) return TensorPtr{};
        auto c = Tensor::make(t->shape, t->requires_grad);
        c->data = t->data;
        return c;
    };
    b.w = copy(src.w);
    b.b = copy(src.b);
    b.gamma = copy(src.gamma);
    b.beta = copy(src.beta);
    if (src.stats) b.stats = std::make_shared<BnStats>(*src.stats);
    b.stride = src.stride;
    b.pad = src.pad;
    return b;
}

UNet build_encoder(const MiniUNetConfig& cfg, int in_ch, uint64_t seed) {
    UNet net;
    auto ew = encoder_widths(cfg);
    Rng rng(seed);
    net.enc.push_back(make_block(rng, in_ch, ew[0], 3, 1, true));
    for (int i = 1; i <= cfg.depth; ++i)
        net.enc.push_back(make_block(rng, ew[i - 1], ew[i], 3, 2, true));
    return net;
}

void build_decoder(UNet& net, const MiniUNetConfig& cfg, uint64_t seed) {
    auto ew = encoder_widths(cfg);
    auto dw = decoder_widths(ew);
    Rng rng(seed);
    int carry = ew.back();
    for (int lvl = 0; lvl < cfg.depth; ++lvl) {
        int skip = ew[cfg.depth - 1 - lvl];
        net.dec.push_back(make_block(rng, carry + skip, dw[lvl], 3, 1, true));
        carry = dw[lvl];
    }
    net.head = make_block(rng, carry, cfg.num_classes, 1, 1, false);
}

void collect_block(std::vector<NamedParam>& out, const std::string& prefix, const ConvBn& b) {
    out.push_back({prefix + ".w", b.w});
    out.push_back({prefix + ".b", b.b});
    if (b.gamma) {
        out.push_back({prefix + ".g", b.gamma});
        out.push_back({prefix + ".beta", b.beta});
    }
}

} // namespace

int ModelPair::net_index(int modality) const {
    if (fusion.mode == FusionMode::single) {
        if (modality != fusion.single_modality)
            throw std::invalid_argument("model: modality not present in single-modal pair");
        return 0;
    }
    if (modality < 0 || modality > 1) throw std::invalid_argument("model: modality must be 0 or 1");
    return modality;
}

std::vector<NamedParam> ModelPair::parameters() const {
    std::vector<NamedParam> out;
    bool shared = fusion.share_decoder();
    for (size_t d = 0; d < nets.size(); ++d) {
        // single-modal pairs keep the modality's own name so checkpoints
        // from different modes stay comparable
        int dm = fusion.mode == FusionMode::single ? fusion.single_modality : (int)d;
        std::string mp = "m" + std::to_string(dm);
        for (size_t i = 0; i < nets[d].enc.size(); ++i)
            collect_block(out, mp + ".enc" + std::to_string(i), nets[d].enc[i]);
        if (shared && d > 0) continue;  // aliased storage already listed
        std::string dp = shared ? "dec" : mp + ".dec";
        for (size_t i = 0; i < nets[d].dec.size(); ++i)
            collect_block(out, dp + std::to_string(i), nets[d].dec[i]);
        collect_block(out, shared ? "dec.head" : mp + ".head", nets[d].head);
    }
    return out;
}

std::vector<NamedStats> ModelPair::bn_stats() const {
    std::vector<NamedStats> out;
    bool shared = fusion.share_decoder();
    for (size_t d = 0; d < nets.size(); ++d) {
        int dm = fusion.mode == FusionMode::single ? fusion.single_modality : (int)d;
        std::string mp = "m" + std::to_string(dm);
        for (size_t i = 0; i < nets[d].enc.size(); ++i)
            if (nets[d].enc[i].stats)
                out.push_back({mp + ".enc" + std::to_string(i), nets[d].enc[i].stats});
        if (shared && d > 0) continue;
        std::string dp = shared ? "dec" : mp + ".dec";
        for (size_t i = 0; i < nets[d].dec.size(); ++i)
            if (nets[d].dec[i].stats)
                out.push_back({dp + std::to_string(i), nets[d].dec[i].stats});
    }
    return out;
}

int64_t ModelPair::param_count() const {
    int64_t n = 0;
    for (const auto& p : parameters()) n += p.t->numel();
    return n;
}

ModelPair build_model(const MiniUNetConfig& cfg, const FusionSpec& fusion, uint64_t seed) {
    if (cfg.depth < 1) throw std::invalid_argument("model: depth must be >= 1");
    if (cfg.num_classes < 2) throw std::invalid_argument("model: need at least 2 classes");
    ModelPair m;
    m.cfg = cfg;
    m.fusion = fusion;
    if (fusion.mode == FusionMode::single) {
        int d = fusion.single_modality;
        m.nets.push_back(build_encoder(cfg, cfg.in_channels[d], derive_seed(seed, 11)));
        build_decoder(m.nets[0], cfg, derive_seed(seed, 23));
        return m;
    }
    // both encoders draw from one stream, so equal-channel modalities start
    // as clones (mirrors the decoder rule; the data tells them apart)
    m.nets.push_back(build_encoder(cfg, cfg.in_channels[0], derive_seed(seed, 11)));
    m.nets.push_back(build_encoder(cfg, cfg.in_channels[1], derive_seed(seed, 11)));
    build_decoder(m.nets[0], cfg, derive_seed(seed, 23));
    if (fusion.mode == FusionMode::middle) {
        m.nets[1].dec = m.nets[0].dec;    // aliased tensors and bn stats
        m.nets[1].head = m.nets[0].head;
    } else {
        for (const auto& b : m.nets[0].dec) m.nets[1].dec.push_back(clone_block(b));
        m.nets[1].head = clone_block(m.nets[0].head);
    }
    return m;
}

namespace {

TensorPtr run_block(const ConvBn& blk, const TensorPtr& x, bool training) {
    auto y = conv2d(x, blk.w, blk.b, blk.stride, blk.pad);
    if (blk.gamma) {
        y = batch_norm(y, blk.gamma, blk.beta, *blk.stats, training);
        y = relu(y);
    }
    return y;
}

void check_input(const ModelPair& m, int modality, const TensorPtr& x) {
    if (x->shape.size() != 4) throw std::invalid_argument("forward: expected BCHW input");
    int d = m.fusion.mode == FusionMode::single ? m.fusion.single_modality : modality;
    if (x->shape[1] != m.cfg.in_channels[d])
        throw std::invalid_argument("forward: wrong channel count for modality");
    int64_t div = int64_t{1} << m.cfg.depth;
    if (x->shape[2] % div != 0 || x->shape[3] % div != 0)
        throw std::invalid_argument("forward: spatial dims must divide 2^depth");
}

} // namespace

std::vector<TensorPtr> encoder_features(const ModelPair& m, int modality,
                                        const TensorPtr& x, bool training) {
    check_input(m, modality, x);
    const UNet& net = m.nets[m.net_index(modality)];
    std::vector<TensorPtr> feats;
    TensorPtr f = x;
    for (const auto& blk : net.enc) {
        f = run_block(blk, f, training);
        feats.push_back(f);
    }
    return feats;
}

TensorPtr forward(const ModelPair& m, int modality, const TensorPtr& x, bool training,
                  int encoder_training) {
    bool enc_train = encoder_training < 0 ? training : encoder_training != 0;
    auto feats = encoder_features(m, modality, x, enc_train);
    const UNet& net = m.nets[m.net_index(modality)];
    TensorPtr y = feats.back();
    int depth = m.cfg.depth;
    for (int lvl = 0; lvl < depth; ++lvl) {
        y = upsample_nearest2x(y);
        y = concat_channels(y, feats[depth - 1 - lvl]);
        y = run_block(net.dec[lvl], y, training);
    }
    auto logits = conv2d(y, net.head.w, net.head.b, 1, 0);
    return softmax_channels(logits);
}

// ------------------------------------------------------------- checkpoint

void save_checkpoint(const std::string& path, const ModelPair& m, const TrainerState* trainer) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_bytes(f, "NLCK", 4);
    write_u32(f, 1);
    std::ostringstream cfg;
    cfg << "mode=" << to_string(m.fusion.mode) << "\n"
        << "single_modality=" << m.fusion.single_modality << "\n"
        << "in_ch0=" << m.cfg.in_channels[0] << "\n"
        << "in_ch1=" << m.cfg.in_channels[1] << "\n"
        << "base_width=" << m.cfg.base_width << "\n"
        << "depth=" << m.cfg.depth << "\n"
        << "num_classes=" << m.cfg.num_classes << "\n";
    write_string(f, cfg.str());
    auto params = m.parameters();
    write_u32(f, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        write_string(f, p.name);
        write_nlt1(f, p.t->shape, p.t->data);
    }
    auto stats = m.bn_stats();
    write_u32(f, static_cast<uint32_t>(stats.size()));
    for (const auto& s : stats) {
        write_string(f, s.name);
        int64_t c = static_cast<int64_t>(s.s->mean.size());
        write_nlt1(f, {c}, s.s->mean);
        write_nlt1(f, {c}, s.s->var);
    }
    if (trainer && trainer->present) {
        write_bytes(f, "T", 1);
        std::ostringstream kv;
        for (const auto& [k, v] : trainer->keys) kv << k << "=" << v << "\n";
        write_string(f, kv.str());
        write_u32(f, static_cast<uint32_t>(trainer->tensors.size()));
        for (const auto& [name, data] : trainer->tensors) {
            write_string(f, name);
            write_nlt1(f, {static_cast<int64_t>(data.size())}, data);
        }
    } else {
        write_bytes(f, "E", 1);
    }
}

ModelPair load_checkpoint(const std::string& path, TrainerState* trainer) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::string(magic, 4) != "NLCK") throw std::runtime_error("checkpoint: bad magic");
    uint32_t version = read_u32(f);
    if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
    std::map<std::string, std::string> kv;
    {
        std::istringstream is(read_string(f));
        std::string line;
        while (std::getline(is, line)) {
            auto eq = line.find('=');
            if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    MiniUNetConfig cfg;
    cfg.in_channels[0] = std::stoi(kv.at("in_ch0"));
    cfg.in_channels[1] = std::stoi(kv.at("in_ch1"));
    cfg.base_width = std::stoi(kv.at("base_width"));
    cfg.depth = std::stoi(kv.at("depth"));
    cfg.num_classes = std::stoi(kv.at("num_classes"));
    FusionSpec fusion;
    fusion.mode = fusion_mode_from_string(kv.at("mode"));
    fusion.single_modality = std::stoi(kv.at("single_modality"));
    ModelPair m = build_model(cfg, fusion, 0);

    std::map<std::string, TensorPtr> by_name;
    for (const auto& p : m.parameters()) by_name[p.name] = p.t;
    uint32_t nparams = read_u32(f);
    for (uint32_t i = 0; i < nparams; ++i) {
        std::string name = read_string(f);
        std::vector<int64_t> shape;
        std::vector<double> data;
        read_nlt1(f, shape, data);
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint: unknown tensor " + name);
        if (it->second->shape != shape) throw std::runtime_error("checkpoint: shape mismatch for " + name);
        it->second->data = std::move(data);
    }
    std::map<std::string, std::shared_ptr<BnStats>> stats_by_name;
    for (const auto& s : m.bn_stats()) stats_by_name[s.name] = s.s;
    uint32_t nstats = read_u32(f);
    for (uint32_t i = 0; i < nstats; ++i) {
        std::string name = read_string(f);
        std::vector<int64_t> shape;
        std::vector<double> mean, var;
        read_nlt1(f, shape, mean);
        read_nlt1(f, shape, var);
        auto it = stats_by_name.find(name);
        if (it == stats_by_name.end()) throw std::runtime_error("checkpoint: unknown bn layer " + name);
        it->second->mean = std::move(mean);
        it->second->var = std::move(var);
    }
    char tag = 'E';
    read_bytes(f, &tag, 1);
    if (tag == 'T') {
        TrainerState ts;
        ts.present = true;
        std::istringstream is(read_string(f));
        std::string line;
        while (std::getline(is, line)) {
            auto eq = line.find('=');
            if (eq != std::string::npos)
                ts.keys.push_back({line.substr(0, eq), line.substr(eq + 1)});
        }
        uint32_t nt = read_u32(f);
        for (uint32_t i = 0; i < nt; ++i) {
            std::string name = read_string(f);
            std::vector<int64_t> shape;
            std::vector<double> data;
            read_nlt1(f, shape, data);
            ts.tensors.push_back({name, std::move(data)});
        }
        if (trainer) *trainer = std::move(ts);
    } else if (trainer) {
        trainer->present = false;
    }
    return m;
}

} // namespace nlss
