#include "nlss/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace nlss {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: " + key + " expects a boolean, got '" + v + "'");
}

struct KvReader {
    std::map<std::string, std::string> kv;  // "section.key" -> value

    std::string take(const std::string& key, const std::string& fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        std::string v = it->second;
        kv.erase(it);
        return v;
    }
    int take_int(const std::string& key, int fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            int v = std::stoi(it->second);
            kv.erase(it);
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: " + key + " expects an integer, got '" +
                                        it->second + "'");
        }
    }
    double take_double(const std::string& key, double fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        try {
            double v = std::stod(it->second);
            kv.erase(it);
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: " + key + " expects a number, got '" +
                                        it->second + "'");
        }
    }
    bool take_bool(const std::string& key, bool fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        bool v = parse_bool(it->second, key);
        kv.erase(it);
        return v;
    }
};

} // namespace

ExperimentConfig load_config(const std::string& path) {
    ExperimentConfig c;
    if (path.empty()) return c;

    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    KvReader r;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: malformed section at line " +
                                            std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected 'key = value' at line " +
                                        std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config: empty key at line " + std::to_string(lineno));
        std::string full = section.empty() ? key : section + "." + key;
        if (r.kv.count(full))
            throw std::invalid_argument("config: duplicate key " + full);
        r.kv[full] = val;
    }

    uint64_t seed = (uint64_t)std::stoull(r.take("seed", "1"));
    c.scene.seed = seed;
    c.train.seed = seed;

    c.scene.num_locations = r.take_int("scene.num_locations", c.scene.num_locations);
    c.scene.H = r.take_int("scene.height", c.scene.H);
    c.scene.W = r.take_int("scene.width", c.scene.W);
    c.scene.C = r.take_int("scene.classes", c.scene.C);
    c.scene.seasons = r.take_int("scene.seasons", c.scene.seasons);
    c.scene.modality1.channels = r.take_int("scene.m1_channels", c.scene.modality1.channels);
    c.scene.modality1.separability =
        r.take_double("scene.m1_separability", c.scene.modality1.separability);
    c.scene.modality2.channels = r.take_int("scene.m2_channels", c.scene.modality2.channels);
    c.scene.modality2.separability =
        r.take_double("scene.m2_separability", c.scene.modality2.separability);
    c.scene.noise.kind = noise_kind_from_string(
        r.take("scene.noise_kind", to_string(c.scene.noise.kind)));
    c.scene.noise.rate = r.take_double("scene.noise_rate", c.scene.noise.rate);
    c.scene.val_fraction = r.take_double("scene.val_fraction", c.scene.val_fraction);

    c.train.mode = train_mode_from_string(r.take("train.mode", to_string(c.train.mode)));
    c.train.lr = r.take_double("train.lr", c.train.lr);
    c.train.batch = r.take_int("train.batch", c.train.batch);
    c.train.epochs = r.take_int("train.epochs", c.train.epochs);
    c.train.crop = r.take_int("train.crop", c.train.crop);
    c.train.base_width = r.take_int("train.base_width", c.train.base_width);
    c.train.depth = r.take_int("train.depth", c.train.depth);
    c.train.plateau_patience = r.take_int("train.plateau_patience", c.train.plateau_patience);
    c.train.plateau_factor = r.take_double("train.plateau_factor", c.train.plateau_factor);
    c.train.plateau_rel_threshold =
        r.take_double("train.plateau_rel_threshold", c.train.plateau_rel_threshold);
    c.train.consistency_weight =
        r.take_double("train.consistency_weight", c.train.consistency_weight);
    c.train.checkpoint_every = r.take_int("train.checkpoint_every", c.train.checkpoint_every);
    c.train.miou_every = r.take_int("train.miou_every", c.train.miou_every);
    c.train.resume_from = r.take("train.resume", c.train.resume_from);

    c.train.schedule.alpha0 = r.take_double("schedule.alpha0", c.train.schedule.alpha0);
    c.train.schedule.ramp_epochs = r.take_int("schedule.ramp_epochs", c.train.schedule.ramp_epochs);

    c.train.smoothing.beta = r.take_double("smoothing.beta", c.train.smoothing.beta);
    c.train.smoothing.mu = r.take_double("smoothing.mu", c.train.smoothing.mu);
    c.train.smoothing.kernel_size = r.take_int("smoothing.kernel_size", c.train.smoothing.kernel_size);
    c.train.smoothing.sigma = r.take_double("smoothing.sigma", c.train.smoothing.sigma);

    c.transfer_source_modality =
        r.take_int("transfer.source_modality", c.transfer_source_modality);
    c.transfer_frozen = r.take_bool("transfer.frozen", c.transfer_frozen);
    c.transfer_random_init = r.take_bool("transfer.random_init", c.transfer_random_init);
    c.transfer_pretrained = r.take("transfer.pretrained", c.transfer_pretrained);

    c.data_dir = r.take("paths.data", c.data_dir);
    c.checkpoint = r.take("paths.checkpoint", c.checkpoint);
    c.checkpoint_b = r.take("paths.checkpoint_b", c.checkpoint_b);

    if (!r.kv.empty()) {
        std::string bad;
        for (const auto& [k, v] : r.kv) {
            if (!bad.empty()) bad += ", ";
            bad += k;
        }
        throw std::invalid_argument("config: unknown key(s): " + bad);
    }
    return c;
}

void write_resolved(const std::string& path, const ExperimentConfig& c) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    f << "seed = " << c.train.seed << "\n\n";
    f << "[scene]\n";
    f << "num_locations = " << c.scene.num_locations << "\n";
    f << "height = " << c.scene.H << "\n";
    f << "width = " << c.scene.W << "\n";
    f << "classes = " << c.scene.C << "\n";
    f << "seasons = " << c.scene.seasons << "\n";
    f << "m1_channels = " << c.scene.modality1.channels << "\n";
    f << "m1_separability = " << num(c.scene.modality1.separability) << "\n";
    f << "m2_channels = " << c.scene.modality2.channels << "\n";
    f << "m2_separability = " << num(c.scene.modality2.separability) << "\n";
    f << "noise_kind = " << to_string(c.scene.noise.kind) << "\n";
    f << "noise_rate = " << num(c.scene.noise.rate) << "\n";
    f << "val_fraction = " << num(c.scene.val_fraction) << "\n\n";
    f << "[train]\n";
    f << "mode = " << to_string(c.train.mode) << "\n";
    f << "lr = " << num(c.train.lr) << "\n";
    f << "batch = " << c.train.batch << "\n";
    f << "epochs = " << c.train.epochs << "\n";
    f << "crop = " << c.train.crop << "\n";
    f << "base_width = " << c.train.base_width << "\n";
    f << "depth = " << c.train.depth << "\n";
    f << "plateau_patience = " << c.train.plateau_patience << "\n";
    f << "plateau_factor = " << num(c.train.plateau_factor) << "\n";
    f << "plateau_rel_threshold = " << num(c.train.plateau_rel_threshold) << "\n";
    f << "consistency_weight = " << num(c.train.consistency_weight) << "\n";
    f << "checkpoint_every = " << c.train.checkpoint_every << "\n";
    f << "miou_every = " << c.train.miou_every << "\n";
    if (!c.train.resume_from.empty()) f << "resume = " << c.train.resume_from << "\n";
    f << "\n[schedule]\n";
    f << "alpha0 = " << num(c.train.schedule.alpha0) << "\n";
    f << "ramp_epochs = " << c.train.schedule.ramp_epochs << "\n";
    f << "\n[smoothing]\n";
    f << "beta = " << num(c.train.smoothing.beta) << "\n";
    f << "mu = " << num(c.train.smoothing.mu) << "\n";
    f << "kernel_size = " << c.train.smoothing.kernel_size << "\n";
    f << "sigma = " << num(c.train.smoothing.sigma) << "\n";
    f << "\n[transfer]\n";
    f << "source_modality = " << c.transfer_source_modality << "\n";
    f << "frozen = " << (c.transfer_frozen ? "true" : "false") << "\n";
    f << "random_init = " << (c.transfer_random_init ? "true" : "false") << "\n";
    if (!c.transfer_pretrained.empty()) f << "pretrained = " << c.transfer_pretrained << "\n";
    f << "\n[paths]\n";
    if (!c.data_dir.empty()) f << "data = " << c.data_dir << "\n";
    if (!c.checkpoint.empty()) f << "checkpoint = " << c.checkpoint << "\n";
    if (!c.checkpoint_b.empty()) f << "checkpoint_b = " << c.checkpoint_b << "\n";
    if (!f) throw std::runtime_error("short write on " + path);
}

} // namespace nlss
