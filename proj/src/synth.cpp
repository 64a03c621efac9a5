#include "nlss/synth.hpp"

#include "nlss/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace nlss {

namespace {

constexpr double kPi = 3.14159265358979323846;

// texture model constants: per-channel class codes scaled by separability,
// plus a smooth cosine field and white noise
constexpr double kTextureAmp = 0.25;
constexpr double kWhiteSigmaWeak = 0.55;
constexpr double kWhiteSigmaStrong = 0.45;
constexpr double kSeasonOffsetRange = 0.2;
constexpr double kSeasonGainJitter = 0.08;
constexpr double kSeasonDriftShare = 0.02;  // boundary drift rate = share * noise rate

// class code in [0,1] for (modality, class, channel); strong modality gets a
// ramp on channel 0, both get binary codes elsewhere so every class pair is
// separated somewhere
double class_code(int modality, int c, int ch, int C) {
    if (modality == 1 && ch == 0)
        return C > 1 ? (double)c / (double)(C - 1) : 0.0;
    int bit_index = modality == 1 ? ch - 1 : ch;
    return (double)((c >> bit_index) & 1);
}

std::vector<uint8_t> voronoi_labels(int H, int W, int C, Rng& rng) {
    int sites = 2 * C;
    std::vector<double> sy(sites), sx(sites);
    for (int i = 0; i < sites; ++i) {
        sy[i] = rng.uniform(0.0, (double)H);
        sx[i] = rng.uniform(0.0, (double)W);
    }
    std::vector<uint8_t> lab((size_t)H * W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double best = 1e300;
            int arg = 0;
            for (int i = 0; i < sites; ++i) {
                double dy = y + 0.5 - sy[i], dx = x + 0.5 - sx[i];
                double d = dy * dy + dx * dx;
                if (d < best) {
                    best = d;
                    arg = i;
                }
            }
            lab[(size_t)y * W + x] = (uint8_t)(arg % C);
        }
    }
    return lab;
}

std::vector<uint8_t> symmetric_flip(const std::vector<uint8_t>& y, int C, double rate, Rng& rng) {
    auto out = y;
    for (auto& c : out) {
        if (rng.uniform() < rate)
            c = (uint8_t)((c + 1 + rng.uniform_int(C - 1)) % C);
    }
    return out;
}

std::vector<uint8_t> boundary_shift(const std::vector<uint8_t>& y, int H, int W,
                                    double rate, Rng& rng) {
    auto out = y;
    int64_t target = (int64_t)std::llround(rate * (double)y.size());
    int64_t changed = 0;
    const int dirs[8][2] = {{0, 1},  {0, -1}, {1, 0},  {-1, 0},
                            {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
    for (int sweep = 0; sweep < 2 && changed < target; ++sweep) {
        const auto& d = dirs[rng.uniform_int(8)];
        // candidates adopt the class of the neighbor in the sweep direction
        std::vector<int64_t> cand;
        for (int yy = 0; yy < H; ++yy) {
            for (int xx = 0; xx < W; ++xx) {
                int ny = yy + d[0], nx = xx + d[1];
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                if (out[(size_t)ny * W + nx] != out[(size_t)yy * W + xx])
                    cand.push_back((int64_t)yy * W + xx);
            }
        }
        if (cand.empty()) break;
        double p = std::min(1.0, (double)(target - changed) / (double)cand.size());
        auto prev = out;  // synchronous update, one-pixel creep per sweep
        for (int64_t i : cand) {
            if (rng.uniform() < p) {
                int yy = (int)(i / W), xx = (int)(i % W);
                out[i] = prev[(size_t)(yy + d[0]) * W + (xx + d[1])];
                ++changed;
            }
        }
    }
    return out;
}

struct GeneratedLocation {
    TrainLocation train;
    std::vector<uint8_t> clean;
};

struct SeasonEffect {
    // [season][modality][channel]
    std::vector<std::array<std::vector<double>, 2>> gain, offset;
};

SeasonEffect season_effects(const SceneSpec& s) {
    SeasonEffect e;
    e.gain.resize(s.seasons);
    e.offset.resize(s.seasons);
    Rng rng(derive_seed(s.seed, 7));
    for (int t = 0; t < s.seasons; ++t) {
        for (int m = 0; m < 2; ++m) {
            int ch = m == 0 ? s.modality1.channels : s.modality2.channels;
            for (int c = 0; c < ch; ++c) {
                e.gain[t][m].push_back(1.0 + rng.uniform(-kSeasonGainJitter, kSeasonGainJitter));
                e.offset[t][m].push_back(rng.uniform(-kSeasonOffsetRange, kSeasonOffsetRange));
            }
        }
    }
    return e;
}

// smooth low-frequency cosine field, fresh harmonics per call
void add_texture(std::vector<double>& plane, int H, int W, Rng& rng) {
    for (int j = 1; j <= 3; ++j) {
        double ky = rng.uniform(0.5, 3.0), kx = rng.uniform(0.5, 3.0);
        double ph = rng.uniform(0.0, 2.0 * kPi);
        double a = kTextureAmp / j;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                plane[(size_t)y * W + x] +=
                    a * std::cos(2.0 * kPi * (ky * y + kx * x) / (double)std::max(H, W) + ph);
    }
}

GeneratedLocation generate_location(const SceneSpec& s, int id, const SeasonEffect& eff) {
    GeneratedLocation g;
    uint64_t loc_seed = derive_seed(s.seed, 1000 + (uint64_t)id);
    Rng lab_rng(derive_seed(loc_seed, 1));
    g.clean = voronoi_labels(s.H, s.W, s.C, lab_rng);

    g.train.id = id;
    g.train.images.resize(s.seasons);
    g.train.noisy_labels.resize(s.seasons);
    const int64_t hw = (int64_t)s.H * s.W;
    for (int t = 0; t < s.seasons; ++t) {
        // annotation for season t: small boundary drift, then injected noise
        auto drifted = g.clean;
        double drift = kSeasonDriftShare * s.noise.rate;
        if (drift > 0.0) {
            Rng drng(derive_seed(loc_seed, 40 + (uint64_t)t));
            drifted = boundary_shift(drifted, s.H, s.W, drift, drng);
        }
        g.train.noisy_labels[t] = inject_noise(drifted, s.H, s.W, s.C, s.noise.kind,
                                               s.noise.rate, derive_seed(loc_seed, 60 + (uint64_t)t));

        for (int m = 0; m < 2; ++m) {
            const ModalitySpec& ms = m == 0 ? s.modality1 : s.modality2;
            double white = m == 0 ? kWhiteSigmaWeak : kWhiteSigmaStrong;
            auto& img = g.train.images[t][m];
            img.assign((size_t)ms.channels * hw, 0.0);
            Rng irng(derive_seed(loc_seed, 100 + (uint64_t)(t * 2 + m)));
            for (int c = 0; c < ms.channels; ++c) {
                double* plane = img.data() + (size_t)c * hw;
                std::vector<double> tex(hw, 0.0);
                add_texture(tex, s.H, s.W, irng);
                double gain = eff.gain[t][m][c], off = eff.offset[t][m][c];
                for (int64_t i = 0; i < hw; ++i) {
                    double base = ms.separability * class_code(m, g.clean[i], c, s.C);
                    plane[i] = gain * (base + tex[i] + white * irng.normal()) + off;
                }
            }
        }
    }
    return g;
}

std::string loc_path(const std::string& dir, int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "loc_%04d.nlds", id);
    return dir + "/" + buf;
}

void write_location(const std::string& dir, const SceneSpec& s, const GeneratedLocation& g) {
    std::ofstream f(loc_path(dir, g.train.id), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + loc_path(dir, g.train.id));
    write_bytes(f, "NLDS", 4);
    write_u16(f, 1);
    write_u16(f, (uint16_t)s.C);
    write_u16(f, (uint16_t)s.seasons);
    write_u16(f, (uint16_t)s.H);
    write_u16(f, (uint16_t)s.W);
    write_u16(f, (uint16_t)s.modality1.channels);
    write_u16(f, (uint16_t)s.modality2.channels);
    const int64_t hw = (int64_t)s.H * s.W;
    for (int t = 0; t < s.seasons; ++t) {
        write_nlt1(f, {s.modality1.channels, s.H, s.W}, g.train.images[t][0]);
        write_nlt1(f, {s.modality2.channels, s.H, s.W}, g.train.images[t][1]);
        write_bytes(f, g.train.noisy_labels[t].data(), (size_t)hw);
    }
    char flag = 'C';
    write_bytes(f, &flag, 1);
    write_bytes(f, g.clean.data(), (size_t)hw);
    if (!f) throw std::runtime_error("short write on " + loc_path(dir, g.train.id));
}

void read_location_header(std::istream& f, const std::string& path, SceneSpec& s) {
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::string(magic, 4) != "NLDS")
        throw std::runtime_error(path + ": not a location file");
    uint16_t version = read_u16(f);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    s.C = read_u16(f);
    s.seasons = read_u16(f);
    s.H = read_u16(f);
    s.W = read_u16(f);
    s.modality1.channels = read_u16(f);
    s.modality2.channels = read_u16(f);
}

std::string fmt_ids(const std::vector<int>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(ids[i]);
    }
    return out;
}

std::string fmt_doubles(const std::vector<double>& v) {
    std::string out;
    char buf[32];
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        out += buf;
    }
    return out;
}

std::vector<int> parse_ids(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stoi(tok));
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
}

} // namespace

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "symmetric_flip") return NoiseKind::symmetric_flip;
    if (s == "boundary_erode") return NoiseKind::boundary_erode;
    if (s == "mixed") return NoiseKind::mixed;
    throw std::invalid_argument("unknown noise kind: " + s);
}

std::string to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::symmetric_flip: return "symmetric_flip";
        case NoiseKind::boundary_erode: return "boundary_erode";
        case NoiseKind::mixed: return "mixed";
    }
    return "?";
}

void validate_spec(const SceneSpec& s) {
    if (s.C < 2) throw std::invalid_argument("scene: need at least 2 classes");
    if (s.C > 254) throw std::invalid_argument("scene: class count exceeds label byte range");
    if (s.num_locations < 2) throw std::invalid_argument("scene: need at least 2 locations");
    if (s.seasons < 1) throw std::invalid_argument("scene: need at least 1 season");
    if (s.H < 8 || s.W < 8 || s.H % 8 != 0 || s.W % 8 != 0)
        throw std::invalid_argument("scene: H and W must be multiples of 8");
    if (s.modality1.channels < 1 || s.modality2.channels < 1)
        throw std::invalid_argument("scene: each modality needs at least one channel");
    if (!(s.noise.rate >= 0.0 && s.noise.rate < 1.0))
        throw std::invalid_argument("scene: noise rate must be in [0, 1)");
    if (!(s.val_fraction > 0.0 && s.val_fraction < 0.5))
        throw std::invalid_argument("scene: val_fraction must be in (0, 0.5)");
}

std::vector<uint8_t> inject_noise(const std::vector<uint8_t>& y, int H, int W, int C,
                                  NoiseKind kind, double rate, uint64_t seed) {
    if ((size_t)H * W != y.size()) throw std::invalid_argument("inject_noise: size mismatch");
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("inject_noise: rate must be in [0, 1)");
    if (rate == 0.0) return y;
    Rng rng(seed);
    switch (kind) {
        case NoiseKind::symmetric_flip:
            return symmetric_flip(y, C, rate, rng);
        case NoiseKind::boundary_erode:
            return boundary_shift(y, H, W, rate, rng);
        case NoiseKind::mixed: {
            auto mid = boundary_shift(y, H, W, rate * 0.5, rng);
            return symmetric_flip(mid, C, rate * 0.5, rng);
        }
    }
    return y;
}

void generate_dataset(const SceneSpec& spec, const std::string& dir, int threads) {
    validate_spec(spec);
    std::filesystem::create_directories(dir);
    auto eff = season_effects(spec);

    std::vector<GeneratedLocation> locs(spec.num_locations);
    int nt = std::max(1, threads);
    if (nt == 1) {
        for (int i = 0; i < spec.num_locations; ++i) locs[i] = generate_location(spec, i, eff);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < nt; ++t) {
            pool.emplace_back([&] {
                for (int i = next++; i < spec.num_locations; i = next++)
                    locs[i] = generate_location(spec, i, eff);
            });
        }
        for (auto& th : pool) th.join();
    }

    // split, then channel stats from the train split only
    std::vector<int> ids(spec.num_locations);
    std::iota(ids.begin(), ids.end(), 0);
    Rng srng(derive_seed(spec.seed, 3));
    for (size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[srng.uniform_int((int64_t)i)]);
    int nval = std::max(1, (int)std::floor(spec.val_fraction * spec.num_locations));
    std::vector<int> val_ids(ids.begin(), ids.begin() + nval);
    std::vector<int> train_ids(ids.begin() + nval, ids.end());
    std::sort(val_ids.begin(), val_ids.end());
    std::sort(train_ids.begin(), train_ids.end());

    std::array<NormStats, 2> stats;
    for (int m = 0; m < 2; ++m) {
        int ch = m == 0 ? spec.modality1.channels : spec.modality2.channels;
        const int64_t hw = (int64_t)spec.H * spec.W;
        stats[m].mean.assign(ch, 0.0);
        stats[m].sigma.assign(ch, 0.0);
        for (int c = 0; c < ch; ++c) {
            double sum = 0.0, sq = 0.0;
            int64_t n = 0;
            for (int id : train_ids) {
                for (int t = 0; t < spec.seasons; ++t) {
                    const double* p = locs[id].train.images[t][m].data() + (size_t)c * hw;
                    for (int64_t i = 0; i < hw; ++i) {
                        sum += p[i];
                        sq += p[i] * p[i];
                        ++n;
                    }
                }
            }
            double mean = sum / (double)n;
            double var = std::max(0.0, sq / (double)n - mean * mean);
            stats[m].mean[c] = mean;
            stats[m].sigma[c] = std::sqrt(var);
        }
    }

    for (auto& g : locs) write_location(dir, spec, g);

    std::ofstream mf(dir + "/manifest.txt");
    if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
    char buf[64];
    auto put = [&](const std::string& k, const std::string& v) { mf << k << " = " << v << "\n"; };
    put("format", "nlds");
    put("version", "1");
    put("num_locations", std::to_string(spec.num_locations));
    put("height", std::to_string(spec.H));
    put("width", std::to_string(spec.W));
    put("classes", std::to_string(spec.C));
    put("seasons", std::to_string(spec.seasons));
    put("m1_channels", std::to_string(spec.modality1.channels));
    std::snprintf(buf, sizeof buf, "%.17g", spec.modality1.separability);
    put("m1_separability", buf);
    put("m2_channels", std::to_string(spec.modality2.channels));
    std::snprintf(buf, sizeof buf, "%.17g", spec.modality2.separability);
    put("m2_separability", buf);
    put("noise_kind", to_string(spec.noise.kind));
    std::snprintf(buf, sizeof buf, "%.17g", spec.noise.rate);
    put("noise_rate", buf);
    std::snprintf(buf, sizeof buf, "%.17g", spec.val_fraction);
    put("val_fraction", buf);
    put("seed", std::to_string(spec.seed));
    put("train_ids", fmt_ids(train_ids));
    put("val_ids", fmt_ids(val_ids));
    put("m1_mean", fmt_doubles(stats[0].mean));
    put("m1_sigma", fmt_doubles(stats[0].sigma));
    put("m2_mean", fmt_doubles(stats[1].mean));
    put("m2_sigma", fmt_doubles(stats[1].sigma));
    if (!mf) throw std::runtime_error("short write on manifest in " + dir);
}

namespace {

DatasetInfo load_manifest(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.txt");
    if (!mf) throw std::runtime_error("no manifest.txt in " + dir);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(mf, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    auto need = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw std::runtime_error("manifest missing key " + k);
        return it->second;
    };
    DatasetInfo info;
    info.spec.num_locations = std::stoi(need("num_locations"));
    info.spec.H = std::stoi(need("height"));
    info.spec.W = std::stoi(need("width"));
    info.spec.C = std::stoi(need("classes"));
    info.spec.seasons = std::stoi(need("seasons"));
    info.spec.modality1.channels = std::stoi(need("m1_channels"));
    info.spec.modality1.separability = std::stod(need("m1_separability"));
    info.spec.modality2.channels = std::stoi(need("m2_channels"));
    info.spec.modality2.separability = std::stod(need("m2_separability"));
    info.spec.noise.kind = noise_kind_from_string(need("noise_kind"));
    info.spec.noise.rate = std::stod(need("noise_rate"));
    info.spec.val_fraction = std::stod(need("val_fraction"));
    info.spec.seed = std::stoull(need("seed"));
    info.train_ids = parse_ids(need("train_ids"));
    info.val_ids = parse_ids(need("val_ids"));
    info.stats[0].mean = parse_doubles(need("m1_mean"));
    info.stats[0].sigma = parse_doubles(need("m1_sigma"));
    info.stats[1].mean = parse_doubles(need("m2_mean"));
    info.stats[1].sigma = parse_doubles(need("m2_sigma"));
    return info;
}

} // namespace

TrainSet load_dataset(const std::string& dir) {
    TrainSet ds;
    ds.info = load_manifest(dir);
    const SceneSpec& s0 = ds.info.spec;
    ds.locations.resize(s0.num_locations);
    const int64_t hw = (int64_t)s0.H * s0.W;
    for (int id = 0; id < s0.num_locations; ++id) {
        std::string path = loc_path(dir, id);
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("missing location file " + path);
        SceneSpec s;
        read_location_header(f, path, s);
        if (s.C != s0.C || s.seasons != s0.seasons || s.H != s0.H || s.W != s0.W ||
            s.modality1.channels != s0.modality1.channels ||
            s.modality2.channels != s0.modality2.channels)
            throw std::runtime_error(path + ": header disagrees with manifest");
        TrainLocation& loc = ds.locations[id];
        loc.id = id;
        loc.images.resize(s.seasons);
        loc.noisy_labels.resize(s.seasons);
        for (int t = 0; t < s.seasons; ++t) {
            std::vector<int64_t> shape;
            read_nlt1(f, shape, loc.images[t][0]);
            read_nlt1(f, shape, loc.images[t][1]);
            loc.noisy_labels[t].resize(hw);
            read_bytes(f, loc.noisy_labels[t].data(), (size_t)hw);
        }
        // the clean segment follows; the training loader never reads it
    }
    return ds;
}

EvalLabels load_clean_labels(const std::string& dir) {
    DatasetInfo info = load_manifest(dir);
    const SceneSpec& s0 = info.spec;
    EvalLabels ev;
    ev.clean.resize(s0.num_locations);
    const int64_t hw = (int64_t)s0.H * s0.W;
    for (int id = 0; id < s0.num_locations; ++id) {
        std::string path = loc_path(dir, id);
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("missing location file " + path);
        SceneSpec s;
        read_location_header(f, path, s);
        for (int t = 0; t < s.seasons; ++t) {
            std::vector<int64_t> shape;
            std::vector<double> drop;
            read_nlt1(f, shape, drop);
            read_nlt1(f, shape, drop);
            f.seekg(hw, std::ios::cur);
        }
        char flag = 0;
        read_bytes(f, &flag, 1);
        if (flag != 'C') throw std::runtime_error(path + ": clean-label segment missing");
        ev.clean[id].resize(hw);
        read_bytes(f, ev.clean[id].data(), (size_t)hw);
    }
    return ev;
}

double normalize_value(double x, double mean, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("normalize: sigma must be positive");
    double lo = mean - 2.0 * sigma;
    double v = std::clamp(x, lo, mean + 2.0 * sigma);
    return (v - lo) / (4.0 * sigma);
}

void normalize_image(std::vector<double>& img, int channels, int64_t plane, const NormStats& st) {
    if ((int)st.mean.size() != channels || (int)st.sigma.size() != channels)
        throw std::invalid_argument("normalize: stats channel count mismatch");
    if ((int64_t)img.size() != channels * plane)
        throw std::invalid_argument("normalize: image size mismatch");
    for (int c = 0; c < channels; ++c) {
        double m = st.mean[c], s = st.sigma[c];
        if (!(s > 0.0)) throw std::invalid_argument("normalize: sigma must be positive");
        double lo = m - 2.0 * s, inv = 1.0 / (4.0 * s);
        double* p = img.data() + (size_t)c * plane;
        for (int64_t i = 0; i < plane; ++i)
            p[i] = (std::clamp(p[i], lo, m + 2.0 * s) - lo) * inv;
    }
}

namespace {

// joint geometric transforms on a crop: same code path for image planes and
// label maps so correspondence cannot drift
template <typename T>
void flip_horizontal(std::vector<T>& v, int n) {
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n / 2; ++x)
            std::swap(v[(size_t)y * n + x], v[(size_t)y * n + (n - 1 - x)]);
}

template <typename T>
void rotate_quarter(std::vector<T>& v, int n, int k) {
    for (int r = 0; r < k; ++r) {
        std::vector<T> tmp(v.size());
        // 90 degrees counterclockwise: (y, x) <- (x, n-1-y)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                tmp[(size_t)y * n + x] = v[(size_t)x * n + (n - 1 - y)];
        v = std::move(tmp);
    }
}

} // namespace

AugmentedSample augment(const TrainLocation& loc, const SceneSpec& spec, int crop, Rng& rng) {
    if (crop < 1 || crop > spec.H || crop > spec.W)
        throw std::invalid_argument("augment: crop size exceeds tile");
    AugmentedSample s;
    s.size = crop;
    s.tau = (int)rng.uniform_int(spec.seasons);
    int oy = (int)rng.uniform_int(spec.H - crop + 1);
    int ox = (int)rng.uniform_int(spec.W - crop + 1);
    bool flip = rng.uniform() < 0.5;
    bool rot = rng.uniform() < 0.2;
    int k = rot ? 1 + (int)rng.uniform_int(3) : 0;

    for (int m = 0; m < 2; ++m) {
        int ch = m == 0 ? spec.modality1.channels : spec.modality2.channels;
        s.images[m].resize((size_t)ch * crop * crop);
        for (int c = 0; c < ch; ++c) {
            std::vector<double> plane((size_t)crop * crop);
            const double* src = loc.images[s.tau][m].data() + (size_t)c * spec.H * spec.W;
            for (int y = 0; y < crop; ++y)
                for (int x = 0; x < crop; ++x)
                    plane[(size_t)y * crop + x] = src[(size_t)(oy + y) * spec.W + (ox + x)];
            if (flip) flip_horizontal(plane, crop);
            if (k) rotate_quarter(plane, crop, k);
            std::copy(plane.begin(), plane.end(), s.images[m].begin() + (size_t)c * crop * crop);
        }
    }
    s.labels.resize(spec.seasons);
    for (int t = 0; t < spec.seasons; ++t) {
        s.labels[t].resize((size_t)crop * crop);
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                s.labels[t][(size_t)y * crop + x] =
                    loc.noisy_labels[t][(size_t)(oy + y) * spec.W + (ox + x)];
        if (flip) flip_horizontal(s.labels[t], crop);
        if (k) rotate_quarter(s.labels[t], crop, k);
    }
    return s;
}

double agreement_accuracy(const std::vector<uint8_t>& maskA,
                          const std::vector<uint8_t>& maskB,
                          const std::map<int, std::vector<int>>& relation) {
    if (maskA.size() != maskB.size())
        throw std::invalid_argument("agreement_accuracy: mask size mismatch");
    int64_t n = 0, hit = 0;
    for (size_t i = 0; i < maskA.size(); ++i) {
        if (maskA[i] == kUnlabeled || maskB[i] == kUnlabeled) continue;
        auto it = relation.find(maskA[i]);
        if (it == relation.end())
            throw std::invalid_argument("agreement_accuracy: class " +
                                        std::to_string(maskA[i]) + " missing from relation");
        ++n;
        const auto& allowed = it->second;
        if (std::find(allowed.begin(), allowed.end(), (int)maskB[i]) != allowed.end()) ++hit;
    }
    if (n == 0) throw std::invalid_argument("agreement_accuracy: no labeled pixels");
    return (double)hit / (double)n;
}

} // namespace nlss
