#include "w2sg/model.hpp"

#include "w2sg/sha256.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace w2sg {

namespace {

constexpr double kProbFloor = 1e-12;

bool is_power_of_two(std::uint32_t x) { return x != 0 && (x & (x - 1)) == 0; }

std::uint32_t feature_slot(std::string_view token, std::uint32_t dim, std::uint64_t hash_seed) {
    char prefix[8];
    for (int i = 0; i < 8; ++i) prefix[i] = static_cast<char>(hash_seed >> (8 * i));
    std::uint64_t h = fnv1a64(std::string_view(prefix, 8));
    h = fnv1a64(token, h);
    return static_cast<std::uint32_t>(h & (dim - 1));
}

// Scaled copy of the counts with unit L2 norm (empty vectors pass through).
std::vector<double> l2_normalized(const FeatureVector& f) {
    double sq = 0.0;
    for (double c : f.counts) sq += c * c;
    std::vector<double> out = f.counts;
    if (sq > 0.0) {
        double inv = 1.0 / std::sqrt(sq);
        for (double& c : out) c *= inv;
    }
    return out;
}

} // namespace

void SoftLabel::validate() const {
    if (!(p0 >= 0.0) || !(p1 >= 0.0) || !std::isfinite(p0) || !std::isfinite(p1))
        throw Error("SoftLabel: components must be finite and non-negative");
    if (std::abs(p0 + p1 - 1.0) > 1e-9)
        throw Error("SoftLabel: components must sum to 1 within 1e-9");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        char lc = 0;
        if (c >= 'a' && c <= 'z') lc = static_cast<char>(c);
        else if (c >= 'A' && c <= 'Z') lc = static_cast<char>(c - 'A' + 'a');
        else if (c >= '0' && c <= '9') lc = static_cast<char>(c);
        if (lc != 0) {
            cur.push_back(lc);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

FeatureVector featurize(std::string_view text, std::uint32_t feature_dim, std::uint64_t hash_seed) {
    if (!is_power_of_two(feature_dim)) throw Error("featurize: feature_dim must be a power of two");
    std::vector<std::string> tokens = tokenize(text);
    std::map<std::uint32_t, double> acc;
    for (const auto& t : tokens) acc[feature_slot(t, feature_dim, hash_seed)] += 1.0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        std::string bigram = tokens[i];
        bigram.push_back('\x1f');
        bigram += tokens[i + 1];
        acc[feature_slot(bigram, feature_dim, hash_seed)] += 1.0;
    }
    FeatureVector f;
    f.dim = feature_dim;
    f.indices.reserve(acc.size());
    f.counts.reserve(acc.size());
    for (const auto& [idx, count] : acc) {
        f.indices.push_back(idx);
        f.counts.push_back(count);
    }
    return f;
}

Classifier::Classifier(const ClassifierConfig& cfg) : cfg_(cfg) {
    if (!is_power_of_two(cfg.feature_dim))
        throw Error("Classifier: feature_dim must be a power of two");
    if (cfg.hidden_width == 0) {
        out_w_.assign(static_cast<std::size_t>(cfg.feature_dim) * 2, 0.0);
        out_b_.assign(2, 0.0);
    } else {
        const std::size_t width = cfg.hidden_width;
        Rng rng(hash_mix(cfg.init_seed, fnv1a64("classifier-init")));
        hid_w_.resize(static_cast<std::size_t>(cfg.feature_dim) * width);
        for (double& v : hid_w_) v = rng.normal();
        hid_b_.assign(width, 0.0);
        const double out_scale = 1.0 / std::sqrt(static_cast<double>(width));
        out_w_.resize(width * 2);
        for (double& v : out_w_) v = rng.normal() * out_scale;
        out_b_.assign(2, 0.0);
    }
}

SoftLabel softmax2(double z0, double z1) {
    double m = std::max(z0, z1);
    double e0 = std::exp(z0 - m);
    double e1 = std::exp(z1 - m);
    double p0 = e0 / (e0 + e1);
    p0 = std::min(std::max(p0, kProbFloor), 1.0 - kProbFloor);
    return SoftLabel{p0, 1.0 - p0};
}

std::array<double, 2> Classifier::logits(const FeatureVector& f) const {
    if (f.dim != cfg_.feature_dim) throw Error("Classifier: feature_dim mismatch");
    std::vector<double> x = l2_normalized(f);
    std::array<double, 2> z{out_b_.empty() ? 0.0 : out_b_[0], out_b_.empty() ? 0.0 : out_b_[1]};
    if (cfg_.hidden_width == 0) {
        for (std::size_t k = 0; k < f.indices.size(); ++k) {
            const std::size_t base = static_cast<std::size_t>(f.indices[k]) * 2;
            z[0] += out_w_[base] * x[k];
            z[1] += out_w_[base + 1] * x[k];
        }
    } else {
        const std::size_t width = cfg_.hidden_width;
        std::vector<double> h(hid_b_);
        for (std::size_t k = 0; k < f.indices.size(); ++k) {
            const double xv = x[k];
            const double* col = &hid_w_[static_cast<std::size_t>(f.indices[k]) * width];
            for (std::size_t j = 0; j < width; ++j) h[j] += col[j] * xv;
        }
        for (std::size_t j = 0; j < width; ++j) {
            const double hj = std::tanh(h[j]);
            z[0] += out_w_[j * 2] * hj;
            z[1] += out_w_[j * 2 + 1] * hj;
        }
    }
    return z;
}

SoftLabel Classifier::predict_features(const FeatureVector& f) const {
    auto z = logits(f);
    return softmax2(z[0], z[1]);
}

SoftLabel Classifier::predict(std::string_view text) const {
    return predict_features(featurize(text, cfg_.feature_dim, cfg_.hash_seed));
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "xent") return LossKind::xent;
    if (name == "aux_conf") return LossKind::aux_conf;
    if (name == "product") return LossKind::product;
    throw ConfigError("unknown loss kind: " + name + " (expected xent, aux_conf, or product)");
}

std::string loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::xent: return "xent";
        case LossKind::aux_conf: return "aux_conf";
        case LossKind::product: return "product";
    }
    return "?";
}

SoftLabel harden(const SoftLabel& p) {
    return p.p1 > p.p0 ? SoftLabel{0.0, 1.0} : SoftLabel{1.0, 0.0};
}

SoftLabel product_target(const SoftLabel& pred, const SoftLabel& weak) {
    double q0 = weak.p0 * pred.p0;
    double q1 = weak.p1 * pred.p1;
    double s = q0 + q1;
    if (s <= 0.0) throw Error("product loss: degenerate target (weak ⊙ pred is zero)");
    return SoftLabel{q0 / s, q1 / s};
}

double loss_xent(const SoftLabel& pred, const SoftLabel& target) {
    if (!std::isfinite(pred.p0) || !std::isfinite(pred.p1) || pred.p0 < 0.0 || pred.p1 < 0.0)
        throw Error("cross entropy: prediction components must be finite and non-negative");
    double lp0 = std::log(std::max(pred.p0, kProbFloor));
    double lp1 = std::log(std::max(pred.p1, kProbFloor));
    double loss = 0.0;
    if (target.p0 != 0.0) loss -= target.p0 * lp0;
    if (target.p1 != 0.0) loss -= target.p1 * lp1;
    return loss;
}

double loss_aux_conf(const SoftLabel& pred, const SoftLabel& weak, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw Error("aux_conf loss: alpha must be in [0, 1]");
    return (1.0 - alpha) * loss_xent(pred, weak) + alpha * loss_xent(pred, harden(pred));
}

double loss_product(const SoftLabel& pred, const SoftLabel& weak) {
    return loss_xent(pred, product_target(pred, weak));
}

SoftLabel effective_target(LossKind kind, const SoftLabel& pred, const SoftLabel& weak,
                           double alpha) {
    switch (kind) {
        case LossKind::xent: return weak;
        case LossKind::aux_conf: {
            SoftLabel h = harden(pred);
            return SoftLabel{(1.0 - alpha) * weak.p0 + alpha * h.p0,
                             (1.0 - alpha) * weak.p1 + alpha * h.p1};
        }
        case LossKind::product: return product_target(pred, weak);
    }
    throw Error("effective_target: bad loss kind");
}

ParamGradients param_gradients(const Classifier& c, const FeatureVector& f,
                               const SoftLabel& target) {
    const auto& cfg = c.config();
    std::vector<double> x = l2_normalized(f);
    ParamGradients g;
    g.out_b.assign(2, 0.0);
    SoftLabel p = c.predict_features(f);
    const double dz[2] = {p.p0 - target.p0, p.p1 - target.p1};
    g.out_b[0] = dz[0];
    g.out_b[1] = dz[1];
    if (cfg.hidden_width == 0) {
        g.out_w.assign(static_cast<std::size_t>(cfg.feature_dim) * 2, 0.0);
        for (std::size_t k = 0; k < f.indices.size(); ++k) {
            const std::size_t base = static_cast<std::size_t>(f.indices[k]) * 2;
            g.out_w[base] = dz[0] * x[k];
            g.out_w[base + 1] = dz[1] * x[k];
        }
        return g;
    }
    const std::size_t width = cfg.hidden_width;
    std::vector<double> pre(c.hid_b());
    for (std::size_t k = 0; k < f.indices.size(); ++k) {
        const double xv = x[k];
        const double* col = &c.hid_w()[static_cast<std::size_t>(f.indices[k]) * width];
        for (std::size_t j = 0; j < width; ++j) pre[j] += col[j] * xv;
    }
    std::vector<double> h(width), da(width);
    for (std::size_t j = 0; j < width; ++j) h[j] = std::tanh(pre[j]);
    g.out_w.assign(width * 2, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
        g.out_w[j * 2] = dz[0] * h[j];
        g.out_w[j * 2 + 1] = dz[1] * h[j];
        const double dh = c.out_w()[j * 2] * dz[0] + c.out_w()[j * 2 + 1] * dz[1];
        da[j] = dh * (1.0 - h[j] * h[j]);
    }
    g.hid_w.assign(static_cast<std::size_t>(cfg.feature_dim) * width, 0.0);
    g.hid_b = da;
    for (std::size_t k = 0; k < f.indices.size(); ++k) {
        const double xv = x[k];
        double* col = &g.hid_w[static_cast<std::size_t>(f.indices[k]) * width];
        for (std::size_t j = 0; j < width; ++j) col[j] = da[j] * xv;
    }
    return g;
}

Classifier train(Classifier c, const std::vector<TrainExample>& data, const TrainConfig& cfg,
                 TrainStats* stats) {
    if (data.empty()) throw TrainError("train: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw TrainError("train: epochs and batch_size must be >= 1");
    for (const auto& ex : data) ex.target.validate();

    const auto& ccfg = c.config();
    const std::size_t n = data.size();
    const std::size_t width = ccfg.hidden_width;

    std::vector<FeatureVector> feats(n);
    std::vector<std::vector<double>> xs(n);
    for (std::size_t i = 0; i < n; ++i) {
        feats[i] = featurize(data[i].text, ccfg.feature_dim, ccfg.hash_seed);
        xs[i] = l2_normalized(feats[i]);
    }

    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(cfg.epochs);
    const std::size_t warmup_steps =
        static_cast<std::size_t>(cfg.alpha_warmup_fraction * static_cast<double>(total_steps));

    std::size_t step = 0;
    double last_loss = 0.0;
    std::vector<std::size_t> perm(n);

    // Per-sample scratch reused across batches.
    std::vector<std::array<double, 2>> dzs(cfg.batch_size);
    std::vector<std::vector<double>> hs, das;
    if (width > 0) {
        hs.assign(cfg.batch_size, std::vector<double>(width));
        das.assign(cfg.batch_size, std::vector<double>(width));
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), 0);
        Rng shuffle_rng(hash_mix(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(perm);

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t begin = b * static_cast<std::size_t>(cfg.batch_size);
            const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t bn = end - begin;

            double alpha = 0.0;
            if (cfg.loss_kind == LossKind::aux_conf) {
                alpha = warmup_steps == 0
                            ? cfg.alpha_max
                            : cfg.alpha_max * std::min(1.0, static_cast<double>(step) /
                                                                static_cast<double>(warmup_steps));
            }

            // Forward pass for the whole batch against frozen parameters.
            double batch_loss = 0.0;
            for (std::size_t s = 0; s < bn; ++s) {
                const std::size_t i = perm[begin + s];
                const FeatureVector& f = feats[i];
                const std::vector<double>& x = xs[i];
                double z0, z1;
                if (width == 0) {
                    z0 = c.out_b()[0];
                    z1 = c.out_b()[1];
                    for (std::size_t k = 0; k < f.indices.size(); ++k) {
                        const std::size_t base = static_cast<std::size_t>(f.indices[k]) * 2;
                        z0 += c.out_w()[base] * x[k];
                        z1 += c.out_w()[base + 1] * x[k];
                    }
                } else {
                    std::vector<double>& h = hs[s];
                    std::copy(c.hid_b().begin(), c.hid_b().end(), h.begin());
                    for (std::size_t k = 0; k < f.indices.size(); ++k) {
                        const double xv = x[k];
                        const double* col = &c.hid_w()[static_cast<std::size_t>(f.indices[k]) * width];
                        for (std::size_t j = 0; j < width; ++j) h[j] += col[j] * xv;
                    }
                    z0 = c.out_b()[0];
                    z1 = c.out_b()[1];
                    for (std::size_t j = 0; j < width; ++j) {
                        h[j] = std::tanh(h[j]);
                        z0 += c.out_w()[j * 2] * h[j];
                        z1 += c.out_w()[j * 2 + 1] * h[j];
                    }
                }
                auto abort_at = [&](const std::string& why) {
                    return TrainError("train: " + why + " at step " + std::to_string(step) +
                                      ", batch " + std::to_string(b) + " (epoch " +
                                      std::to_string(epoch) + ")");
                };
                if (!std::isfinite(z0) || !std::isfinite(z1)) throw abort_at("non-finite loss");
                const SoftLabel p = softmax2(z0, z1);
                const SoftLabel& weak = data[i].target;
                double sample_loss;
                SoftLabel t;
                try {
                    switch (cfg.loss_kind) {
                        case LossKind::xent: sample_loss = loss_xent(p, weak); break;
                        case LossKind::aux_conf:
                            sample_loss = loss_aux_conf(p, weak, alpha);
                            break;
                        case LossKind::product: sample_loss = loss_product(p, weak); break;
                        default: throw TrainError("train: bad loss kind");
                    }
                    t = effective_target(cfg.loss_kind, p, weak, alpha);
                } catch (const TrainError&) {
                    throw;
                } catch (const Error& e) {
                    throw abort_at(e.what());
                }
                batch_loss += sample_loss;
                dzs[s] = {p.p0 - t.p0, p.p1 - t.p1};
                if (width > 0) {
                    std::vector<double>& da = das[s];
                    const std::vector<double>& h = hs[s];
                    for (std::size_t j = 0; j < width; ++j) {
                        const double dh = c.out_w()[j * 2] * dzs[s][0] +
                                          c.out_w()[j * 2 + 1] * dzs[s][1];
                        da[j] = dh * (1.0 - h[j] * h[j]);
                    }
                }
            }
            batch_loss /= static_cast<double>(bn);
            if (!std::isfinite(batch_loss))
                throw TrainError("train: non-finite loss at step " + std::to_string(step) +
                                 ", batch " + std::to_string(b) + " (epoch " +
                                 std::to_string(epoch) + ")");
            last_loss = batch_loss;

            // Apply the mean-batch gradient.
            const double scale = cfg.learning_rate / static_cast<double>(bn);
            for (std::size_t s = 0; s < bn; ++s) {
                const std::size_t i = perm[begin + s];
                const FeatureVector& f = feats[i];
                const std::vector<double>& x = xs[i];
                const auto& dz = dzs[s];
                if (width == 0) {
                    for (std::size_t k = 0; k < f.indices.size(); ++k) {
                        const std::size_t base = static_cast<std::size_t>(f.indices[k]) * 2;
                        c.out_w()[base] -= scale * dz[0] * x[k];
                        c.out_w()[base + 1] -= scale * dz[1] * x[k];
                    }
                    c.out_b()[0] -= scale * dz[0];
                    c.out_b()[1] -= scale * dz[1];
                } else {
                    const std::vector<double>& h = hs[s];
                    const std::vector<double>& da = das[s];
                    for (std::size_t j = 0; j < width; ++j) {
                        c.out_w()[j * 2] -= scale * dz[0] * h[j];
                        c.out_w()[j * 2 + 1] -= scale * dz[1] * h[j];
                        c.hid_b()[j] -= scale * da[j];
                    }
                    c.out_b()[0] -= scale * dz[0];
                    c.out_b()[1] -= scale * dz[1];
                    for (std::size_t k = 0; k < f.indices.size(); ++k) {
                        const double sx = scale * x[k];
                        double* col = &c.hid_w()[static_cast<std::size_t>(f.indices[k]) * width];
                        for (std::size_t j = 0; j < width; ++j) col[j] -= sx * da[j];
                    }
                }
            }
            ++step;
        }
    }
    if (stats) {
        stats->steps = step;
        stats->final_mean_loss = last_loss;
    }
    return c;
}

double evaluate_accuracy(const Classifier& c, const std::vector<BinarySample>& test) {
    if (test.empty()) throw Error("evaluate_accuracy: empty test set");
    std::size_t correct = 0;
    for (const auto& s : test) {
        SoftLabel p = c.predict(plain_text(s));
        int pred = p.p1 > p.p0 ? 1 : 0;
        if (pred == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

constexpr char kCkptMagic[8] = {'W', '2', 'S', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}
void put_doubles(std::string& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        put_u64(out, bits);
    }
}

struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;
    std::uint32_t u32() {
        if (pos + 4 > bytes.size()) throw ParseError("checkpoint: truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        if (pos + 8 > bytes.size()) throw ParseError("checkpoint: truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    std::vector<double> doubles() {
        std::uint64_t count = u64();
        std::vector<double> v(count);
        for (auto& d : v) {
            std::uint64_t bits = u64();
            std::memcpy(&d, &bits, 8);
        }
        return v;
    }
};

std::string checkpoint_bytes(const Classifier& c) {
    std::string out;
    out.append(kCkptMagic, 8);
    put_u32(out, kCkptVersion);
    put_u32(out, c.config().tier == CapacityTier::strong ? 1 : 0);
    put_u32(out, c.config().feature_dim);
    put_u32(out, c.config().hidden_width);
    put_u64(out, c.config().init_seed);
    put_u64(out, c.config().hash_seed);
    put_doubles(out, c.out_w());
    put_doubles(out, c.out_b());
    put_doubles(out, c.hid_w());
    put_doubles(out, c.hid_b());
    return out;
}

} // namespace

void save_classifier(const Classifier& c, const fs::path& path) {
    write_text_file_atomic(path, checkpoint_bytes(c));
}

Classifier load_classifier(const fs::path& path) {
    std::string bytes = read_text_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic in " + path.string());
    ByteReader r{bytes, 8};
    std::uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    ClassifierConfig cfg;
    cfg.tier = r.u32() == 1 ? CapacityTier::strong : CapacityTier::weak;
    cfg.feature_dim = r.u32();
    cfg.hidden_width = r.u32();
    cfg.init_seed = r.u64();
    cfg.hash_seed = r.u64();
    Classifier c(cfg);
    c.out_w() = r.doubles();
    c.out_b() = r.doubles();
    c.hid_w() = r.doubles();
    c.hid_b() = r.doubles();
    return c;
}

std::string classifier_digest(const Classifier& c) {
    return sha256_hex(checkpoint_bytes(c));
}

} // namespace w2sg
