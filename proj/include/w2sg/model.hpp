#pragma once

#include "w2sg/common.hpp"
#include "w2sg/dataset.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace w2sg {

// 2-class probability distribution; the unit of weak supervision.
struct SoftLabel {
    double p0 = 0.5;
    double p1 = 0.5;

    static SoftLabel from_hard(int label) { return label == 1 ? SoftLabel{0.0, 1.0} : SoftLabel{1.0, 0.0}; }
    // p0,p1 >= 0 and p0+p1 = 1 within 1e-9.
    void validate() const;
};

// Sparse hashed n-gram counts. indices strictly increasing, counts > 0.
struct FeatureVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> counts;
    std::uint32_t dim = 0;
};

// Tokenization: lowercase, split on non-alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

// Hashed unigram + bigram counts. Slot for token t is
//   fnv1a64(le64(hash_seed) || t) & (dim - 1)
// with bigrams hashed as "first\x1fsecond". dim must be a power of two.
FeatureVector featurize(std::string_view text, std::uint32_t feature_dim, std::uint64_t hash_seed);

enum class CapacityTier { weak, strong };

struct ClassifierConfig {
    CapacityTier tier = CapacityTier::weak;
    std::uint32_t feature_dim = 1u << 14;
    std::uint32_t hidden_width = 0; // 0 = pure linear head
    std::uint64_t init_seed = 0;
    std::uint64_t hash_seed = 0;
};

// Text classifier with a 2-output head: either linear over hashed features or
// one tanh hidden layer. Features are L2-normalized before the forward pass.
// Linear weights initialize to zero; hidden layers get seeded normal init.
class Classifier {
public:
    Classifier() = default;
    explicit Classifier(const ClassifierConfig& cfg);

    const ClassifierConfig& config() const { return cfg_; }
    bool has_hidden() const { return cfg_.hidden_width > 0; }

    SoftLabel predict(std::string_view text) const;
    SoftLabel predict_features(const FeatureVector& f) const;

    // Raw logits before softmax (normalized features).
    std::array<double, 2> logits(const FeatureVector& f) const;

    // Parameter storage, exposed for training, persistence and tests.
    // Linear:  out_w has feature_dim*2 entries, (feature i, class c) at i*2+c.
    // Hidden:  hid_w has feature_dim*width, (i, j) at i*width+j; out_w has
    //          width*2, (j, c) at j*2+c.
    std::vector<double>& out_w() { return out_w_; }
    std::vector<double>& out_b() { return out_b_; }
    std::vector<double>& hid_w() { return hid_w_; }
    std::vector<double>& hid_b() { return hid_b_; }
    const std::vector<double>& out_w() const { return out_w_; }
    const std::vector<double>& out_b() const { return out_b_; }
    const std::vector<double>& hid_w() const { return hid_w_; }
    const std::vector<double>& hid_b() const { return hid_b_; }

private:
    ClassifierConfig cfg_;
    std::vector<double> out_w_, out_b_, hid_w_, hid_b_;
};

// Numerically stable 2-way softmax; probabilities clamped into
// [1e-12, 1 - 1e-12] and renormalized.
SoftLabel softmax2(double z0, double z1);

enum class LossKind { xent, aux_conf, product };

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind k);

// One-hot argmax of p with ties broken to class 0.
SoftLabel harden(const SoftLabel& p);

// normalize(weak ⊙ pred); throws on an identically-zero product.
SoftLabel product_target(const SoftLabel& pred, const SoftLabel& weak);

// Cross entropy −Σ target·log(pred). pred components are clamped to 1e-12
// before the log; negative or non-finite components raise an error.
double loss_xent(const SoftLabel& pred, const SoftLabel& target);

// (1−alpha)·xent(pred, weak) + alpha·xent(pred, harden(pred)), hardened
// target treated as a constant.
double loss_aux_conf(const SoftLabel& pred, const SoftLabel& weak, double alpha);

// xent against product_target(pred, weak), target treated as a constant.
double loss_product(const SoftLabel& pred, const SoftLabel& weak);

// The constant cross-entropy target whose gradient p − target reproduces the
// selected loss: weak for xent, (1−a)·weak + a·harden(pred) for aux_conf,
// product_target for product.
SoftLabel effective_target(LossKind kind, const SoftLabel& pred, const SoftLabel& weak,
                           double alpha);

// Dense per-sample gradient of xent(predict(f), target) w.r.t. all
// parameters; shapes match the classifier's parameter vectors. Used by the
// finite-difference suite and the single-step training equivalence test.
struct ParamGradients {
    std::vector<double> out_w, out_b, hid_w, hid_b;
};
ParamGradients param_gradients(const Classifier& c, const FeatureVector& f,
                               const SoftLabel& target);

struct TrainConfig {
    int epochs = 2;
    int batch_size = 32;
    double learning_rate = 0.5;
    LossKind loss_kind = LossKind::xent;
    double alpha_max = 0.75;
    double alpha_warmup_fraction = 0.5;
    std::uint64_t shuffle_seed = 0;
};

inline double default_learning_rate(std::uint32_t hidden_width) {
    return hidden_width > 0 ? 0.1 : 0.5;
}

struct TrainExample {
    std::string text;
    SoftLabel target;
};

struct TrainStats {
    std::size_t steps = 0;
    double final_mean_loss = 0.0;
};

// Mini-batch gradient descent, seeded shuffle per epoch, constant learning
// rate. For aux_conf, alpha ramps linearly from 0 to alpha_max over the first
// alpha_warmup_fraction of total steps, then holds. Bitwise deterministic
// given (classifier init, cfg). Throws TrainError naming step and batch on a
// non-finite loss.
Classifier train(Classifier c, const std::vector<TrainExample>& data, const TrainConfig& cfg,
                 TrainStats* stats = nullptr);

// Fraction of samples whose argmax prediction (ties to class 0) matches the
// label.
double evaluate_accuracy(const Classifier& c, const std::vector<BinarySample>& test);

// Versioned binary checkpoint (magic, config, little-endian doubles).
void save_classifier(const Classifier& c, const fs::path& path);
Classifier load_classifier(const fs::path& path);

// sha256 over the canonical checkpoint byte stream.
std::string classifier_digest(const Classifier& c);

} // namespace w2sg
