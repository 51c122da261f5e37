#pragma once

#include "w2sg/backend.hpp"
#include "w2sg/common.hpp"
#include "w2sg/dataset.hpp"
#include "w2sg/model.hpp"
#include "w2sg/protocol.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace w2sg {

enum class EnsembleKind { single, finetune_ensemble, debate_ensemble };

EnsembleKind parse_ensemble_kind(const std::string& name);
std::string ensemble_kind_name(EnsembleKind k);

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::single;
    int cardinality = 1;
    // debate_ensemble: one distinct debate seed per member; otherwise one.
    std::vector<std::uint64_t> debate_seeds;
    // finetune_ensemble: one distinct finetune seed per member; otherwise one.
    std::vector<std::uint64_t> finetune_seeds;

    void validate() const;

    // Fills the seed lists from a master seed via subseed derivation.
    static EnsembleSpec derive(EnsembleKind kind, int cardinality, std::uint64_t master_seed);
};

using TranscriptSet = std::map<std::string, Transcript>;

struct WeakEnsemble {
    EnsembleSpec spec;
    std::vector<Classifier> members;
    // Per-member mapping sample_id -> transcript over the training half.
    // finetune_ensemble members share one underlying set.
    std::vector<std::shared_ptr<const TranscriptSet>> transcript_sets;
};

// Runs the protocol for every sample under one seed. market-making ignores the
// seed's stance role and consults the supervisor instead.
TranscriptSet generate_transcripts(const std::vector<BinarySample>& samples, Backend& backend,
                                   const ProtocolConfig& protocol, std::uint64_t seed,
                                   const Classifier* mm_supervisor, int jobs);

// Builds the weak supervisor ensemble on the training half with ground-truth
// labels. debate_ensemble: one protocol pass per member (its own debate seed),
// shared finetune seed. finetune_ensemble: one shared protocol pass, one
// training run per finetune seed. single: one of each.
WeakEnsemble build_ensemble(const EnsembleSpec& spec, const std::vector<BinarySample>& train_half,
                            const ProtocolConfig& protocol, Backend& backend,
                            const TrainConfig& train_config, const ClassifierConfig& member_config,
                            const Classifier* mm_supervisor = nullptr, int jobs = 1);

// Componentwise arithmetic mean. Throws on an empty list.
SoftLabel aggregate(const std::vector<SoftLabel>& preds);

// Soft weak labels over the heldout half: each member predicts on the sample
// augmented with that member's own transcript (generated under the member's
// debate seed), and predictions are aggregated. Every heldout id is covered
// exactly once; a missing transcript is an error, never a silent fallback to
// unaugmented text.
std::map<std::string, SoftLabel> generate_weak_labels(const WeakEnsemble& ensemble,
                                                      const std::vector<BinarySample>& heldout,
                                                      const ProtocolConfig& protocol,
                                                      Backend& backend,
                                                      const Classifier* mm_supervisor = nullptr,
                                                      int jobs = 1);

// Test accuracy of the aggregated ensemble prediction, using the same
// per-member augmentation as generate_weak_labels.
double ensemble_accuracy(const WeakEnsemble& ensemble, const std::vector<BinarySample>& test,
                         const ProtocolConfig& protocol, Backend& backend,
                         const Classifier* mm_supervisor = nullptr, int jobs = 1);

// JSONL weak-label artifact: {"sample_id", "p0", "p1", "ensemble_digest"}.
void save_weak_labels_jsonl(const fs::path& path, const std::map<std::string, SoftLabel>& labels,
                            const std::string& ensemble_digest);

// Order-insensitive digest of a weak-label mapping.
std::string weak_labels_digest(const std::map<std::string, SoftLabel>& labels);

// Digest over member checkpoints (identifies the ensemble in artifacts).
std::string ensemble_digest(const WeakEnsemble& ensemble);

} // namespace w2sg
