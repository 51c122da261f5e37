#include "w2sg/ensemble.hpp"

#include "w2sg/sha256.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

namespace w2sg {

using nlohmann::json;

EnsembleKind parse_ensemble_kind(const std::string& name) {
    if (name == "single") return EnsembleKind::single;
    if (name == "finetune_ensemble") return EnsembleKind::finetune_ensemble;
    if (name == "debate_ensemble") return EnsembleKind::debate_ensemble;
    throw ConfigError("unknown ensemble kind: " + name +
                      " (expected single, finetune_ensemble, or debate_ensemble)");
}

std::string ensemble_kind_name(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::single: return "single";
        case EnsembleKind::finetune_ensemble: return "finetune_ensemble";
        case EnsembleKind::debate_ensemble: return "debate_ensemble";
    }
    return "?";
}

void EnsembleSpec::validate() const {
    if (cardinality < 1) throw ConfigError("EnsembleSpec: cardinality must be >= 1");
    if (kind == EnsembleKind::single && cardinality != 1)
        throw ConfigError("EnsembleSpec: single ensembles have cardinality 1");
    const std::size_t want_debate =
        kind == EnsembleKind::debate_ensemble ? static_cast<std::size_t>(cardinality) : 1;
    const std::size_t want_finetune =
        kind == EnsembleKind::finetune_ensemble ? static_cast<std::size_t>(cardinality) : 1;
    if (debate_seeds.size() != want_debate)
        throw ConfigError("EnsembleSpec: expected " + std::to_string(want_debate) +
                          " debate seeds, got " + std::to_string(debate_seeds.size()));
    if (finetune_seeds.size() != want_finetune)
        throw ConfigError("EnsembleSpec: expected " + std::to_string(want_finetune) +
                          " finetune seeds, got " + std::to_string(finetune_seeds.size()));
    if (std::set<std::uint64_t>(debate_seeds.begin(), debate_seeds.end()).size() !=
        debate_seeds.size())
        throw ConfigError("EnsembleSpec: debate seeds must be pairwise distinct");
    if (std::set<std::uint64_t>(finetune_seeds.begin(), finetune_seeds.end()).size() !=
        finetune_seeds.size())
        throw ConfigError("EnsembleSpec: finetune seeds must be pairwise distinct");
}

EnsembleSpec EnsembleSpec::derive(EnsembleKind kind, int cardinality, std::uint64_t master_seed) {
    EnsembleSpec spec;
    spec.kind = kind;
    spec.cardinality = kind == EnsembleKind::single ? 1 : cardinality;
    const int nd = kind == EnsembleKind::debate_ensemble ? spec.cardinality : 1;
    const int nf = kind == EnsembleKind::finetune_ensemble ? spec.cardinality : 1;
    for (int i = 0; i < nd; ++i) spec.debate_seeds.push_back(subseed(master_seed, "debate", i));
    for (int i = 0; i < nf; ++i) spec.finetune_seeds.push_back(subseed(master_seed, "finetune", i));
    spec.validate();
    return spec;
}

TranscriptSet generate_transcripts(const std::vector<BinarySample>& samples, Backend& backend,
                                   const ProtocolConfig& protocol, std::uint64_t seed,
                                   const Classifier* mm_supervisor, int jobs) {
    std::vector<Transcript> results(samples.size());
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        results[i] = run_protocol(samples[i], backend, protocol, seed, mm_supervisor);
    });
    TranscriptSet out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        out.emplace(samples[i].id, std::move(results[i]));
    return out;
}

namespace {

std::vector<TrainExample> augmented_examples(const std::vector<BinarySample>& samples,
                                             const TranscriptSet& transcripts) {
    std::vector<TrainExample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        auto it = transcripts.find(s.id);
        if (it == transcripts.end())
            throw Error("missing transcript for sample " + s.id);
        out.push_back({augment_sample(s, it->second), SoftLabel::from_hard(s.label)});
    }
    return out;
}

} // namespace

WeakEnsemble build_ensemble(const EnsembleSpec& spec, const std::vector<BinarySample>& train_half,
                            const ProtocolConfig& protocol, Backend& backend,
                            const TrainConfig& train_config, const ClassifierConfig& member_config,
                            const Classifier* mm_supervisor, int jobs) {
    spec.validate();
    WeakEnsemble ens;
    ens.spec = spec;

    auto member_train_config = [&](std::uint64_t finetune_seed) {
        TrainConfig cfg = train_config;
        cfg.shuffle_seed = hash_mix(finetune_seed, fnv1a64("shuffle"));
        return cfg;
    };
    auto member_classifier = [&](std::uint64_t finetune_seed) {
        ClassifierConfig cfg = member_config;
        cfg.init_seed = hash_mix(finetune_seed, fnv1a64("init"));
        return Classifier(cfg);
    };

    try {
        switch (spec.kind) {
            case EnsembleKind::single:
            case EnsembleKind::debate_ensemble: {
                const std::uint64_t finetune_seed = spec.finetune_seeds[0];
                for (int i = 0; i < spec.cardinality; ++i) {
                    const std::uint64_t dseed =
                        spec.kind == EnsembleKind::debate_ensemble ? spec.debate_seeds[i]
                                                                   : spec.debate_seeds[0];
                    auto transcripts = std::make_shared<TranscriptSet>(generate_transcripts(
                        train_half, backend, protocol, dseed, mm_supervisor, jobs));
                    Classifier member =
                        train(member_classifier(finetune_seed),
                              augmented_examples(train_half, *transcripts),
                              member_train_config(finetune_seed));
                    ens.members.push_back(std::move(member));
                    ens.transcript_sets.push_back(std::move(transcripts));
                }
                break;
            }
            case EnsembleKind::finetune_ensemble: {
                auto transcripts = std::make_shared<TranscriptSet>(generate_transcripts(
                    train_half, backend, protocol, spec.debate_seeds[0], mm_supervisor, jobs));
                auto examples = augmented_examples(train_half, *transcripts);
                for (int i = 0; i < spec.cardinality; ++i) {
                    const std::uint64_t fseed = spec.finetune_seeds[i];
                    Classifier member = train(member_classifier(fseed), examples,
                                              member_train_config(fseed));
                    ens.members.push_back(std::move(member));
                    ens.transcript_sets.push_back(transcripts); // shared set
                }
                break;
            }
        }
    } catch (const Error& e) {
        throw Error("build_ensemble (member " + std::to_string(ens.members.size()) +
                    "): " + e.what());
    }
    return ens;
}

SoftLabel aggregate(const std::vector<SoftLabel>& preds) {
    if (preds.empty()) throw Error("aggregate: empty prediction list");
    // Summation in a canonical order makes the mean exactly invariant under
    // member reordering.
    std::vector<SoftLabel> sorted = preds;
    std::sort(sorted.begin(), sorted.end(), [](const SoftLabel& a, const SoftLabel& b) {
        return a.p0 != b.p0 ? a.p0 < b.p0 : a.p1 < b.p1;
    });
    double s0 = 0.0, s1 = 0.0;
    for (const auto& p : sorted) {
        s0 += p.p0;
        s1 += p.p1;
    }
    const double inv = 1.0 / static_cast<double>(sorted.size());
    SoftLabel out{s0 * inv, s1 * inv};
    out.validate();
    return out;
}

namespace {

// Per-member transcripts for an evaluation set, then aggregated predictions.
std::vector<SoftLabel> ensemble_predictions(const WeakEnsemble& ensemble,
                                            const std::vector<BinarySample>& samples,
                                            const ProtocolConfig& protocol, Backend& backend,
                                            const Classifier* mm_supervisor, int jobs) {
    const EnsembleSpec& spec = ensemble.spec;
    if (ensemble.members.size() != static_cast<std::size_t>(spec.cardinality))
        throw Error("ensemble not built: member count mismatch");

    std::vector<std::vector<SoftLabel>> member_preds(ensemble.members.size());
    std::shared_ptr<TranscriptSet> shared;
    for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
        const std::uint64_t dseed = spec.kind == EnsembleKind::debate_ensemble
                                        ? spec.debate_seeds[m]
                                        : spec.debate_seeds[0];
        std::shared_ptr<TranscriptSet> transcripts;
        if (spec.kind != EnsembleKind::debate_ensemble && shared) {
            transcripts = shared;
        } else {
            transcripts = std::make_shared<TranscriptSet>(
                generate_transcripts(samples, backend, protocol, dseed, mm_supervisor, jobs));
            if (spec.kind != EnsembleKind::debate_ensemble) shared = transcripts;
        }
        member_preds[m].resize(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto it = transcripts->find(samples[i].id);
            if (it == transcripts->end())
                throw Error("missing transcript for sample " + samples[i].id + " (member " +
                            std::to_string(m) + ")");
            member_preds[m][i] =
                ensemble.members[m].predict(augment_sample(samples[i], it->second));
        }
    }

    std::vector<SoftLabel> out(samples.size());
    std::vector<SoftLabel> column(ensemble.members.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t m = 0; m < ensemble.members.size(); ++m) column[m] = member_preds[m][i];
        out[i] = aggregate(column);
    }
    return out;
}

} // namespace

std::map<std::string, SoftLabel> generate_weak_labels(const WeakEnsemble& ensemble,
                                                      const std::vector<BinarySample>& heldout,
                                                      const ProtocolConfig& protocol,
                                                      Backend& backend,
                                                      const Classifier* mm_supervisor, int jobs) {
    auto preds = ensemble_predictions(ensemble, heldout, protocol, backend, mm_supervisor, jobs);
    std::map<std::string, SoftLabel> out;
    for (std::size_t i = 0; i < heldout.size(); ++i) out.emplace(heldout[i].id, preds[i]);
    if (out.size() != heldout.size()) throw Error("duplicate sample ids in heldout half");
    return out;
}

double ensemble_accuracy(const WeakEnsemble& ensemble, const std::vector<BinarySample>& test,
                         const ProtocolConfig& protocol, Backend& backend,
                         const Classifier* mm_supervisor, int jobs) {
    if (test.empty()) throw Error("ensemble_accuracy: empty test set");
    auto preds = ensemble_predictions(ensemble, test, protocol, backend, mm_supervisor, jobs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        int label = preds[i].p1 > preds[i].p0 ? 1 : 0;
        if (label == test[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

std::string weak_label_line(const std::string& id, const SoftLabel& p,
                            const std::string& ens_digest) {
    json j{{"sample_id", id}, {"p0", p.p0}, {"p1", p.p1}, {"ensemble_digest", ens_digest}};
    return j.dump();
}

} // namespace

void save_weak_labels_jsonl(const fs::path& path, const std::map<std::string, SoftLabel>& labels,
                            const std::string& ens_digest) {
    std::ostringstream out;
    for (const auto& [id, p] : labels) out << weak_label_line(id, p, ens_digest) << "\n";
    write_text_file_atomic(path, out.str());
}

std::string weak_labels_digest(const std::map<std::string, SoftLabel>& labels) {
    Sha256 h;
    for (const auto& [id, p] : labels) {
        h.update(weak_label_line(id, p, ""));
        h.update("\n");
    }
    return h.hex_digest();
}

std::string ensemble_digest(const WeakEnsemble& ensemble) {
    Sha256 h;
    for (const auto& m : ensemble.members) {
        h.update(classifier_digest(m));
        h.update("\n");
    }
    return h.hex_digest();
}

} // namespace w2sg
