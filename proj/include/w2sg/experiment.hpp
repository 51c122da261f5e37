#pragma once

#include "w2sg/backend.hpp"
#include "w2sg/cache.hpp"
#include "w2sg/common.hpp"
#include "w2sg/dataset.hpp"
#include "w2sg/ensemble.hpp"
#include "w2sg/model.hpp"
#include "w2sg/protocol.hpp"
#include "w2sg/synthetic.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace w2sg {

// Performance gap recovered: (w2s - weak) / (ceiling - weak). May exceed 1 or
// go negative; throws when ceiling == weak.
double pgr(double weak, double w2s, double ceiling);

enum class BackendKind { mock, wire };

struct BackendSettings {
    BackendKind kind = BackendKind::mock;
    std::string base_url = "http://127.0.0.1:8080";
    std::string api_key;
    std::string model_id = "mock";
    double temperature = 0.7;
    int max_tokens = 512;
    RetryPolicy retry;
    int max_inflight = 8;
    MockDebaterConfig mock;
};

enum class SupervisionMode { naive, protocol };

struct SupervisionSettings {
    SupervisionMode mode = SupervisionMode::protocol;
    EnsembleKind ensemble_kind = EnsembleKind::debate_ensemble;
    int cardinality = 4;
};

struct DatasetSettings {
    enum class Kind { synthetic, jsonl };
    Kind kind = Kind::synthetic;
    fs::path path;
    DatasetFormat format = DatasetFormat::multiple_choice;
    SyntheticTaskSpec synthetic;
};

struct SplitSettings {
    std::size_t max_n = 20000;
    double test_fraction = 0.25;
};

struct ModelSettings {
    std::uint32_t feature_dim = 1u << 14;
    std::uint32_t hidden_width = 0;
};

struct ExperimentConfig {
    std::string name = "run";
    DatasetSettings dataset;
    SplitSettings split;

    ProtocolKind protocol = ProtocolKind::debate;
    int num_turns = 3;
    std::string task_description = "There is a question, followed by an answer.";
    fs::path template_dir; // empty = built-in templates

    SupervisionSettings supervision;
    ModelSettings weak_model{1u << 14, 0};
    ModelSettings strong_model{1u << 18, 64};
    TrainConfig weak_train{2, 32, 0.5, LossKind::xent, 0.75, 0.5, 0};
    TrainConfig strong_train{2, 32, 0.1, LossKind::xent, 0.75, 0.5, 0};
    LossKind student_loss = LossKind::xent;

    BackendSettings backend;
    fs::path cache_dir; // empty = no response cache

    std::uint64_t master_seed = 1;
    fs::path out_dir = "out";
    int jobs = 1;
    bool save_checkpoints = false;
    bool save_transcripts = false;
    bool save_weak_labels = false;
    // Train the strong student on transcript-augmented heldout samples
    // (member 0's transcripts) instead of plain ones.
    bool augment_student = false;
    // Re-randomize stance assignment per ensemble member (true) or share one
    // stance assignment and only re-seed text sampling (false).
    bool restance_per_member = true;
};

// One experiment cell. weak_acc is always the transcript-free naively
// finetuned weak model (the PGR baseline); supervisor_acc is the supervisor
// actually used for weak labels. pgr is NaN when ceiling == weak.
struct ResultRecord {
    std::string label = "run";
    double weak_acc = 0.0;
    double supervisor_acc = 0.0;
    double w2s_acc = 0.0;
    double ceiling_acc = 0.0;
    double pgr = 0.0;
    std::string config_digest;
    std::map<std::string, double> runtimes_s; // per phase; excluded from manifests
};

struct PipelineOutput {
    ResultRecord record;
    nlohmann::json manifest;
};

// Semantic configuration dump: everything that affects results, nothing that
// only affects where or how fast they are produced (out_dir, jobs, cache_dir,
// save_* flags). Manifests and config digests are built from this, which is
// what makes reruns byte-comparable.
nlohmann::json semantic_config_json(const ExperimentConfig& cfg);

// Loads or generates the configured dataset, converts it to binary samples and
// splits it, all under seeds derived from master_seed.
SplitDataset build_split(const ExperimentConfig& cfg);

// Executes the three-phase pipeline: weak supervisor on the train half
// (ground truth, transcript-augmented when supervision.mode == protocol),
// weak labels on the heldout half, strong student on those labels, strong
// ceiling on ground truth, all evaluated on the held-out test set. Writes
// manifest.json, record.json and timings.json under out_dir/<name>/.
// Phase failures raise PipelineError with the phase tag.
PipelineOutput run_pipeline(const ExperimentConfig& cfg);

enum class AblationDimension { protocol, ensemble_kind, cardinality, turns };

AblationDimension parse_ablation_dimension(const std::string& name);
std::string ablation_dimension_name(AblationDimension d);

// One pipeline run per value with all other settings and seeds fixed.
// Values are strings ("debate", "4", ...) validated per dimension.
std::vector<ResultRecord> run_ablation(const ExperimentConfig& cfg, AblationDimension dimension,
                                       const std::vector<std::string>& values);

enum class ReportLayout { main_table, ablation_table };

ReportLayout parse_report_layout(const std::string& name);

// Writes <stem>.csv (lossless), <stem>.json and <stem>.md (accuracy and PGR
// as percentages with one decimal) into out_dir.
void write_report(const std::vector<ResultRecord>& records, ReportLayout layout,
                  const fs::path& out_dir, const std::string& stem);

// Record list persistence (lossless round trip).
void save_records_json(const fs::path& path, const std::vector<ResultRecord>& records);
std::vector<ResultRecord> load_records_json(const fs::path& path);
void save_records_csv(const fs::path& path, const std::vector<ResultRecord>& records);
std::vector<ResultRecord> load_records_csv(const fs::path& path);

} // namespace w2sg
