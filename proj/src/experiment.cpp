#include "w2sg/experiment.hpp"

#include "w2sg/sha256.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <type_traits>

namespace w2sg {

using nlohmann::json;

double pgr(double weak, double w2s, double ceiling) {
    if (ceiling == weak) throw Error("PGR undefined: strong ceiling equals weak accuracy");
    return (w2s - weak) / (ceiling - weak);
}

AblationDimension parse_ablation_dimension(const std::string& name) {
    if (name == "protocol") return AblationDimension::protocol;
    if (name == "ensemble_kind") return AblationDimension::ensemble_kind;
    if (name == "cardinality") return AblationDimension::cardinality;
    if (name == "turns") return AblationDimension::turns;
    throw ConfigError("unknown ablation dimension: " + name +
                      " (expected protocol, ensemble_kind, cardinality, or turns)");
}

std::string ablation_dimension_name(AblationDimension d) {
    switch (d) {
        case AblationDimension::protocol: return "protocol";
        case AblationDimension::ensemble_kind: return "ensemble_kind";
        case AblationDimension::cardinality: return "cardinality";
        case AblationDimension::turns: return "turns";
    }
    return "?";
}

ReportLayout parse_report_layout(const std::string& name) {
    if (name == "main_table") return ReportLayout::main_table;
    if (name == "ablation_table") return ReportLayout::ablation_table;
    throw ConfigError("unknown report layout: " + name +
                      " (expected main_table or ablation_table)");
}

// ---- pipeline ----------------------------------------------------------------

namespace {

std::unique_ptr<Backend> make_backend(const BackendSettings& s) {
    if (s.kind == BackendKind::mock) return std::make_unique<MockBackend>(s.mock);
    std::string key = s.api_key;
    if (const char* env = std::getenv("W2SG_API_KEY"); env && *env) key = env;
    return std::make_unique<WireBackend>(s.base_url, key, s.retry, s.max_inflight);
}

struct PhaseTimer {
    std::map<std::string, double>& sink;

    template <typename F>
    auto run(const std::string& phase, F&& fn) -> decltype(fn()) {
        auto start = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                sink[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                            start)
                                  .count();
            } else {
                auto result = fn();
                sink[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                            start)
                                  .count();
                return result;
            }
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError(phase, e.what());
        }
    }
};

std::vector<TrainExample> plain_examples(const std::vector<BinarySample>& samples) {
    std::vector<TrainExample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({plain_text(s), SoftLabel::from_hard(s.label)});
    return out;
}

json record_to_json(const ResultRecord& r, bool include_runtimes) {
    json j{{"label", r.label},
           {"weak_acc", r.weak_acc},
           {"supervisor_acc", r.supervisor_acc},
           {"w2s_acc", r.w2s_acc},
           {"ceiling_acc", r.ceiling_acc},
           {"pgr", std::isnan(r.pgr) ? json() : json(r.pgr)},
           {"config_digest", r.config_digest}};
    if (include_runtimes) j["runtimes_s"] = r.runtimes_s;
    return j;
}

ResultRecord record_from_json(const json& j) {
    ResultRecord r;
    r.label = j.at("label").get<std::string>();
    r.weak_acc = j.at("weak_acc").get<double>();
    r.supervisor_acc = j.at("supervisor_acc").get<double>();
    r.w2s_acc = j.at("w2s_acc").get<double>();
    r.ceiling_acc = j.at("ceiling_acc").get<double>();
    r.pgr = j.at("pgr").is_null() ? std::nan("") : j.at("pgr").get<double>();
    r.config_digest = j.value("config_digest", "");
    if (j.contains("runtimes_s"))
        r.runtimes_s = j.at("runtimes_s").get<std::map<std::string, double>>();
    return r;
}

std::string sanitize_filename(std::string s) {
    for (char& c : s)
        if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
    return s;
}

} // namespace

SplitDataset build_split(const ExperimentConfig& cfg) {
    const std::uint64_t master = cfg.master_seed;
    std::vector<RawQuestion> questions;
    if (cfg.dataset.kind == DatasetSettings::Kind::synthetic) {
        SyntheticTaskSpec spec = cfg.dataset.synthetic;
        if (spec.hidden_rule_seed == 0) spec.hidden_rule_seed = subseed(master, "task");
        questions = generate_synthetic_task(spec);
    } else {
        questions = load_dataset(cfg.dataset.path, cfg.dataset.format);
    }
    auto samples = convert_all(questions, subseed(master, "balance"));
    return sample_and_split(samples, cfg.split.max_n, cfg.split.test_fraction,
                            subseed(master, "split"));
}

PipelineOutput run_pipeline(const ExperimentConfig& cfg) {
    ResultRecord record;
    record.label = cfg.name;
    PhaseTimer timer{record.runtimes_s};

    const std::uint64_t master = cfg.master_seed;
    const json config_json = semantic_config_json(cfg);
    record.config_digest = sha256_hex(config_json.dump());

    if (cfg.strong_model.feature_dim < cfg.weak_model.feature_dim ||
        (cfg.strong_model.feature_dim == cfg.weak_model.feature_dim &&
         cfg.strong_model.hidden_width <= cfg.weak_model.hidden_width))
        std::cerr << "[w2sg] warning: strong tier does not exceed weak tier capacity ("
                  << cfg.name << ")\n";

    std::unique_ptr<Backend> raw_backend = make_backend(cfg.backend);
    std::unique_ptr<ResponseCache> cache;
    std::unique_ptr<CachedBackend> cached;
    Backend* backend = raw_backend.get();
    if (!cfg.cache_dir.empty()) {
        cache = std::make_unique<ResponseCache>(cfg.cache_dir);
        cached = std::make_unique<CachedBackend>(*raw_backend, *cache);
        backend = cached.get();
    }

    // --- phase: dataset -------------------------------------------------------
    SplitDataset split = timer.run("dataset", [&] { return build_split(cfg); });

    // --- phase: weak_naive (PGR baseline; also the market-making selector) ----
    ClassifierConfig weak_cfg{CapacityTier::weak, cfg.weak_model.feature_dim,
                              cfg.weak_model.hidden_width, subseed(master, "weak_naive_init"),
                              subseed(master, "hash_weak")};
    Classifier naive_weak = timer.run("weak_naive", [&] {
        TrainConfig tc = cfg.weak_train;
        tc.loss_kind = LossKind::xent;
        tc.shuffle_seed = subseed(master, "weak_naive_shuffle");
        return train(Classifier(weak_cfg), plain_examples(split.train_half), tc);
    });
    record.weak_acc =
        timer.run("eval_weak", [&] { return evaluate_accuracy(naive_weak, split.test_set); });

    // --- phase: supervisor ------------------------------------------------------
    ProtocolConfig protocol;
    protocol.protocol = cfg.protocol;
    protocol.num_turns = cfg.protocol == ProtocolKind::debate ? cfg.num_turns : 1;
    protocol.templates = load_templates(cfg.template_dir);
    protocol.task_description = cfg.task_description;
    protocol.generation.temperature = cfg.backend.temperature;
    protocol.generation.max_tokens = cfg.backend.max_tokens;
    protocol.generation.model_id = cfg.backend.model_id;
    if (!cfg.restance_per_member) protocol.stance_seed_override = subseed(master, "stance");

    std::optional<WeakEnsemble> ensemble;
    EnsembleSpec spec;
    if (cfg.supervision.mode == SupervisionMode::protocol) {
        spec = EnsembleSpec::derive(cfg.supervision.ensemble_kind, cfg.supervision.cardinality,
                                    master);
        ensemble = timer.run("supervisor", [&] {
            TrainConfig tc = cfg.weak_train;
            tc.loss_kind = LossKind::xent;
            return build_ensemble(spec, split.train_half, protocol, *backend, tc, weak_cfg,
                                  &naive_weak, cfg.jobs);
        });
        record.supervisor_acc = timer.run("supervisor_eval", [&] {
            return ensemble_accuracy(*ensemble, split.test_set, protocol, *backend, &naive_weak,
                                     cfg.jobs);
        });
    } else {
        record.supervisor_acc = record.weak_acc;
    }

    // --- phase: weak_labels ----------------------------------------------------
    std::map<std::string, SoftLabel> weak_labels = timer.run("weak_labels", [&] {
        std::map<std::string, SoftLabel> labels;
        if (ensemble) {
            labels = generate_weak_labels(*ensemble, split.heldout_half, protocol, *backend,
                                          &naive_weak, cfg.jobs);
        } else {
            for (const auto& s : split.heldout_half)
                labels.emplace(s.id, naive_weak.predict(plain_text(s)));
        }
        return labels;
    });

    // --- phase: student ---------------------------------------------------------
    ClassifierConfig strong_cfg{CapacityTier::strong, cfg.strong_model.feature_dim,
                                cfg.strong_model.hidden_width, subseed(master, "student_init"),
                                subseed(master, "hash_strong")};
    Classifier student = timer.run("student", [&] {
        std::optional<TranscriptSet> student_transcripts;
        if (cfg.augment_student) {
            if (!ensemble)
                throw Error("augment_student requires protocol supervision");
            student_transcripts = generate_transcripts(split.heldout_half, *backend, protocol,
                                                       spec.debate_seeds[0], &naive_weak,
                                                       cfg.jobs);
        }
        std::vector<TrainExample> data;
        data.reserve(split.heldout_half.size());
        for (const auto& s : split.heldout_half) {
            auto it = weak_labels.find(s.id);
            if (it == weak_labels.end()) throw Error("missing weak label for sample " + s.id);
            std::string text = cfg.augment_student
                                   ? augment_sample(s, student_transcripts->at(s.id))
                                   : plain_text(s);
            data.push_back({std::move(text), it->second});
        }
        TrainConfig tc = cfg.strong_train;
        tc.loss_kind = cfg.student_loss;
        tc.shuffle_seed = subseed(master, "student_shuffle");
        return train(Classifier(strong_cfg), data, tc);
    });
    record.w2s_acc =
        timer.run("eval_student", [&] { return evaluate_accuracy(student, split.test_set); });

    // --- phase: ceiling ----------------------------------------------------------
    ClassifierConfig ceiling_cfg = strong_cfg;
    ceiling_cfg.init_seed = subseed(master, "ceiling_init");
    Classifier ceiling = timer.run("ceiling", [&] {
        TrainConfig tc = cfg.strong_train;
        tc.loss_kind = LossKind::xent;
        tc.shuffle_seed = subseed(master, "ceiling_shuffle");
        return train(Classifier(ceiling_cfg), plain_examples(split.heldout_half), tc);
    });
    record.ceiling_acc =
        timer.run("eval_ceiling", [&] { return evaluate_accuracy(ceiling, split.test_set); });

    record.pgr = record.ceiling_acc == record.weak_acc
                     ? std::nan("")
                     : pgr(record.weak_acc, record.w2s_acc, record.ceiling_acc);

    // --- manifest and persistence -------------------------------------------------
    json seeds{{"master", master},
               {"balance", subseed(master, "balance")},
               {"split", subseed(master, "split")},
               {"stance", subseed(master, "stance")},
               {"weak_naive_init", subseed(master, "weak_naive_init")},
               {"weak_naive_shuffle", subseed(master, "weak_naive_shuffle")},
               {"student_init", subseed(master, "student_init")},
               {"student_shuffle", subseed(master, "student_shuffle")},
               {"ceiling_init", subseed(master, "ceiling_init")},
               {"ceiling_shuffle", subseed(master, "ceiling_shuffle")},
               {"hash_weak", subseed(master, "hash_weak")},
               {"hash_strong", subseed(master, "hash_strong")}};
    if (ensemble) {
        seeds["debate"] = spec.debate_seeds;
        seeds["finetune"] = spec.finetune_seeds;
    }

    json artifacts{{"train_half_digest", samples_digest(split.train_half)},
                   {"heldout_half_digest", samples_digest(split.heldout_half)},
                   {"test_set_digest", samples_digest(split.test_set)}};
    json model_digests{{"weak_naive", classifier_digest(naive_weak)},
                       {"student", classifier_digest(student)},
                       {"ceiling", classifier_digest(ceiling)}};
    if (ensemble) {
        json members = json::array();
        json transcript_digests = json::array();
        for (std::size_t m = 0; m < ensemble->members.size(); ++m) {
            members.push_back(classifier_digest(ensemble->members[m]));
            transcript_digests.push_back(transcripts_digest(*ensemble->transcript_sets[m]));
        }
        model_digests["members"] = members;
        artifacts["train_transcripts"] = transcript_digests;
    }
    artifacts["weak_labels"] = weak_labels_digest(weak_labels);
    artifacts["models"] = model_digests;

    json manifest{{"schema", "w2sg-manifest-v1"},
                  {"kind", "pipeline"},
                  {"name", cfg.name},
                  {"config", config_json},
                  {"config_digest", record.config_digest},
                  {"seeds", seeds},
                  {"artifacts", artifacts},
                  {"result", record_to_json(record, false)}};

    if (!cfg.out_dir.empty()) {
        fs::path dir = cfg.out_dir / sanitize_filename(cfg.name);
        fs::create_directories(dir);
        write_text_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
        write_text_file_atomic(dir / "record.json", record_to_json(record, true).dump(2) + "\n");
        if (cfg.save_weak_labels)
            save_weak_labels_jsonl(dir / "weak_labels.jsonl", weak_labels,
                                   ensemble ? ensemble_digest(*ensemble) : "naive");
        if (cfg.save_transcripts && ensemble) {
            fs::path tdir = dir / "transcripts";
            for (std::size_t m = 0; m < ensemble->transcript_sets.size(); ++m) {
                std::vector<Transcript> list;
                for (const auto& [id, t] : *ensemble->transcript_sets[m]) list.push_back(t);
                const std::uint64_t seed = ensemble->spec.kind == EnsembleKind::debate_ensemble
                                               ? ensemble->spec.debate_seeds[m]
                                               : ensemble->spec.debate_seeds[0];
                save_transcripts_jsonl(tdir / ("transcripts_" +
                                               protocol_kind_name(cfg.protocol) + "_" +
                                               sanitize_filename(backend->id()) + "_" +
                                               std::to_string(seed) + ".jsonl"),
                                       list);
                if (ensemble->spec.kind != EnsembleKind::debate_ensemble) break;
            }
        }
        if (cfg.save_checkpoints) {
            fs::path cdir = dir / "checkpoints";
            save_classifier(naive_weak, cdir / "weak_naive.ckpt");
            if (ensemble)
                for (std::size_t m = 0; m < ensemble->members.size(); ++m)
                    save_classifier(ensemble->members[m],
                                    cdir / ("member_" + std::to_string(m) + ".ckpt"));
            save_classifier(student, cdir / "student.ckpt");
            save_classifier(ceiling, cdir / "ceiling.ckpt");
        }
    }

    return PipelineOutput{std::move(record), std::move(manifest)};
}

// ---- ablations ------------------------------------------------------------------

std::vector<ResultRecord> run_ablation(const ExperimentConfig& cfg, AblationDimension dimension,
                                       const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("run_ablation: empty value list");

    std::vector<ExperimentConfig> cells;
    cells.reserve(values.size());
    for (const std::string& value : values) {
        ExperimentConfig cell = cfg;
        cell.name = ablation_dimension_name(dimension) + "=" + value;
        switch (dimension) {
            case AblationDimension::protocol: {
                cell.protocol = parse_protocol_kind(value);
                cell.supervision.mode = SupervisionMode::protocol;
                if (cell.protocol != ProtocolKind::debate) cell.num_turns = 1;
                break;
            }
            case AblationDimension::ensemble_kind: {
                cell.supervision.mode = SupervisionMode::protocol;
                cell.supervision.ensemble_kind = parse_ensemble_kind(value);
                if (cell.supervision.ensemble_kind == EnsembleKind::single)
                    cell.supervision.cardinality = 1;
                break;
            }
            case AblationDimension::cardinality: {
                int k = 0;
                try {
                    k = std::stoi(value);
                } catch (...) {
                    throw ConfigError("cardinality value must be an integer, got \"" + value +
                                      "\"");
                }
                if (k < 1) throw ConfigError("cardinality must be >= 1, got " + value);
                cell.supervision.mode = SupervisionMode::protocol;
                if (cell.supervision.ensemble_kind == EnsembleKind::single && k > 1)
                    cell.supervision.ensemble_kind = EnsembleKind::debate_ensemble;
                cell.supervision.cardinality = k;
                break;
            }
            case AblationDimension::turns: {
                int t = 0;
                try {
                    t = std::stoi(value);
                } catch (...) {
                    throw ConfigError("turns value must be an integer, got \"" + value + "\"");
                }
                if (t < 1) throw ConfigError("turns must be >= 1, got " + value);
                cell.protocol = ProtocolKind::debate;
                cell.num_turns = t;
                break;
            }
        }
        cells.push_back(std::move(cell));
    }

    const int cell_jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cells.size())));
    std::vector<ResultRecord> records(cells.size());
    parallel_for(cells.size(), cell_jobs, [&](std::size_t i) {
        ExperimentConfig cell = cells[i];
        if (cell_jobs > 1) cell.jobs = std::max(1, cfg.jobs / cell_jobs);
        records[i] = run_pipeline(cell).record;
    });
    return records;
}

// ---- reports ----------------------------------------------------------------------

namespace {

std::string pct(double v) {
    if (std::isnan(v)) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v * 100.0);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_records_json(const fs::path& path, const std::vector<ResultRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) arr.push_back(record_to_json(r, true));
    write_text_file_atomic(path, arr.dump(2) + "\n");
}

std::vector<ResultRecord> load_records_json(const fs::path& path) {
    json arr = json::parse(read_text_file(path), nullptr, false);
    if (arr.is_discarded() || !arr.is_array())
        throw ParseError("records file is not a JSON array: " + path.string());
    std::vector<ResultRecord> out;
    for (const auto& j : arr) out.push_back(record_from_json(j));
    return out;
}

void save_records_csv(const fs::path& path, const std::vector<ResultRecord>& records) {
    std::ostringstream out;
    out << "label,weak_acc,supervisor_acc,w2s_acc,ceiling_acc,pgr,config_digest\n";
    for (const auto& r : records) {
        std::string label = r.label;
        std::replace(label.begin(), label.end(), ',', ';');
        out << label << ',' << full(r.weak_acc) << ',' << full(r.supervisor_acc) << ','
            << full(r.w2s_acc) << ',' << full(r.ceiling_acc) << ',' << full(r.pgr) << ','
            << r.config_digest << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::vector<ResultRecord> load_records_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open records csv: " + path.string());
    std::vector<ResultRecord> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 6) throw ParseError("bad csv row: " + line);
        ResultRecord r;
        r.label = fields[0];
        r.weak_acc = std::stod(fields[1]);
        r.supervisor_acc = std::stod(fields[2]);
        r.w2s_acc = std::stod(fields[3]);
        r.ceiling_acc = std::stod(fields[4]);
        r.pgr = std::stod(fields[5]);
        if (fields.size() > 6) r.config_digest = fields[6];
        out.push_back(std::move(r));
    }
    return out;
}

void write_report(const std::vector<ResultRecord>& records, ReportLayout layout,
                  const fs::path& out_dir, const std::string& stem) {
    if (records.empty()) throw Error("write_report: no records");
    fs::create_directories(out_dir);

    save_records_csv(out_dir / (stem + ".csv"), records);
    save_records_json(out_dir / (stem + ".json"), records);

    std::ostringstream md;
    if (layout == ReportLayout::main_table) {
        md << "| Performance | Method | Acc. (%) | PGR (%) |\n";
        md << "|---|---|---|---|\n";
        md << "| Weak performance | | " << pct(records.front().weak_acc) << " | |\n";
        for (const auto& r : records)
            md << "| Weak-to-strong performance | " << r.label << " | " << pct(r.w2s_acc) << " | "
               << pct(r.pgr) << " |\n";
        md << "| Strong ceiling performance | | " << pct(records.front().ceiling_acc)
           << " | |\n";
    } else {
        md << "| Cell | Weak (%) | Supervisor (%) | W2S (%) | Ceiling (%) | PGR (%) |\n";
        md << "|---|---|---|---|---|---|\n";
        for (const auto& r : records)
            md << "| " << r.label << " | " << pct(r.weak_acc) << " | " << pct(r.supervisor_acc)
               << " | " << pct(r.w2s_acc) << " | " << pct(r.ceiling_acc) << " | " << pct(r.pgr)
               << " |\n";
    }
    write_text_file_atomic(out_dir / (stem + ".md"), md.str());
}

} // namespace w2sg
