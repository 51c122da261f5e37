#include "w2sg/cli.hpp"

#include "w2sg/config.hpp"
#include "w2sg/sha256.hpp"

#include <atomic>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

namespace w2sg {

using nlohmann::json;

fs::path resolve_cache_dir(const ExperimentConfig& cfg) {
    if (!cfg.cache_dir.empty()) return cfg.cache_dir;
    if (const char* env = std::getenv("W2SG_CACHE_DIR"); env && *env) return fs::path(env);
    return cfg.out_dir / "cache";
}

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::string out_dir;
    std::string cache_dir;
    int jobs = -1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool needs_config = true) {
    auto* opt = cmd->add_option("--config,-c", flags.config_path, "JSON config file");
    if (needs_config) opt->required();
    cmd->add_option("--override,-O", flags.overrides,
                    "dotted.key=value config override (repeatable)");
    cmd->add_option("--seed", flags.seed, "master seed override");
    cmd->add_option("--out-dir", flags.out_dir, "output directory override");
    cmd->add_option("--cache-dir", flags.cache_dir, "response cache directory override");
    cmd->add_option("--jobs,-j", flags.jobs, "worker pool size (default: logical cores)");
}

ExperimentConfig load_with_flags(const CommonFlags& flags) {
    ExperimentConfig cfg = load_experiment_config(flags.config_path, flags.overrides);
    if (flags.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(flags.seed);
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.cache_dir.empty()) cfg.cache_dir = flags.cache_dir;
    if (flags.jobs >= 0) cfg.jobs = flags.jobs;
    if (cfg.jobs == 0)
        cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
    cfg.cache_dir = resolve_cache_dir(cfg);
    return cfg;
}

void write_command_manifest(const fs::path& out_dir, const std::string& command, json body) {
    body["schema"] = "w2sg-manifest-v1";
    body["kind"] = command;
    fs::create_directories(out_dir);
    write_text_file_atomic(out_dir / (command + "_manifest.json"), body.dump(2) + "\n");
}

// ---- convert -----------------------------------------------------------------

int cmd_convert(const std::string& input, const std::string& format, const std::string& output,
                std::uint64_t seed) {
    auto questions = load_dataset(input, parse_dataset_format(format));
    auto samples = convert_all(questions, seed);
    save_samples_jsonl(output, samples);

    std::size_t pos = 0, neg = 0;
    for (const auto& s : samples) (s.label == 1 ? pos : neg) += 1;
    std::cout << "converted " << questions.size() << " questions to " << samples.size()
              << " samples (label 1: " << pos << ", label 0: " << neg << ")\n";

    fs::path out(output);
    write_command_manifest(out.parent_path().empty() ? "." : out.parent_path(), "convert",
                           json{{"input", input},
                                {"input_digest", sha256_hex(read_text_file(input))},
                                {"format", format},
                                {"seed", seed},
                                {"output", output},
                                {"output_digest", samples_digest(samples)},
                                {"counts", json{{"label_1", pos}, {"label_0", neg}}}});
    return kExitOk;
}

// ---- debate ------------------------------------------------------------------

int cmd_debate(const ExperimentConfig& cfg) {
    SplitDataset split = build_split(cfg);

    std::unique_ptr<Backend> raw;
    if (cfg.backend.kind == BackendKind::mock) {
        raw = std::make_unique<MockBackend>(cfg.backend.mock);
    } else {
        std::string key = cfg.backend.api_key;
        if (const char* env = std::getenv("W2SG_API_KEY"); env && *env) key = env;
        raw = std::make_unique<WireBackend>(cfg.backend.base_url, key, cfg.backend.retry,
                                            cfg.backend.max_inflight);
    }
    ResponseCache cache(cfg.cache_dir);
    CachedBackend backend(*raw, cache);

    ProtocolConfig protocol;
    protocol.protocol = cfg.protocol;
    protocol.num_turns = cfg.protocol == ProtocolKind::debate ? cfg.num_turns : 1;
    protocol.templates = load_templates(cfg.template_dir);
    protocol.task_description = cfg.task_description;
    protocol.generation.temperature = cfg.backend.temperature;
    protocol.generation.max_tokens = cfg.backend.max_tokens;
    protocol.generation.model_id = cfg.backend.model_id;
    if (!cfg.restance_per_member)
        protocol.stance_seed_override = subseed(cfg.master_seed, "stance");

    // Market-making argues against the naive weak model's pick, so that model
    // must exist before any transcript.
    std::optional<Classifier> naive_weak;
    if (cfg.protocol == ProtocolKind::market_making) {
        ClassifierConfig weak_cfg{CapacityTier::weak, cfg.weak_model.feature_dim,
                                  cfg.weak_model.hidden_width,
                                  subseed(cfg.master_seed, "weak_naive_init"),
                                  subseed(cfg.master_seed, "hash_weak")};
        TrainConfig tc = cfg.weak_train;
        tc.loss_kind = LossKind::xent;
        tc.shuffle_seed = subseed(cfg.master_seed, "weak_naive_shuffle");
        std::vector<TrainExample> data;
        for (const auto& s : split.train_half)
            data.push_back({plain_text(s), SoftLabel::from_hard(s.label)});
        naive_weak = train(Classifier(weak_cfg), data, tc);
    }

    EnsembleSpec spec = EnsembleSpec::derive(cfg.supervision.ensemble_kind,
                                             cfg.supervision.cardinality, cfg.master_seed);

    std::vector<const std::vector<BinarySample>*> parts = {&split.train_half,
                                                           &split.heldout_half};
    if (!split.test_set.empty()) parts.push_back(&split.test_set);

    std::size_t total = 0;
    for (const auto* part : parts) total += part->size() * spec.debate_seeds.size();
    std::atomic<std::size_t> completed{0};

    fs::path tdir = cfg.out_dir / "transcripts";
    json file_digests = json::object();
    try {
        for (std::uint64_t dseed : spec.debate_seeds) {
            std::vector<Transcript> all;
            for (const auto* part : parts) {
                std::vector<Transcript> results(part->size());
                parallel_for(part->size(), cfg.jobs, [&](std::size_t i) {
                    results[i] = run_protocol((*part)[i], backend, protocol, dseed,
                                              naive_weak ? &*naive_weak : nullptr);
                    completed.fetch_add(1);
                });
                for (auto& t : results) all.push_back(std::move(t));
            }
            std::string fname = "transcripts_" + protocol_kind_name(cfg.protocol) + "_" +
                                backend.id() + "_" + std::to_string(dseed) + ".jsonl";
            save_transcripts_jsonl(tdir / fname, all);
            std::ostringstream lines;
            for (const auto& t : all) lines << transcript_to_json_line(t) << "\n";
            file_digests[fname] = sha256_hex(lines.str());
        }
    } catch (const TransportError& e) {
        std::cerr << "backend exhausted: " << e.what() << "\n";
        std::cout << "completed " << completed.load() << "/" << total
                  << " transcripts; backend_calls=" << backend.misses() << "\n";
        return kExitTransport;
    }

    std::cout << "completed " << completed.load() << "/" << total
              << " transcripts; backend_calls=" << backend.misses()
              << " cache_hits=" << backend.hits() << "\n";

    write_command_manifest(cfg.out_dir, "debate",
                           json{{"config", semantic_config_json(cfg)},
                                {"config_digest", sha256_hex(semantic_config_json(cfg).dump())},
                                {"debate_seeds", spec.debate_seeds},
                                {"transcript_files", file_digests}});
    return kExitOk;
}

// ---- run / ablate / report / cache ---------------------------------------------

int cmd_run(const ExperimentConfig& cfg) {
    PipelineOutput out = run_pipeline(cfg);
    std::cout << out.manifest["result"].dump(2) << "\n";
    write_report({out.record}, ReportLayout::main_table, cfg.out_dir, "report");
    save_records_json(cfg.out_dir / "records.json", {out.record});
    return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& dimension,
               const std::string& values_csv) {
    std::vector<std::string> values;
    std::stringstream ss(values_csv);
    std::string v;
    while (std::getline(ss, v, ',')) {
        if (!v.empty()) values.push_back(v);
    }
    if (values.empty()) throw ConfigError("--values must be a non-empty comma list");
    AblationDimension dim = parse_ablation_dimension(dimension);
    auto records = run_ablation(cfg, dim, values);
    write_report(records, ReportLayout::ablation_table, cfg.out_dir,
                 "ablation_" + ablation_dimension_name(dim));
    save_records_json(cfg.out_dir / ("records_" + ablation_dimension_name(dim) + ".json"),
                      records);
    for (const auto& r : records)
        std::cout << r.label << ": w2s=" << r.w2s_acc << " pgr=" << r.pgr << "\n";
    return kExitOk;
}

int cmd_report(const std::string& records_path, const std::string& layout,
               const std::string& out_dir, const std::string& stem) {
    fs::path path(records_path);
    std::vector<ResultRecord> records = path.extension() == ".csv"
                                            ? load_records_csv(path)
                                            : load_records_json(path);
    write_report(records, parse_report_layout(layout), out_dir, stem);
    std::cout << "wrote " << stem << ".{csv,json,md} to " << out_dir << "\n";
    return kExitOk;
}

int cmd_cache(const std::string& action, const fs::path& dir) {
    ResponseCache cache(dir);
    if (action == "stats") {
        auto s = cache.stats();
        std::cout << "cache " << dir.string() << ": " << s.entries << " entries, " << s.bytes
                  << " bytes\n";
        return kExitOk;
    }
    if (action == "clear") {
        std::size_t removed = cache.clear();
        std::cout << "cleared " << removed << " entries from " << dir.string() << "\n";
        return kExitOk;
    }
    throw ConfigError("cache action must be stats or clear");
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Weak-to-strong generalization harness with oversight-protocol transcripts"};
    app.require_subcommand(1);

    // convert
    auto* convert = app.add_subcommand("convert", "Convert a source dataset to binary JSONL");
    std::string conv_input, conv_format = "multiple_choice", conv_output;
    std::uint64_t conv_seed = 0;
    convert->add_option("--input,-i", conv_input, "input JSONL")->required();
    convert->add_option("--format,-f", conv_format,
                        "multiple_choice | boolean | preference_pair");
    convert->add_option("--output,-o", conv_output, "output JSONL")->required();
    convert->add_option("--seed", conv_seed, "balance seed");

    // debate
    auto* debate = app.add_subcommand("debate", "Generate and cache protocol transcripts");
    CommonFlags debate_flags;
    add_common_flags(debate, debate_flags);

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline");
    CommonFlags run_flags;
    add_common_flags(run, run_flags);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
    CommonFlags ablate_flags;
    std::string dimension, values;
    add_common_flags(ablate, ablate_flags);
    ablate->add_option("--dimension,-d", dimension,
                       "protocol | ensemble_kind | cardinality | turns")
        ->required();
    ablate->add_option("--values,-v", values, "comma-separated values")->required();

    // report
    auto* report = app.add_subcommand("report", "Render report files from saved records");
    std::string rep_records, rep_layout = "main_table", rep_out = "out", rep_stem = "report";
    report->add_option("--records,-r", rep_records, "records .json or .csv")->required();
    report->add_option("--layout,-l", rep_layout, "main_table | ablation_table");
    report->add_option("--out-dir", rep_out, "output directory");
    report->add_option("--stem", rep_stem, "output file stem");

    // cache
    auto* cache_cmd = app.add_subcommand("cache", "Response cache maintenance");
    std::string cache_action;
    CommonFlags cache_flags;
    cache_cmd->add_option("action", cache_action, "stats | clear")->required();
    add_common_flags(cache_cmd, cache_flags, /*needs_config=*/false);

    try {
        app.parse(argc, argv);

        if (*convert) return cmd_convert(conv_input, conv_format, conv_output, conv_seed);
        if (*debate) return cmd_debate(load_with_flags(debate_flags));
        if (*run) return cmd_run(load_with_flags(run_flags));
        if (*ablate) return cmd_ablate(load_with_flags(ablate_flags), dimension, values);
        if (*report) return cmd_report(rep_records, rep_layout, rep_out, rep_stem);
        if (*cache_cmd) {
            fs::path dir;
            if (!cache_flags.cache_dir.empty()) {
                dir = cache_flags.cache_dir;
            } else if (!cache_flags.config_path.empty()) {
                dir = resolve_cache_dir(load_experiment_config(cache_flags.config_path,
                                                               cache_flags.overrides));
            } else if (const char* env = std::getenv("W2SG_CACHE_DIR"); env && *env) {
                dir = env;
            } else {
                throw ConfigError("cache: need --cache-dir, --config, or W2SG_CACHE_DIR");
            }
            return cmd_cache(cache_action, dir);
        }
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const UpstreamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const InvalidRequestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTransport;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace w2sg
