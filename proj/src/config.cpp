#include "w2sg/config.hpp"

namespace w2sg {

using nlohmann::json;

namespace {

// Cursor with a JSON-pointer-ish breadcrumb so validation errors carry the
// exact config path.
struct Reader {
    const json& j;
    std::string path;

    Reader at(const char* key) const { return Reader{j.at(key), path + "." + key}; }
    bool has(const char* key) const { return j.contains(key); }

    [[noreturn]] void fail(const std::string& want) const {
        throw ConfigError("config error at " + path + ": " + want);
    }

    std::string str(const char* key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        if (!j[key].is_string()) Reader{j[key], path + "." + key}.fail("expected string");
        return j[key].get<std::string>();
    }
    bool boolean(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!j[key].is_boolean()) Reader{j[key], path + "." + key}.fail("expected boolean");
        return j[key].get<bool>();
    }
    double real(const char* key, double fallback, double lo, double hi) const {
        if (!has(key)) return fallback;
        if (!j[key].is_number()) Reader{j[key], path + "." + key}.fail("expected number");
        double v = j[key].get<double>();
        if (v < lo || v > hi)
            Reader{j[key], path + "." + key}.fail("expected number in [" + std::to_string(lo) +
                                                  ", " + std::to_string(hi) + "]");
        return v;
    }
    std::int64_t integer(const char* key, std::int64_t fallback, std::int64_t lo,
                         std::int64_t hi) const {
        if (!has(key)) return fallback;
        if (!j[key].is_number_integer())
            Reader{j[key], path + "." + key}.fail("expected integer");
        std::int64_t v = j[key].get<std::int64_t>();
        if (v < lo || v > hi)
            Reader{j[key], path + "." + key}.fail("expected integer >= " + std::to_string(lo) +
                                                  (hi == INT64_MAX ? "" : " and <= " +
                                                                              std::to_string(hi)));
        return v;
    }
    std::uint64_t uinteger(const char* key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        if (!j[key].is_number_unsigned() && !j[key].is_number_integer())
            Reader{j[key], path + "." + key}.fail("expected unsigned integer");
        return j[key].get<std::uint64_t>();
    }
    Reader object(const char* key) const {
        if (!has(key)) fail("missing object \"" + std::string(key) + "\"");
        if (!j[key].is_object()) Reader{j[key], path + "." + key}.fail("expected object");
        return at(key);
    }
};

MockDebaterConfig parse_mock(const Reader& r) {
    MockDebaterConfig m;
    m.honesty = r.real("honesty", m.honesty, 0.0, 1.0);
    m.leak_rate = r.real("leak_rate", m.leak_rate, 0.0, 1.0);
    m.rebuttal_rate = r.real("rebuttal_rate", m.rebuttal_rate, 0.0, 1.0);
    m.vocab_seed = r.uinteger("vocab_seed", m.vocab_seed);
    return m;
}

ModelSettings parse_model(const Reader& r, ModelSettings defaults) {
    ModelSettings m = defaults;
    m.feature_dim = static_cast<std::uint32_t>(
        r.integer("feature_dim", m.feature_dim, 2, (1ll << 30)));
    if ((m.feature_dim & (m.feature_dim - 1)) != 0)
        r.fail("feature_dim must be a power of two");
    m.hidden_width =
        static_cast<std::uint32_t>(r.integer("hidden_width", m.hidden_width, 0, 1 << 16));
    return m;
}

TrainConfig parse_train(const Reader& r, TrainConfig defaults, std::uint32_t hidden_width) {
    TrainConfig t = defaults;
    t.epochs = static_cast<int>(r.integer("epochs", t.epochs, 1, 1 << 20));
    t.batch_size = static_cast<int>(r.integer("batch_size", t.batch_size, 1, 1 << 20));
    if (!r.has("learning_rate")) t.learning_rate = default_learning_rate(hidden_width);
    t.learning_rate = r.real("learning_rate", t.learning_rate, 0.0, 1e6);
    t.alpha_max = r.real("alpha_max", t.alpha_max, 0.0, 1.0);
    t.alpha_warmup_fraction = r.real("alpha_warmup_fraction", t.alpha_warmup_fraction, 0.0, 1.0);
    return t;
}

} // namespace

ExperimentConfig parse_experiment_config(const json& root) {
    if (!root.is_object()) throw ConfigError("config error at $: expected object");
    Reader r{root, "$"};
    ExperimentConfig cfg;

    cfg.name = r.str("name", cfg.name);
    cfg.master_seed = r.uinteger("master_seed", cfg.master_seed);
    cfg.out_dir = r.str("out_dir", cfg.out_dir.string());
    cfg.jobs = static_cast<int>(r.integer("jobs", cfg.jobs, 0, 4096));
    cfg.cache_dir = r.str("cache_dir", cfg.cache_dir.string());
    cfg.save_checkpoints = r.boolean("save_checkpoints", cfg.save_checkpoints);
    cfg.save_transcripts = r.boolean("save_transcripts", cfg.save_transcripts);
    cfg.save_weak_labels = r.boolean("save_weak_labels", cfg.save_weak_labels);
    cfg.augment_student = r.boolean("augment_student", cfg.augment_student);
    cfg.restance_per_member = r.boolean("restance_per_member", cfg.restance_per_member);

    if (r.has("dataset")) {
        Reader d = r.object("dataset");
        std::string kind = d.str("kind", "synthetic");
        if (kind == "synthetic") {
            cfg.dataset.kind = DatasetSettings::Kind::synthetic;
        } else if (kind == "jsonl") {
            cfg.dataset.kind = DatasetSettings::Kind::jsonl;
            cfg.dataset.path = d.str("path", "");
            if (cfg.dataset.path.empty()) d.fail("jsonl dataset requires \"path\"");
            cfg.dataset.format = parse_dataset_format(d.str("format", "multiple_choice"));
        } else {
            d.fail("dataset kind must be \"synthetic\" or \"jsonl\"");
        }
        if (d.has("synthetic")) {
            Reader s = d.object("synthetic");
            cfg.dataset.synthetic.num_questions = static_cast<int>(
                s.integer("num_questions", cfg.dataset.synthetic.num_questions, 1, 1 << 24));
            cfg.dataset.synthetic.hidden_rule_seed =
                s.uinteger("hidden_rule_seed", cfg.dataset.synthetic.hidden_rule_seed);
            cfg.dataset.synthetic.surface_noise =
                s.real("surface_noise", cfg.dataset.synthetic.surface_noise, 0.0, 1.0);
        }
    }

    if (r.has("split")) {
        Reader s = r.object("split");
        cfg.split.max_n = static_cast<std::size_t>(s.integer("max_n", 20000, 2, 1ll << 40));
        cfg.split.test_fraction = s.real("test_fraction", cfg.split.test_fraction, 0.0, 0.999999);
    }

    if (r.has("protocol")) {
        Reader p = r.object("protocol");
        cfg.protocol = parse_protocol_kind(p.str("kind", "debate"));
        cfg.num_turns = static_cast<int>(p.integer("num_turns", cfg.num_turns, 1, 64));
        cfg.task_description = p.str("task_description", cfg.task_description);
        cfg.template_dir = p.str("template_dir", cfg.template_dir.string());
    }

    if (r.has("supervision")) {
        Reader s = r.object("supervision");
        std::string mode = s.str("mode", "protocol");
        if (mode == "naive") cfg.supervision.mode = SupervisionMode::naive;
        else if (mode == "protocol") cfg.supervision.mode = SupervisionMode::protocol;
        else s.fail("supervision mode must be \"naive\" or \"protocol\"");
        cfg.supervision.ensemble_kind =
            parse_ensemble_kind(s.str("ensemble_kind", "debate_ensemble"));
        cfg.supervision.cardinality = static_cast<int>(
            s.integer("cardinality", cfg.supervision.cardinality, 1, 1024));
        if (cfg.supervision.ensemble_kind == EnsembleKind::single)
            cfg.supervision.cardinality = 1;
    }

    if (r.has("weak_model")) cfg.weak_model = parse_model(r.object("weak_model"), cfg.weak_model);
    if (r.has("strong_model"))
        cfg.strong_model = parse_model(r.object("strong_model"), cfg.strong_model);

    cfg.weak_train.learning_rate = default_learning_rate(cfg.weak_model.hidden_width);
    cfg.strong_train.learning_rate = default_learning_rate(cfg.strong_model.hidden_width);
    if (r.has("weak_train"))
        cfg.weak_train = parse_train(r.object("weak_train"), cfg.weak_train,
                                     cfg.weak_model.hidden_width);
    if (r.has("strong_train"))
        cfg.strong_train = parse_train(r.object("strong_train"), cfg.strong_train,
                                       cfg.strong_model.hidden_width);
    cfg.student_loss = parse_loss_kind(r.str("student_loss", "xent"));

    if (r.has("backend")) {
        Reader b = r.object("backend");
        std::string kind = b.str("kind", "mock");
        if (kind == "mock") cfg.backend.kind = BackendKind::mock;
        else if (kind == "wire") cfg.backend.kind = BackendKind::wire;
        else b.fail("backend kind must be \"mock\" or \"wire\"");
        cfg.backend.base_url = b.str("base_url", cfg.backend.base_url);
        cfg.backend.api_key = b.str("api_key", cfg.backend.api_key);
        cfg.backend.model_id = b.str("model_id", cfg.backend.model_id);
        cfg.backend.temperature = b.real("temperature", cfg.backend.temperature, 0.0, 100.0);
        cfg.backend.max_tokens =
            static_cast<int>(b.integer("max_tokens", cfg.backend.max_tokens, 1, 1 << 24));
        cfg.backend.max_inflight =
            static_cast<int>(b.integer("max_inflight", cfg.backend.max_inflight, 1, 256));
        if (b.has("retry")) {
            Reader rr = b.object("retry");
            cfg.backend.retry.max_attempts =
                static_cast<int>(rr.integer("max_attempts", cfg.backend.retry.max_attempts, 1, 100));
            cfg.backend.retry.initial_backoff_ms = static_cast<int>(
                rr.integer("initial_backoff_ms", cfg.backend.retry.initial_backoff_ms, 0, 600000));
            cfg.backend.retry.multiplier = rr.real("multiplier", cfg.backend.retry.multiplier, 1.0, 10.0);
            cfg.backend.retry.jitter = rr.real("jitter", cfg.backend.retry.jitter, 0.0, 1.0);
        }
        if (b.has("mock")) cfg.backend.mock = parse_mock(b.object("mock"));
    }
    // The synthetic task's debater process is the configured mock backend.
    cfg.dataset.synthetic.mock_debater = cfg.backend.mock;

    return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
    json dataset{{"kind", cfg.dataset.kind == DatasetSettings::Kind::synthetic ? "synthetic"
                                                                               : "jsonl"}};
    if (cfg.dataset.kind == DatasetSettings::Kind::jsonl) {
        dataset["path"] = cfg.dataset.path.string();
        dataset["format"] = dataset_format_name(cfg.dataset.format);
    }
    dataset["synthetic"] = json{{"num_questions", cfg.dataset.synthetic.num_questions},
                                {"hidden_rule_seed", cfg.dataset.synthetic.hidden_rule_seed},
                                {"surface_noise", cfg.dataset.synthetic.surface_noise}};

    auto train_json = [](const TrainConfig& t) {
        return json{{"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"learning_rate", t.learning_rate},
                    {"alpha_max", t.alpha_max},
                    {"alpha_warmup_fraction", t.alpha_warmup_fraction}};
    };
    auto model_json = [](const ModelSettings& m) {
        return json{{"feature_dim", m.feature_dim}, {"hidden_width", m.hidden_width}};
    };

    return json{
        {"name", cfg.name},
        {"master_seed", cfg.master_seed},
        {"dataset", dataset},
        {"split", json{{"max_n", cfg.split.max_n}, {"test_fraction", cfg.split.test_fraction}}},
        {"protocol", json{{"kind", protocol_kind_name(cfg.protocol)},
                          {"num_turns", cfg.num_turns},
                          {"task_description", cfg.task_description},
                          {"template_dir", cfg.template_dir.string()}}},
        {"supervision",
         json{{"mode", cfg.supervision.mode == SupervisionMode::naive ? "naive" : "protocol"},
              {"ensemble_kind", ensemble_kind_name(cfg.supervision.ensemble_kind)},
              {"cardinality", cfg.supervision.cardinality}}},
        {"weak_model", model_json(cfg.weak_model)},
        {"strong_model", model_json(cfg.strong_model)},
        {"weak_train", train_json(cfg.weak_train)},
        {"strong_train", train_json(cfg.strong_train)},
        {"student_loss", loss_kind_name(cfg.student_loss)},
        {"backend",
         json{{"kind", cfg.backend.kind == BackendKind::mock ? "mock" : "wire"},
              {"base_url", cfg.backend.base_url},
              {"model_id", cfg.backend.model_id},
              {"temperature", cfg.backend.temperature},
              {"max_tokens", cfg.backend.max_tokens},
              {"max_inflight", cfg.backend.max_inflight},
              {"retry", json{{"max_attempts", cfg.backend.retry.max_attempts},
                             {"initial_backoff_ms", cfg.backend.retry.initial_backoff_ms},
                             {"multiplier", cfg.backend.retry.multiplier},
                             {"jitter", cfg.backend.retry.jitter}}},
              {"mock", json{{"honesty", cfg.backend.mock.honesty},
                            {"leak_rate", cfg.backend.mock.leak_rate},
                            {"rebuttal_rate", cfg.backend.mock.rebuttal_rate},
                            {"vocab_seed", cfg.backend.mock.vocab_seed}}}}},
        {"augment_student", cfg.augment_student},
        {"restance_per_member", cfg.restance_per_member},
        {"out_dir", cfg.out_dir.string()},
        {"jobs", cfg.jobs},
        {"cache_dir", cfg.cache_dir.string()},
        {"save_checkpoints", cfg.save_checkpoints},
        {"save_transcripts", cfg.save_transcripts},
        {"save_weak_labels", cfg.save_weak_labels}};
}

nlohmann::json semantic_config_json(const ExperimentConfig& cfg) {
    json j = experiment_config_to_json(cfg);
    // Execution-only fields: where and how fast, never what.
    for (const char* key : {"out_dir", "jobs", "cache_dir", "save_checkpoints",
                            "save_transcripts", "save_weak_labels"})
        j.erase(key);
    return j;
}

void apply_override(json& j, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like dotted.key=value, got \"" + spec + "\"");
    std::string key = spec.substr(0, eq);
    std::string value = spec.substr(eq + 1);

    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value; // plain string

    std::string pointer = "/" + replace_all(key, ".", "/");
    try {
        j[json::json_pointer(pointer)] = parsed;
    } catch (const json::exception& e) {
        throw ConfigError("cannot apply override \"" + spec + "\": " + e.what());
    }
}

ExperimentConfig load_experiment_config(const fs::path& path,
                                        const std::vector<std::string>& overrides) {
    std::string raw;
    try {
        raw = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    json j = json::parse(raw, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    for (const auto& o : overrides) apply_override(j, o);
    return parse_experiment_config(j);
}

} // namespace w2sg
