#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "w2sg/config.hpp"
#include "w2sg/experiment.hpp"

#include <cmath>
#include <map>
#include <regex>

using namespace w2sg;

TEST_CASE("pgr endpoints and error case") {
    CHECK(pgr(0.6, 0.6, 0.9) == doctest::Approx(0.0));
    CHECK(pgr(0.6, 0.9, 0.9) == doctest::Approx(1.0));
    CHECK(pgr(0.6, 0.5, 0.9) < 0.0);  // student below its supervisor
    CHECK(pgr(0.6, 0.95, 0.9) > 1.0); // student above the ceiling
    CHECK_THROWS_AS(pgr(0.7, 0.8, 0.7), Error);
}

TEST_CASE("pgr reproduces every printed Table-2 value to 0.05 points") {
    struct Cell {
        double weak, w2s, ceiling, printed_pgr;
    };
    // (weak, w2s, ceiling) accuracy triples in percent, with the printed PGR.
    const std::vector<Cell> cells = {
        // SciQ
        {90.0, 91.5, 93.4, 44.1},
        {90.0, 91.4, 93.4, 41.2},
        {90.0, 91.6, 93.4, 47.1},
        {90.0, 92.6, 93.4, 76.5},
        // BoolQ
        {86.0, 88.0, 89.9, 51.3},
        {86.0, 88.2, 89.9, 56.4},
        {86.0, 88.1, 89.9, 53.8},
        {86.0, 88.7, 89.9, 69.2},
        // CosmosQA
        {87.5, 88.2, 89.8, 30.4},
        {87.5, 87.9, 89.8, 17.4},
        {87.5, 88.1, 89.8, 26.1},
        {87.5, 88.8, 89.8, 56.5},
        // AnthropicHH
        {48.8, 49.5, 50.8, 35.0},
        {48.8, 49.5, 50.8, 35.0},
        {48.8, 49.2, 50.8, 20.0},
        {48.8, 50.2, 50.8, 70.0},
    };
    for (const auto& c : cells) {
        double value = pgr(c.weak / 100, c.w2s / 100, c.ceiling / 100) * 100.0;
        CHECK(std::abs(value - c.printed_pgr) <= 0.05);
    }
}

// ---- synthetic task ---------------------------------------------------------------

TEST_CASE("synthetic task generation is deterministic") {
    SyntheticTaskSpec spec;
    spec.num_questions = 50;
    spec.hidden_rule_seed = 9;
    auto a = generate_synthetic_task(spec);
    auto b = generate_synthetic_task(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].question_text == b[i].question_text);
        REQUIRE(a[i].candidates.size() == 2);
        CHECK(a[i].candidates[0].answer_text == b[i].candidates[0].answer_text);
        CHECK(a[i].candidates[1].answer_text == b[i].candidates[1].answer_text);
    }
}

TEST_CASE("label is a deterministic function of the planted token pair") {
    SyntheticTaskSpec spec;
    spec.num_questions = 400;
    spec.hidden_rule_seed = 5;
    auto questions = generate_synthetic_task(spec);
    auto table = synthetic_rule_table(spec.hidden_rule_seed);

    std::regex pair_re(R"(kx(\d) link ky(\d))");
    std::map<std::pair<int, int>, int> seen_label;
    int row_count[4] = {0, 0, 0, 0};
    for (const auto& q : questions) {
        for (const auto& c : q.candidates) {
            std::smatch m;
            REQUIRE(std::regex_search(c.answer_text, m, pair_re));
            int x = std::stoi(m[1]);
            int y = std::stoi(m[2]);
            const int label = c.is_correct ? 1 : 0;
            CHECK(table[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] == label);
            auto [it, inserted] = seen_label.emplace(std::make_pair(x, y), label);
            if (!inserted) CHECK(it->second == label);
            row_count[x] += 1;
        }
    }
    // Balanced rule table: every row and column sums to 2.
    for (int x = 0; x < 4; ++x) {
        int row = 0, col = 0;
        for (int y = 0; y < 4; ++y) {
            row += table[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            col += table[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
        }
        CHECK(row == 2);
        CHECK(col == 2);
        CHECK(row_count[x] > 0);
    }
}

namespace {

double weak_plain_accuracy(double surface_noise, std::uint64_t seed) {
    SyntheticTaskSpec spec;
    spec.num_questions = 500;
    spec.hidden_rule_seed = seed;
    spec.surface_noise = surface_noise;
    auto samples = convert_all(generate_synthetic_task(spec), 3);
    auto split = sample_and_split(samples, 20000, 0.3, 4);

    std::vector<TrainExample> data;
    for (const auto& s : split.train_half)
        data.push_back({plain_text(s), SoftLabel::from_hard(s.label)});
    Classifier weak(ClassifierConfig{CapacityTier::weak, 1u << 12, 0, 1, 2});
    Classifier trained = train(weak, data, TrainConfig{2, 32, 0.5, LossKind::xent, 0.75, 0.5, 3});
    return evaluate_accuracy(trained, split.test_set);
}

} // namespace

TEST_CASE("no surface noise lets the weak model excel without transcripts") {
    CHECK(weak_plain_accuracy(0.0, 21) >= 0.95);
}

TEST_CASE("full surface noise pins the transcript-free weak model at chance") {
    double acc = weak_plain_accuracy(1.0, 22);
    // ~300 test samples; 3-sigma binomial around 0.5 is ~0.087, padded slightly.
    CHECK(std::abs(acc - 0.5) <= 0.1);
}

// ---- pipeline ---------------------------------------------------------------------

namespace {

ExperimentConfig tiny_config(const std::string& name, std::uint64_t seed, const fs::path& out) {
    ExperimentConfig cfg;
    cfg.name = name;
    cfg.dataset.synthetic.num_questions = 150;
    cfg.dataset.synthetic.hidden_rule_seed = 77;
    cfg.dataset.synthetic.surface_noise = 0.6;
    cfg.split.max_n = 20000;
    cfg.split.test_fraction = 0.3;
    cfg.supervision.mode = SupervisionMode::protocol;
    cfg.supervision.ensemble_kind = EnsembleKind::debate_ensemble;
    cfg.supervision.cardinality = 2;
    cfg.weak_model = {1u << 10, 0};
    cfg.strong_model = {1u << 12, 8};
    cfg.weak_train = TrainConfig{2, 32, 0.5, LossKind::xent, 0.75, 0.5, 0};
    cfg.strong_train = TrainConfig{2, 32, 0.5, LossKind::xent, 0.75, 0.5, 0};
    cfg.master_seed = seed;
    cfg.out_dir = out;
    cfg.jobs = 1;
    return cfg;
}

fs::path scratch() {
    fs::path dir = fs::temp_directory_path() / "w2sg-test-experiment";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("pipeline reruns with one master seed are byte-identical") {
    auto a = run_pipeline(tiny_config("det", 42, scratch() / "a"));
    auto b = run_pipeline(tiny_config("det", 42, scratch() / "b"));
    CHECK(a.manifest.dump() == b.manifest.dump());
    CHECK(a.record.weak_acc == b.record.weak_acc);
    CHECK(a.record.w2s_acc == b.record.w2s_acc);
    CHECK(a.record.ceiling_acc == b.record.ceiling_acc);

    auto c = run_pipeline(tiny_config("det", 43, scratch() / "c"));
    CHECK(a.manifest.dump() != c.manifest.dump());
}

TEST_CASE("record PGR is internally consistent") {
    auto out = run_pipeline(tiny_config("consistency", 7, scratch() / "consistency"));
    const ResultRecord& r = out.record;
    if (r.ceiling_acc != r.weak_acc) {
        CHECK(std::abs(r.pgr - pgr(r.weak_acc, r.w2s_acc, r.ceiling_acc)) < 1e-12);
    } else {
        CHECK(std::isnan(r.pgr));
    }
    CHECK(r.weak_acc >= 0.0);
    CHECK(r.weak_acc <= 1.0);
    CHECK(r.supervisor_acc >= 0.0);
    CHECK(r.w2s_acc <= 1.0);
}

TEST_CASE("degenerate equal tiers still produce a well-formed record") {
    ExperimentConfig cfg = tiny_config("degenerate", 9, scratch() / "degenerate");
    cfg.strong_model = cfg.weak_model;
    cfg.strong_train = cfg.weak_train;
    auto out = run_pipeline(cfg);
    CHECK(out.record.w2s_acc >= 0.0);
    CHECK(out.record.w2s_acc <= 1.0);
    CHECK(out.manifest.contains("result"));
}

TEST_CASE("naive supervision mode uses the weak model as its own supervisor") {
    ExperimentConfig cfg = tiny_config("naive", 11, scratch() / "naive");
    cfg.supervision.mode = SupervisionMode::naive;
    auto out = run_pipeline(cfg);
    CHECK(out.record.supervisor_acc == out.record.weak_acc);
}

TEST_CASE("manifest exposes config digest, seeds and artifact digests") {
    auto out = run_pipeline(tiny_config("manifest", 13, scratch() / "manifest"));
    const auto& m = out.manifest;
    CHECK(m.at("config_digest").get<std::string>().size() == 64);
    CHECK(m.at("seeds").contains("split"));
    CHECK(m.at("seeds").contains("debate"));
    CHECK(m.at("artifacts").contains("weak_labels"));
    CHECK(m.at("artifacts").at("models").contains("student"));
    // Runtime details stay out of the manifest.
    CHECK_FALSE(m.at("result").contains("runtimes_s"));
    CHECK_FALSE(m.at("config").contains("out_dir"));
}

TEST_CASE("ablation validates dimension values") {
    ExperimentConfig cfg = tiny_config("ablate", 15, scratch() / "ablate");
    CHECK_THROWS_AS(run_ablation(cfg, AblationDimension::cardinality, {"0"}), ConfigError);
    CHECK_THROWS_AS(run_ablation(cfg, AblationDimension::turns, {"x"}), ConfigError);
    CHECK_THROWS_AS(run_ablation(cfg, AblationDimension::protocol, {"duet"}), ConfigError);
    CHECK_THROWS_AS(run_ablation(cfg, AblationDimension::turns, {}), ConfigError);
}

TEST_CASE("a small protocol ablation emits one record per value") {
    ExperimentConfig cfg = tiny_config("ablate2", 17, scratch() / "ablate2");
    cfg.supervision.cardinality = 1;
    cfg.supervision.ensemble_kind = EnsembleKind::single;
    auto records = run_ablation(cfg, AblationDimension::protocol,
                                {"debate", "consultancy", "market_making"});
    REQUIRE(records.size() == 3);
    CHECK(records[0].label == "protocol=debate");
    CHECK(records[1].label == "protocol=consultancy");
    CHECK(records[2].label == "protocol=market_making");
}

// ---- reports ------------------------------------------------------------------------

TEST_CASE("report renders Table-2 style percents") {
    ResultRecord r;
    r.label = "Finetune";
    r.weak_acc = 0.900;
    r.supervisor_acc = 0.900;
    r.w2s_acc = 0.915;
    r.ceiling_acc = 0.934;
    r.pgr = pgr(r.weak_acc, r.w2s_acc, r.ceiling_acc);
    fs::path dir = scratch() / "report";
    write_report({r}, ReportLayout::main_table, dir, "main");
    std::string md = read_text_file(dir / "main.md");
    CHECK(md.find("91.5") != std::string::npos);
    CHECK(md.find("44.1") != std::string::npos);
    CHECK(md.find("90.0") != std::string::npos);
    CHECK(md.find("93.4") != std::string::npos);
}

TEST_CASE("records survive CSV and JSON round trips") {
    std::vector<ResultRecord> records;
    Rng rng(5);
    for (int i = 0; i < 4; ++i) {
        ResultRecord r;
        r.label = "cell" + std::to_string(i);
        r.weak_acc = 0.5 + 0.1 * rng.uniform01();
        r.supervisor_acc = r.weak_acc + 0.05;
        r.w2s_acc = r.weak_acc + 0.07 * rng.uniform01();
        r.ceiling_acc = r.weak_acc + 0.2;
        r.pgr = pgr(r.weak_acc, r.w2s_acc, r.ceiling_acc);
        r.config_digest = "d" + std::to_string(i);
        records.push_back(r);
    }
    fs::path dir = scratch() / "roundtrip";
    fs::create_directories(dir);
    save_records_csv(dir / "r.csv", records);
    auto csv = load_records_csv(dir / "r.csv");
    REQUIRE(csv.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(csv[i].label == records[i].label);
        CHECK(csv[i].weak_acc == records[i].weak_acc);
        CHECK(csv[i].supervisor_acc == records[i].supervisor_acc);
        CHECK(csv[i].w2s_acc == records[i].w2s_acc);
        CHECK(csv[i].ceiling_acc == records[i].ceiling_acc);
        CHECK(csv[i].pgr == records[i].pgr);
    }
    save_records_json(dir / "r.json", records);
    auto js = load_records_json(dir / "r.json");
    REQUIRE(js.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(js[i].label == records[i].label);
        CHECK(js[i].w2s_acc == records[i].w2s_acc);
    }

    CHECK_THROWS_AS(write_report({}, ReportLayout::main_table, dir, "nope"), Error);
}

TEST_CASE("config file parsing, overrides, and error paths") {
    fs::path dir = scratch() / "config";
    fs::create_directories(dir);
    fs::path p = dir / "cfg.json";
    write_text_file_atomic(p, R"({
        "name": "from-file",
        "master_seed": 5,
        "supervision": {"mode": "protocol", "ensemble_kind": "debate_ensemble", "cardinality": 4},
        "backend": {"kind": "mock"}
    })");
    ExperimentConfig cfg = load_experiment_config(p, {"supervision.cardinality=6"});
    CHECK(cfg.name == "from-file");
    CHECK(cfg.supervision.cardinality == 6);
    CHECK(cfg.master_seed == 5);

    write_text_file_atomic(p, R"({"supervision": {"cardinality": -2}})");
    try {
        load_experiment_config(p, {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("$.supervision.cardinality") != std::string::npos);
    }

    write_text_file_atomic(p, "{nope");
    CHECK_THROWS_AS(load_experiment_config(p, {}), ConfigError);
}
