#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "w2sg/common.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

using namespace w2sg;
using nlohmann::json;

namespace {

std::string bin() {
    const char* b = std::getenv("W2SG_BIN");
    REQUIRE(b != nullptr);
    return b;
}

fs::path scratch() {
    fs::path dir = fs::temp_directory_path() / "w2sg-test-cli";
    fs::create_directories(dir);
    return dir;
}

struct RunResult {
    int exit_code;
    std::string output; // stdout + stderr
};

RunResult run_cmd(const std::string& args) {
    fs::path log = scratch() / "cmd.log";
    std::string cmd = bin() + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_text_file(log);
    return r;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::trunc);
    out << content;
}

// Small, fast, fully offline config.
json small_config(const std::string& name, const fs::path& out_dir) {
    return json{
        {"name", name},
        {"master_seed", 21},
        {"dataset",
         json{{"kind", "synthetic"},
              {"synthetic", json{{"num_questions", 120}, {"hidden_rule_seed", 3},
                                 {"surface_noise", 0.6}}}}},
        {"split", json{{"max_n", 20000}, {"test_fraction", 0.3}}},
        {"protocol", json{{"kind", "debate"}, {"num_turns", 3}}},
        {"supervision",
         json{{"mode", "protocol"}, {"ensemble_kind", "debate_ensemble"}, {"cardinality", 2}}},
        {"weak_model", json{{"feature_dim", 1024}, {"hidden_width", 0}}},
        {"strong_model", json{{"feature_dim", 4096}, {"hidden_width", 8}}},
        {"backend", json{{"kind", "mock"}}},
        {"out_dir", out_dir.string()},
        {"jobs", 1}};
}

} // namespace

TEST_CASE("convert: happy path prints balanced counts and is byte-deterministic") {
    fs::path dir = scratch() / "convert";
    fs::create_directories(dir);
    fs::path in = dir / "in.jsonl";
    write_file(in,
               R"({"id":"q1","question":"one","candidates":[{"text":"a","correct":true},{"text":"b","correct":false},{"text":"c","correct":false}]})"
               "\n"
               R"({"id":"q2","question":"two","candidates":[{"text":"d","correct":true},{"text":"e","correct":false}]})"
               "\n");
    fs::path out1 = dir / "out1.jsonl";
    fs::path out2 = dir / "out2.jsonl";

    auto r1 = run_cmd("convert --input " + in.string() + " --output " + out1.string() +
                      " --seed 9");
    CHECK(r1.exit_code == 0);
    CHECK(r1.output.find("label 1: 2") != std::string::npos);
    CHECK(r1.output.find("label 0: 2") != std::string::npos);

    auto r2 = run_cmd("convert --input " + in.string() + " --output " + out2.string() +
                      " --seed 9");
    CHECK(r2.exit_code == 0);
    CHECK(read_text_file(out1) == read_text_file(out2));
}

TEST_CASE("convert: malformed line is exit 2 naming the line") {
    fs::path dir = scratch() / "convert-bad";
    fs::create_directories(dir);
    fs::path in = dir / "bad.jsonl";
    std::string good =
        R"({"id":"q","question":"x","candidates":[{"text":"a","correct":true},{"text":"b","correct":false}]})";
    std::string content;
    for (int i = 0; i < 11; ++i) content += good + "\n";
    content += "{broken\n";
    write_file(in, content);
    auto r = run_cmd("convert --input " + in.string() + " --output " + (dir / "o.jsonl").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("line 12") != std::string::npos);
}

TEST_CASE("run: synthetic config exits 0 with a result on stdout") {
    fs::path dir = scratch() / "run";
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    write_file(cfg, small_config("cli-run", dir / "out").dump(2));
    auto r = run_cmd("run --config " + cfg.string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("w2s_acc") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "cli-run" / "manifest.json"));
    CHECK(fs::exists(dir / "out" / "report.md"));
}

TEST_CASE("run: missing config file is exit 2") {
    auto r = run_cmd("run --config /nonexistent/cfg.json");
    CHECK(r.exit_code == 2);
}

TEST_CASE("run: overrides land in the manifest") {
    fs::path dir = scratch() / "override";
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    write_file(cfg, small_config("cli-override", dir / "out").dump(2));
    auto r = run_cmd("run --config " + cfg.string() +
                     " --override supervision.cardinality=3");
    CHECK(r.exit_code == 0);
    json manifest = json::parse(read_text_file(dir / "out" / "cli-override" / "manifest.json"));
    CHECK(manifest["config"]["supervision"]["cardinality"].get<int>() == 3);
}

TEST_CASE("debate: reruns hit the cache with zero backend calls") {
    fs::path dir = scratch() / "debate";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    json c = small_config("cli-debate", dir / "out");
    c["dataset"]["synthetic"]["num_questions"] = 40;
    c["cache_dir"] = (dir / "cache").string();
    write_file(cfg, c.dump(2));

    auto first = run_cmd("debate --config " + cfg.string());
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("backend_calls=0") == std::string::npos);

    auto second = run_cmd("debate --config " + cfg.string());
    CHECK(second.exit_code == 0);
    CHECK(second.output.find("backend_calls=0") != std::string::npos);
}

TEST_CASE("debate: consultancy config writes single-turn transcripts") {
    fs::path dir = scratch() / "debate-consult";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path cfg_path = dir / "cfg.json";
    json c = small_config("cli-consult", dir / "out");
    c["dataset"]["synthetic"]["num_questions"] = 30;
    c["protocol"]["kind"] = "consultancy";
    c["supervision"]["ensemble_kind"] = "single";
    c["supervision"]["cardinality"] = 1;
    write_file(cfg_path, c.dump(2));

    auto r = run_cmd("debate --config " + cfg_path.string());
    CHECK(r.exit_code == 0);
    bool found = false;
    for (const auto& e : fs::directory_iterator(dir / "out" / "transcripts")) {
        found = true;
        std::ifstream in(e.path());
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            ++lines;
            json t = json::parse(line);
            CHECK(t["protocol"] == "consultancy");
            CHECK(t["turns"].size() == 1);
        }
        CHECK(lines > 0);
    }
    CHECK(found);
}

TEST_CASE("ablate: bad dimension is exit 2, good sweep writes a table") {
    fs::path dir = scratch() / "ablate";
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    json c = small_config("cli-ablate", dir / "out");
    c["dataset"]["synthetic"]["num_questions"] = 60;
    c["supervision"]["cardinality"] = 1;
    c["supervision"]["ensemble_kind"] = "single";
    write_file(cfg, c.dump(2));

    auto bad = run_cmd("ablate --config " + cfg.string() + " --dimension bogus --values 1,2");
    CHECK(bad.exit_code == 2);

    auto good = run_cmd("ablate --config " + cfg.string() + " --dimension turns --values 1,2");
    CHECK(good.exit_code == 0);
    std::string md = read_text_file(dir / "out" / "ablation_turns.md");
    CHECK(md.find("turns=1") != std::string::npos);
    CHECK(md.find("turns=2") != std::string::npos);
}

TEST_CASE("cache stats and clear") {
    fs::path dir = scratch() / "cache-cmd";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    json c = small_config("cli-cache", dir / "out");
    c["dataset"]["synthetic"]["num_questions"] = 20;
    c["cache_dir"] = (dir / "cache").string();
    write_file(cfg, c.dump(2));
    CHECK(run_cmd("debate --config " + cfg.string()).exit_code == 0);

    auto stats = run_cmd("cache stats --cache-dir " + (dir / "cache").string());
    CHECK(stats.exit_code == 0);
    CHECK(stats.output.find("entries") != std::string::npos);

    auto clear = run_cmd("cache clear --cache-dir " + (dir / "cache").string());
    CHECK(clear.exit_code == 0);
    auto stats2 = run_cmd("cache stats --cache-dir " + (dir / "cache").string());
    CHECK(stats2.output.find(" 0 entries") != std::string::npos);
}

TEST_CASE("report: renders from saved records") {
    fs::path dir = scratch() / "report";
    fs::create_directories(dir);
    fs::path cfg = dir / "cfg.json";
    write_file(cfg, small_config("cli-report", dir / "out").dump(2));
    CHECK(run_cmd("run --config " + cfg.string()).exit_code == 0);
    auto r = run_cmd("report --records " + (dir / "out" / "records.json").string() +
                     " --layout ablation_table --out-dir " + (dir / "rep").string() +
                     " --stem table");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "rep" / "table.md"));
    CHECK(fs::exists(dir / "rep" / "table.csv"));
}
