#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "w2sg/common.hpp"
#include "w2sg/sha256.hpp"

#include <atomic>
#include <cmath>
#include <set>

using namespace w2sg;

TEST_CASE("sha256 matches published vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 streaming equals one-shot") {
    Sha256 h;
    std::string msg = "the quick brown fox jumps over the lazy dog, repeatedly, ";
    for (int i = 0; i < 10; ++i) msg += msg.substr(0, 13);
    for (std::size_t i = 0; i < msg.size(); i += 7) h.update(msg.substr(i, 7));
    CHECK(h.hex_digest() == sha256_hex(msg));
}

TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("subseed derivation is stable and tag/index sensitive") {
    std::uint64_t a = subseed(42, "split");
    CHECK(a == subseed(42, "split"));
    CHECK(a != subseed(42, "balance"));
    CHECK(a != subseed(43, "split"));
    CHECK(subseed(42, "debate", 0) != subseed(42, "debate", 1));
}

TEST_CASE("rng below stays in range and is deterministic") {
    Rng r1(123), r2(123);
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t n = 1 + static_cast<std::uint64_t>(i);
        std::uint64_t v = r1.below(n);
        CHECK(v < n);
        CHECK(v == r2.below(n));
    }
    CHECK_THROWS_AS(r1.below(0), Error);
}

TEST_CASE("rng uniform01 in [0,1) and coin roughly fair") {
    Rng r(7);
    int heads = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        if (r.coin()) ++heads;
    }
    // 3 sigma for a fair coin at n=10000 is 150.
    CHECK(std::abs(heads - n / 2) <= 150);
}

TEST_CASE("rng normal has sane moments") {
    Rng r(99);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double v = r.normal();
        sum += v;
        sq += v * v;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = i;
    auto w = v;
    Rng r1(5), r2(5);
    r1.shuffle(v);
    r2.shuffle(w);
    CHECK(v == w);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 100);
}

TEST_CASE("atomic file write round trip") {
    fs::path dir = fs::temp_directory_path() / "w2sg-test-util";
    fs::create_directories(dir);
    fs::path p = dir / "atomic.txt";
    write_text_file_atomic(p, "hello\nworld");
    CHECK(read_text_file(p) == "hello\nworld");
    write_text_file_atomic(p, "replaced");
    CHECK(read_text_file(p) == "replaced");
    fs::remove_all(dir);
}

TEST_CASE("parallel_for covers every index and propagates errors") {
    std::vector<std::atomic<int>> hits(500);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (auto& h : hits) CHECK(h.load() == 1);

    CHECK_THROWS_AS(parallel_for(10, 4,
                                 [&](std::size_t i) {
                                     if (i == 3) throw Error("boom");
                                 }),
                    Error);
}

TEST_CASE("string helpers") {
    CHECK(replace_all("a {x} b {x}", "{x}", "y") == "a y b y");
    CHECK(lowercase("AbC09z") == "abc09z");
}
