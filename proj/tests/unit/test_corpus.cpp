#include "maldef/corpus.hpp"
#include "maldef/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace maldef;
namespace fs = std::filesystem;

namespace {

CorpusManifest manifest(std::vector<std::size_t> counts, std::uint64_t seed = 7) {
    CorpusManifest m;
    for (std::size_t k = 0; k < counts.size(); ++k) m.class_names.push_back("c" + std::to_string(k));
    m.counts = std::move(counts);
    m.seed = seed;
    return m;
}

std::vector<Sample> labeled(std::vector<std::size_t> counts) {
    std::vector<Sample> out;
    for (std::size_t k = 0; k < counts.size(); ++k)
        for (std::size_t i = 0; i < counts[k]; ++i)
            out.push_back({ByteSequence({static_cast<std::uint8_t>(k), static_cast<std::uint8_t>(i)}), k,
                           "c" + std::to_string(k) + "/" + std::to_string(i)});
    return out;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::size_t longest_run(const ByteSequence& x) {
    std::size_t best = 0, run = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        run = (i > 0 && x[i] == x[i - 1]) ? run + 1 : 1;
        best = std::max(best, run);
    }
    return best;
}

} // namespace

TEST_CASE("hex dump lines skip the address and map ?? to zero") {
    const auto x = parse_hexdump("00401000 4D 5A 90 00\n00401004 ?? ?? ff 0a\n\n00401008 01\n");
    const std::vector<std::uint8_t> expect{0x4D, 0x5A, 0x90, 0x00, 0x00, 0x00, 0xFF, 0x0A, 0x01};
    CHECK(x.vec() == expect);
    CHECK(parse_hexdump("").empty());
    CHECK(parse_hexdump("00401000\r\n").empty());
}

TEST_CASE("malformed hex tokens report their line") {
    try {
        parse_hexdump("00401000 4D 5A\n00401002 4G\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_hexdump("0 ABC\n"), ParseError);
}

TEST_CASE("manifest validation") {
    auto m = manifest({3, 3});
    CHECK_NOTHROW(m.validate());
    m.ratios = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(m.validate(), ManifestError);
    m = manifest({3});
    m.class_names.push_back("c0");
    m.counts.push_back(1);
    CHECK_THROWS_AS(m.validate(), ManifestError);
    m = manifest({1, 2});
    m.counts.pop_back();
    CHECK_THROWS_AS(m.validate(), ManifestError);
}

TEST_CASE("manifest round trip") {
    TempDir dir("maldef_manifest_test");
    const auto m = manifest({4, 5}, 99);
    save_manifest(dir.path / "m.json", m);
    const auto back = load_manifest(dir.path / "m.json");
    CHECK(back.class_names == m.class_names);
    CHECK(back.counts == m.counts);
    CHECK(back.seed == 99);
    CHECK_THROWS_AS(load_manifest(dir.path / "none.json"), ManifestError);
}

TEST_CASE("motif dictionaries are per-class and disjoint") {
    const auto dicts = motif_dictionaries(manifest({1, 1, 1, 1}));
    REQUIRE(dicts.size() == 4);
    std::set<Motif> all;
    for (const auto& d : dicts) {
        CHECK(d.size() == motifs_per_class);
        std::set<Motif> mine(d.begin(), d.end());
        CHECK(mine.size() == motifs_per_class);
        all.insert(d.begin(), d.end());
    }
    CHECK(all.size() == 4 * motifs_per_class);
}

TEST_CASE("synthetic corpus shape") {
    const auto m = manifest({6, 5, 4});
    SynthesisProfile profile;
    const auto samples = synth_corpus(m, profile);
    REQUIRE(samples.size() == 15);
    std::set<std::string> ids;
    std::size_t per[3] = {};
    for (const auto& s : samples) {
        CHECK(s.bytes.size() >= profile.min_size);
        CHECK(s.bytes.size() <= profile.max_size);
        CHECK(longest_run(s.bytes) >= 2 * profile.chunk_length);
        ids.insert(s.id);
        ++per[s.label];
    }
    CHECK(ids.size() == 15);
    CHECK(per[0] == 6);
    CHECK(per[2] == 4);
    CHECK(synth_corpus(m, profile)[7].bytes == samples[7].bytes);
    CHECK(!(synth_corpus(manifest({6, 5, 4}, 8), profile)[7].bytes == samples[7].bytes));
}

TEST_CASE("synthesis rejects degenerate manifests") {
    CHECK_THROWS_AS(synth_corpus(manifest({5})), ManifestError);
    CHECK_THROWS_AS(synth_corpus(manifest({5, 0})), ManifestError);
}

TEST_CASE("split of five samples is 3/1/1") {
    const auto m = manifest({5});
    const auto s = split(labeled({5}), m);
    CHECK(s.train.size() == 3);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
    CHECK(s.warnings.empty());
}

TEST_CASE("split is stratified, disjoint and covering") {
    const std::vector<std::size_t> counts{7, 4, 10};
    const auto m = manifest(counts);
    const auto samples = labeled(counts);
    const auto s = split(samples, m);
    std::multiset<std::string> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
        for (const auto& x : *part) seen.insert(x.id);
    CHECK(seen.size() == samples.size());
    CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == samples.size());
    auto count = [](const std::vector<Sample>& v, std::size_t k) {
        return std::count_if(v.begin(), v.end(), [k](const Sample& x) { return x.label == k; });
    };
    CHECK(count(s.train, 0) == 5);  // floor 4/1/1, remainder to train
    CHECK(count(s.train, 1) == 3);  // floor 2/0/0, remainders to train then validation
    CHECK(count(s.validation, 1) == 1);
    CHECK(count(s.test, 2) == 2);
    const auto again = split(samples, m);
    CHECK(again.test.front().id == s.test.front().id);
}

TEST_CASE("tiny classes go to train with a warning") {
    const auto s = split(labeled({2, 5}), manifest({2, 5}));
    REQUIRE(s.warnings.size() == 1);
    CHECK(s.warnings[0].find("c0") != std::string::npos);
    CHECK(std::count_if(s.train.begin(), s.train.end(), [](const Sample& x) { return x.label == 0; }) == 2);
}

TEST_CASE("attack subset is seeded and order preserving") {
    const auto samples = labeled({50});
    const auto a = attack_subset(samples, 10, 3);
    CHECK(a.size() == 10);
    CHECK(std::is_sorted(a.begin(), a.end(), [](const Sample& x, const Sample& y) { return x.bytes[1] < y.bytes[1]; }));
    const auto b = attack_subset(samples, 10, 3);
    for (std::size_t i = 0; i < 10; ++i) CHECK(a[i].id == b[i].id);
    CHECK(attack_subset(samples, 80, 3).size() == 50);
}

TEST_CASE("binary directory ingestion") {
    TempDir dir("maldef_ingest_test");
    const auto m = manifest({3, 2});
    const auto samples = synth_corpus(m, SynthesisProfile{4096, 8192});
    write_corpus(dir.path, m, samples);
    std::ofstream(dir.path / "c1" / "extra.bytes") << "00000000 01 02 ??\n";
    const auto back = ingest_binary_dir(dir.path, load_manifest(dir.path / "manifest.json"));
    REQUIRE(back.size() == 6);
    const auto it = std::find_if(back.begin(), back.end(), [](const Sample& s) { return s.id == "c1/extra.bytes"; });
    REQUIRE(it != back.end());
    CHECK(it->bytes.vec() == std::vector<std::uint8_t>{1, 2, 0});
    CHECK(it->label == 1);
    for (const auto& s : samples) {
        const auto found = std::find_if(back.begin(), back.end(), [&](const Sample& b) { return b.id == s.id; });
        REQUIRE(found != back.end());
        CHECK(found->bytes == s.bytes);
    }
    fs::remove_all(dir.path / "c0");
    fs::create_directories(dir.path / "c0");
    try {
        ingest_binary_dir(dir.path, m);
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(std::string(e.what()).find("c0") != std::string::npos);
    }
}
