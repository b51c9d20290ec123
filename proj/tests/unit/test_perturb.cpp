#include "maldef/error.hpp"
#include "maldef/perturb.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace maldef;

namespace {

ByteSequence seq(std::vector<std::uint8_t> v) { return ByteSequence(std::move(v)); }

// Classifier that always answers `cls`.
Classifier constant_model(std::size_t classes, std::size_t cls) {
    Classifier m(8, classes, 1);
    m.zero_output_layer();
    m.parameters()[m.layout().b4 + cls] = 5.0;
    return m;
}

// Builds the result in one left-to-right pass over x.
std::vector<std::uint8_t> splice_once(const std::vector<std::uint8_t>& x, std::vector<std::size_t> sites,
                                      std::vector<std::vector<std::uint8_t>> blocks) {
    std::vector<std::size_t> order(sites.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sites[a] < sites[b]; });
    std::vector<std::uint8_t> out;
    std::size_t next = 0;
    for (std::size_t pos = 0; pos <= x.size(); ++pos) {
        // equal sites: the later-applied block ends up first
        std::vector<std::size_t> here;
        while (next < order.size() && sites[order[next]] == pos) here.push_back(order[next++]);
        for (auto it = here.rbegin(); it != here.rend(); ++it) out.insert(out.end(), blocks[*it].begin(), blocks[*it].end());
        if (pos < x.size()) out.push_back(x[pos]);
    }
    return out;
}

bool is_subsequence(const std::vector<std::uint8_t>& small, const std::vector<std::uint8_t>& big) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < big.size() && j < small.size(); ++i)
        if (big[i] == small[j]) ++j;
    return j == small.size();
}

} // namespace

TEST_CASE("gradient step rounds half up and clamps") {
    const std::vector<std::uint8_t> x{100, 100, 100, 250, 3};
    const std::vector<std::int8_t> s{1, -1, 0, 1, -1};
    const auto y = apply_gradient_step(x, s, 0.3);
    CHECK(y[0] == 177);  // 176.5
    CHECK(y[1] == 24);   // 23.5
    CHECK(y[2] == 100);
    CHECK(y[3] == 255);
    CHECK(y[4] == 0);
    CHECK(y.provenance() == Provenance::adversarial);
    CHECK_THROWS_AS(apply_gradient_step(x, std::vector<std::int8_t>{1}, 0.3), ShapeError);
}

TEST_CASE("random perturbation is seeded and covers all byte values") {
    const auto a = gen_random_perturbation(4096, 9);
    CHECK(a.size() == 4096);
    CHECK(a == gen_random_perturbation(4096, 9));
    CHECK(!(a == gen_random_perturbation(4096, 10)));
    std::set<std::uint8_t> values(a.vec().begin(), a.vec().end());
    CHECK(values.size() == 256);
    CHECK(gen_random_perturbation(3, 1).size() == 3);
    CHECK_THROWS_AS(gen_random_perturbation(0, 1), PreconditionError);
}

TEST_CASE("zero step leaves the sample unchanged") {
    const Classifier m(8, 2, 3);
    const Detector d(m, std::nullopt);
    const std::vector<std::uint8_t> x{1, 2, 3, 200, 90};
    CHECK(gen_gradient_perturbation(x, d, 0, 0.0).vec() == x);
    const auto moved = gen_gradient_perturbation(x, d, 0, 0.2);
    CHECK(moved.size() == x.size());
}

TEST_CASE("replace and insert by example") {
    const auto x = seq({1, 2, 3, 4, 5});
    const std::vector<std::uint8_t> block{9, 9, 9};
    CHECK(inject_replace(x, 1, block).vec() == std::vector<std::uint8_t>{1, 9, 9, 9, 5});
    CHECK(inject_replace(x, 3, block).vec() == std::vector<std::uint8_t>{1, 2, 3, 9, 9});
    CHECK(inject_insert(x, 3, block).vec() == std::vector<std::uint8_t>{1, 2, 3, 9, 9, 9, 4, 5});
    CHECK(inject_insert(x, 5, block).vec() == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 9, 9, 9});
    CHECK(inject_insert(x, 0, block).vec() == std::vector<std::uint8_t>{9, 9, 9, 1, 2, 3, 4, 5});
    CHECK_THROWS_AS(inject_replace(x, 5, block), PreconditionError);
    CHECK_THROWS_AS(inject_insert(x, 6, block), PreconditionError);
}

TEST_CASE("budget splits evenly with the remainder at the lowest offsets") {
    const std::vector<std::size_t> sites{90, 50, 10};
    CHECK(split_budget(10, sites) == std::vector<std::size_t>{3, 3, 4});
    CHECK(split_budget(11, sites) == std::vector<std::size_t>{3, 4, 4});
    CHECK(split_budget(2, sites) == std::vector<std::size_t>{0, 1, 1});
    CHECK(split_budget(0, sites) == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("injection structure on random cases") {
    std::mt19937_64 rng(55);
    for (int t = 0; t < 1000; ++t) {
        std::vector<std::uint8_t> x(1 + rng() % 300);
        for (auto& b : x) b = static_cast<std::uint8_t>(rng());
        const std::size_t k = 1 + rng() % 4;
        std::vector<std::size_t> sites;
        std::vector<std::vector<std::uint8_t>> blocks;
        for (std::size_t i = 0; i < k; ++i) {
            sites.push_back(rng() % x.size());
            std::vector<std::uint8_t> b(rng() % 40);
            for (auto& v : b) v = static_cast<std::uint8_t>(rng());
            blocks.push_back(b);
        }
        std::vector<std::size_t> idx(k);
        for (std::size_t i = 0; i < k; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sites[a] > sites[b]; });
        std::vector<std::size_t> s_desc;
        std::vector<std::vector<std::uint8_t>> b_desc;
        for (auto i : idx) {
            s_desc.push_back(sites[i]);
            b_desc.push_back(blocks[i]);
        }
        const auto rep = apply_injections(seq(x), s_desc, b_desc, Injection::replace);
        CHECK(rep.size() == x.size());
        const auto ins = apply_injections(seq(x), s_desc, b_desc, Injection::insert);
        CHECK(is_subsequence(x, ins.vec()));
        CHECK(ins.vec() == splice_once(x, s_desc, b_desc));
    }
}

TEST_CASE("injection sites must descend") {
    const std::vector<std::size_t> up{1, 3};
    const std::vector<std::vector<std::uint8_t>> blocks{{1}, {2}};
    CHECK_THROWS_AS(apply_injections(seq({0, 0, 0, 0}), up, blocks, Injection::insert), PreconditionError);
}

TEST_CASE("perturbation settings validation") {
    PerturbSpec s;
    CHECK(s.indexs == 2);
    CHECK(s.sizes == 0.2);
    CHECK(s.eta == 0.3);
    CHECK(s.retries == 10);
    s.indexs = 0;
    CHECK_THROWS_AS(s.validate(), ManifestError);
    s = {};
    s.sizes = 1.5;
    CHECK_THROWS_AS(s.validate(), ManifestError);
}

TEST_CASE("generator keeps only fooling candidates") {
    const Classifier says_zero = constant_model(2, 0);
    const Detector d(says_zero, std::nullopt);
    std::vector<std::uint8_t> bytes(2000);
    std::mt19937_64 rng(1);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const ByteSequence x(bytes);
    PerturbSpec spec;
    spec.seed = 4;

    GenerationStats fooled_stats;
    const auto found = generate_adversarial(x, 1, "s1", d, spec, &fooled_stats);
    REQUIRE(found.size() == 2);  // both candidates of the first attempt
    CHECK(fooled_stats.attempts == 1);
    CHECK(found[0].generator == Generator::random_bytes);
    CHECK(found[1].generator == Generator::gradient_bytes);
    for (const auto& a : found) {
        CHECK(a.fooled);
        CHECK(a.parent_id == "s1");
        CHECK(a.operation == found[0].operation);
        if (a.operation == Injection::replace) CHECK(a.bytes.size() == x.size());
        else CHECK(a.bytes.size() <= x.size() + 400);
    }

    GenerationStats none_stats;
    CHECK(generate_adversarial(x, 0, "s0", d, spec, &none_stats).empty());
    CHECK(none_stats.attempts == 10);
    CHECK(none_stats.candidates == 20);

    const auto again = generate_adversarial(x, 1, "s1", d, spec);
    CHECK(again[0].bytes == found[0].bytes);
    CHECK(again[1].bytes == found[1].bytes);
}
