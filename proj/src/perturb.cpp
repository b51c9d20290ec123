#include "maldef/perturb.hpp"

#include "maldef/error.hpp"
#include "maldef/seed.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace maldef {

void PerturbSpec::validate() const {
    if (indexs < 1) throw ManifestError("indexs must be at least 1");
    if (!(sizes > 0.0 && sizes <= 1.0)) throw ManifestError("sizes must lie in (0, 1]");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ManifestError("eta must lie in [0, 1]");
    if (retries < 1) throw ManifestError("retries must be at least 1");
}

std::string_view to_string(Generator g) noexcept {
    return g == Generator::random_bytes ? "random-bytes" : "gradient-bytes";
}

std::string_view to_string(Injection op) noexcept { return op == Injection::replace ? "replace" : "insert"; }

ByteSequence gen_random_perturbation(std::size_t length, std::uint64_t seed) {
    if (length == 0) throw PreconditionError("random perturbation length must be at least 1");
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> out(length);
    // 8 bytes per draw keeps every byte uniform
    for (std::size_t i = 0; i < length; i += 8) {
        std::uint64_t word = rng();
        for (std::size_t k = 0; k < 8 && i + k < length; ++k, word >>= 8)
            out[i + k] = static_cast<std::uint8_t>(word & 0xFF);
    }
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence apply_gradient_step(std::span<const std::uint8_t> x, std::span<const std::int8_t> sign, double eta) {
    if (sign.size() != x.size()) throw ShapeError("gradient sign length differs from byte length");
    const double step = eta * 255.0;
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (sign[i] == 0) {
            out[i] = x[i];
            continue;
        }
        const double v = std::clamp(static_cast<double>(x[i]) + step * sign[i], 0.0, 255.0);
        out[i] = static_cast<std::uint8_t>(std::floor(v + 0.5));
    }
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence gen_gradient_perturbation(std::span<const std::uint8_t> x, const Detector& detector,
                                       std::size_t label, double eta) {
    if (x.empty()) throw PreconditionError("gradient perturbation of an empty sample");
    if (eta == 0.0) return ByteSequence(std::vector<std::uint8_t>(x.begin(), x.end()), Provenance::adversarial);
    return apply_gradient_step(x, detector.gradient_sign(x, label), eta);
}

ByteSequence inject_replace(const ByteSequence& x, std::size_t index, std::span<const std::uint8_t> block) {
    if (index >= x.size())
        throw PreconditionError("replace index " + std::to_string(index) + " outside sequence of length " +
                                std::to_string(x.size()));
    std::vector<std::uint8_t> out = x.vec();
    const std::size_t n = std::min(block.size(), out.size() - index);
    std::copy_n(block.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(index));
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence inject_insert(const ByteSequence& x, std::size_t index, std::span<const std::uint8_t> block) {
    if (index > x.size())
        throw PreconditionError("insert index " + std::to_string(index) + " outside sequence of length " +
                                std::to_string(x.size()));
    std::vector<std::uint8_t> out;
    out.reserve(x.size() + block.size());
    const auto& src = x.vec();
    out.insert(out.end(), src.begin(), src.begin() + static_cast<std::ptrdiff_t>(index));
    out.insert(out.end(), block.begin(), block.end());
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(index), src.end());
    return ByteSequence(std::move(out), Provenance::adversarial);
}

std::vector<std::size_t> split_budget(std::size_t total, std::span<const std::size_t> sites_descending) {
    const std::size_t k = sites_descending.size();
    std::vector<std::size_t> lengths(k, k ? total / k : 0);
    if (k == 0) return lengths;
    // descending order: the lowest offsets sit at the back
    for (std::size_t r = 0; r < total % k; ++r) ++lengths[k - 1 - r];
    return lengths;
}

ByteSequence apply_injections(const ByteSequence& x, std::span<const std::size_t> sites,
                              std::span<const std::vector<std::uint8_t>> blocks, Injection op) {
    if (sites.size() != blocks.size()) throw ShapeError("one block per injection site required");
    for (std::size_t i = 1; i < sites.size(); ++i)
        if (sites[i] > sites[i - 1]) throw PreconditionError("injection sites must be in descending order");
    ByteSequence out = x.with_provenance(Provenance::adversarial);
    for (std::size_t i = 0; i < sites.size(); ++i) {
        if (blocks[i].empty()) continue;
        out = op == Injection::replace ? inject_replace(out, sites[i], blocks[i]) : inject_insert(out, sites[i], blocks[i]);
    }
    return out;
}

std::vector<AdvSample> generate_adversarial(const ByteSequence& x, std::size_t label, const std::string& id,
                                            const Detector& detector, const PerturbSpec& spec,
                                            GenerationStats* stats) {
    spec.validate();
    if (x.empty()) throw PreconditionError("cannot perturb an empty sample");
    const std::size_t n = x.size();
    std::mt19937_64 rng(child_seed(spec.seed, id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> position(0, n - 1);
    std::bernoulli_distribution coin(0.5);

    // The gradient transform only depends on x, so one backward pass serves every attempt.
    const ByteSequence transformed = gen_gradient_perturbation(x.span(), detector, label, spec.eta);

    std::vector<AdvSample> fooled;
    const std::size_t sites_wanted = std::min(spec.indexs, n);
    for (std::size_t attempt = 0; attempt < spec.retries && fooled.empty(); ++attempt) {
        std::set<std::size_t, std::greater<>> drawn;
        while (drawn.size() < sites_wanted) drawn.insert(position(rng));
        const std::vector<std::size_t> sites(drawn.begin(), drawn.end());

        const double size = unit(rng) * spec.sizes;
        const auto total = static_cast<std::size_t>(std::llround(size * static_cast<double>(n)));
        const auto lengths = split_budget(total, sites);
        const Injection op = coin(rng) ? Injection::insert : Injection::replace;

        std::vector<std::vector<std::uint8_t>> random_blocks(sites.size()), gradient_blocks(sites.size());
        for (std::size_t i = 0; i < sites.size(); ++i) {
            if (lengths[i] == 0) continue;
            random_blocks[i] = gen_random_perturbation(lengths[i], rng()).vec();
            auto& g = gradient_blocks[i];
            g.resize(lengths[i]);
            for (std::size_t j = 0; j < lengths[i]; ++j) g[j] = transformed[(sites[i] + j) % n];
        }

        const ByteSequence candidates[2] = {apply_injections(x, sites, random_blocks, op),
                                            apply_injections(x, sites, gradient_blocks, op)};
        const Generator tags[2] = {Generator::random_bytes, Generator::gradient_bytes};
        for (int c = 0; c < 2; ++c) {
            if (stats) ++stats->candidates;
            if (detector.classify(candidates[c].span()) != label)
                fooled.push_back({candidates[c], id, tags[c], op, true});
        }
        if (stats) ++stats->attempts;
    }
    return fooled;
}

} // namespace maldef
