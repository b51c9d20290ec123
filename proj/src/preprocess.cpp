#include "maldef/preprocess.hpp"

#include "maldef/error.hpp"

#include <array>
#include <cmath>
#include <string>

namespace maldef {

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
    case Provenance::original: return "original";
    case Provenance::preprocessed: return "preprocessed";
    case Provenance::adversarial: return "adversarial";
    }
    return "unknown";
}

void PreprocessConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 8.0))
        throw ManifestError("preprocess threshold must lie in [0, 8], got " + std::to_string(threshold));
    if (chunk_length < 2)
        throw ManifestError("preprocess chunk length must be at least 2 bytes");
}

double entropy(std::span<const std::uint8_t> chunk) {
    if (chunk.empty()) throw PreconditionError("entropy of an empty chunk is undefined");
    std::array<std::size_t, 256> counts{};
    for (std::uint8_t b : chunk) ++counts[b];
    const double n = static_cast<double>(chunk.size());
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    // -0.0 for a constant chunk
    return h <= 0.0 ? 0.0 : h;
}

namespace {

template <typename Keep>
void filter_chunks(std::span<const std::uint8_t> x, const PreprocessConfig& cfg, Keep&& keep) {
    const std::size_t l = cfg.chunk_length;
    for (std::size_t start = 0; start < x.size(); start += l) {
        const std::size_t len = std::min(l, x.size() - start);
        const auto chunk = x.subspan(start, len);
        const bool tail = len < l;
        if ((tail && cfg.keep_partial_tail) || entropy(chunk) > cfg.threshold) keep(start, chunk);
    }
}

} // namespace

ByteSequence preprocess(const ByteSequence& x, const PreprocessConfig& cfg) {
    cfg.validate();
    std::vector<std::uint8_t> out;
    out.reserve(x.size());
    filter_chunks(x.span(), cfg, [&](std::size_t, std::span<const std::uint8_t> chunk) {
        out.insert(out.end(), chunk.begin(), chunk.end());
    });
    return ByteSequence(std::move(out), Provenance::preprocessed);
}

FilteredBytes preprocess_with_offsets(const ByteSequence& x, const PreprocessConfig& cfg) {
    cfg.validate();
    std::vector<std::uint8_t> out;
    std::vector<std::size_t> offsets;
    out.reserve(x.size());
    offsets.reserve(x.size());
    filter_chunks(x.span(), cfg, [&](std::size_t start, std::span<const std::uint8_t> chunk) {
        out.insert(out.end(), chunk.begin(), chunk.end());
        for (std::size_t i = 0; i < chunk.size(); ++i) offsets.push_back(start + i);
    });
    return {ByteSequence(std::move(out), Provenance::preprocessed), std::move(offsets)};
}

} // namespace maldef
