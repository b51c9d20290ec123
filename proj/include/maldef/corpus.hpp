#pragma once

#include "maldef/bytes.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <string>
#include <vector>

namespace maldef {

struct Sample {
    ByteSequence bytes;
    std::size_t label = 0;
    std::string id;
};

struct CorpusManifest {
    std::vector<std::string> class_names;
    std::vector<std::size_t> counts;
    std::vector<double> ratios{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t class_count() const noexcept { return class_names.size(); }
};

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

/// One sample per regular file under <dir>/<class name>/, ordered by path.
/// Files with the .bytes extension are parsed as hex dumps.
std::vector<Sample> ingest_binary_dir(const std::filesystem::path& dir, const CorpusManifest& manifest);

/// Parses address-prefixed hex dump text; "??" bytes become 0x00.
ByteSequence ingest_hexdump(const std::filesystem::path& path);
ByteSequence parse_hexdump(std::string_view text);

ByteSequence read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Shape of the generated corpus. Filler runs are at least twice the chunk
// length the entropy filter will run with.
struct SynthesisProfile {
    std::size_t min_size = 4 * 1024;
    std::size_t max_size = 64 * 1024;
    std::size_t chunk_length = 256;
    double motif_share = 0.60;
    double random_share = 0.25;
    double filler_share = 0.15;
};

inline constexpr std::size_t motifs_per_class = 16;
inline constexpr std::size_t motif_length = 8;

using Motif = std::array<std::uint8_t, motif_length>;
/// Per-class motif dictionaries; pairwise disjoint across classes.
std::vector<std::vector<Motif>> motif_dictionaries(const CorpusManifest& manifest);

/// Deterministic labeled corpus; every byte is a function of the manifest and profile.
std::vector<Sample> synth_corpus(const CorpusManifest& manifest, const SynthesisProfile& profile = {});

/// Writes samples as <dir>/<class name>/<id file> plus manifest.json.
void write_corpus(const std::filesystem::path& dir, const CorpusManifest& manifest,
                  const std::vector<Sample>& samples);

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> test;
    std::vector<std::string> warnings;
};

/// Stratified seeded split. Flooring remainders go to train, then validation.
/// Classes with fewer than 3 samples go wholly to train with a warning.
Split split(const std::vector<Sample>& samples, const CorpusManifest& manifest);

/// Seeded uniform subset without replacement, in original order; the whole
/// set when n >= its size.
std::vector<Sample> attack_subset(const std::vector<Sample>& test, std::size_t n, std::uint64_t seed);

} // namespace maldef
