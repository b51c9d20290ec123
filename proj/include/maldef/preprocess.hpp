#pragma once

#include "maldef/bytes.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace maldef {

struct PreprocessConfig {
    double threshold = 1.0;              // bits per symbol, kept iff entropy > threshold
    std::size_t chunk_length = 10 * 1024;
    bool keep_partial_tail = true;

    void validate() const;
};

/// Shannon entropy in bits per symbol of the byte histogram, in [0, 8].
/// Throws PreconditionError on an empty chunk.
double entropy(std::span<const std::uint8_t> chunk);

/// Entropy filter: cuts x into consecutive chunk_length pieces and keeps the
/// ones whose entropy exceeds the threshold, in order. The trailing partial
/// chunk is kept unconditionally when keep_partial_tail is set.
ByteSequence preprocess(const ByteSequence& x, const PreprocessConfig& cfg);

// Same filter, also reporting the input offset of every output byte.
struct FilteredBytes {
    ByteSequence bytes;
    std::vector<std::size_t> source_offset;
};
FilteredBytes preprocess_with_offsets(const ByteSequence& x, const PreprocessConfig& cfg);

} // namespace maldef
