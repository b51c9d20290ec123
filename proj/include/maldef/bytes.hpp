#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace maldef {

enum class Provenance { original, preprocessed, adversarial };

std::string_view to_string(Provenance p) noexcept;

// Immutable byte buffer tagged with where it came from.
class ByteSequence {
public:
    ByteSequence() = default;
    explicit ByteSequence(std::vector<std::uint8_t> bytes,
                          Provenance provenance = Provenance::original)
        : bytes_(std::move(bytes)), provenance_(provenance) {}

    std::span<const std::uint8_t> span() const noexcept { return bytes_; }
    const std::vector<std::uint8_t>& vec() const noexcept { return bytes_; }
    std::size_t size() const noexcept { return bytes_.size(); }
    bool empty() const noexcept { return bytes_.empty(); }
    std::uint8_t operator[](std::size_t i) const noexcept { return bytes_[i]; }
    Provenance provenance() const noexcept { return provenance_; }

    ByteSequence with_provenance(Provenance p) const { return ByteSequence(bytes_, p); }

    friend bool operator==(const ByteSequence& a, const ByteSequence& b) noexcept {
        return a.bytes_ == b.bytes_;
    }

private:
    std::vector<std::uint8_t> bytes_;
    Provenance provenance_ = Provenance::original;
};

} // namespace maldef
