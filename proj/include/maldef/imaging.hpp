#pragma once

#include "maldef/bytes.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace maldef {

// Square grayscale image built from a byte sequence, row-major, values in [0,1].
// Pixels past source_length are zero padding.
struct GrayImage {
    std::size_t side = 0;
    std::size_t source_length = 0;
    std::vector<double> pixels;
};

// Fixed-size model input.
struct ResizedImage {
    std::size_t side = 0;
    std::vector<double> pixels;
};

/// Smallest side with side * side >= n.
std::size_t image_side(std::size_t n) noexcept;

GrayImage bytes_to_image(std::span<const std::uint8_t> x);
inline GrayImage bytes_to_image(const ByteSequence& x) { return bytes_to_image(x.span()); }

/// Inverse of bytes_to_image on the first source_length pixels (round half up).
ByteSequence image_to_bytes(const GrayImage& img);

/// Bilinear resize with corner-aligned sampling. Linear in the input pixels.
ResizedImage resize(std::span<const double> pixels, std::size_t side, std::size_t target);
inline ResizedImage resize(const GrayImage& img, std::size_t target) {
    return resize(img.pixels, img.side, target);
}

/// Adjoint of resize: maps a target*target gradient back onto side*side pixels.
std::vector<double> resize_transpose(std::span<const double> grad, std::size_t target, std::size_t side);

// The full byte-to-model-input path; an empty sequence maps to a single zero pixel.
ResizedImage bytes_to_input(std::span<const std::uint8_t> x, std::size_t target);

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t side);

} // namespace maldef
