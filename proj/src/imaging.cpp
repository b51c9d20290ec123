#include "maldef/imaging.hpp"

#include "maldef/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace maldef {

std::size_t image_side(std::size_t n) noexcept {
    if (n == 0) return 0;
    auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
    while (side * side < n) ++side;
    while (side > 1 && (side - 1) * (side - 1) >= n) --side;
    return side;
}

GrayImage bytes_to_image(std::span<const std::uint8_t> x) {
    if (x.empty()) throw PreconditionError("cannot build an image from an empty byte sequence");
    GrayImage img;
    img.side = image_side(x.size());
    img.source_length = x.size();
    img.pixels.assign(img.side * img.side, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) img.pixels[i] = x[i] / 255.0;
    return img;
}

ByteSequence image_to_bytes(const GrayImage& img) {
    std::vector<std::uint8_t> out(img.source_length);
    for (std::size_t i = 0; i < img.source_length; ++i) {
        const double v = std::floor(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0 + 0.5);
        out[i] = static_cast<std::uint8_t>(v);
    }
    return ByteSequence(std::move(out));
}

namespace {

// Source coordinate of each target index along one axis: lower index and weight of the upper one.
struct Tap {
    std::size_t lo;
    std::size_t hi;
    double w;
};

std::vector<Tap> axis_taps(std::size_t side, std::size_t target) {
    std::vector<Tap> taps(target);
    if (target == 1 || side == 1) {
        // single output samples the center; single input row replicates
        for (std::size_t i = 0; i < target; ++i) {
            if (side == 1) {
                taps[i] = {0, 0, 0.0};
            } else {
                const double pos = (side - 1) / 2.0;
                const auto lo = static_cast<std::size_t>(std::floor(pos));
                taps[i] = {lo, std::min(lo + 1, side - 1), pos - lo};
            }
        }
        return taps;
    }
    for (std::size_t i = 0; i < target; ++i) {
        // exact rational position i * (side-1) / (target-1)
        const std::size_t num = i * (side - 1);
        const std::size_t lo = num / (target - 1);
        const double w = static_cast<double>(num % (target - 1)) / static_cast<double>(target - 1);
        taps[i] = {lo, std::min(lo + 1, side - 1), w};
    }
    return taps;
}

} // namespace

ResizedImage resize(std::span<const double> pixels, std::size_t side, std::size_t target) {
    if (target == 0) throw PreconditionError("resize target side must be at least 1");
    if (pixels.size() != side * side) throw ShapeError("resize input is not side*side");
    ResizedImage out;
    out.side = target;
    out.pixels.assign(target * target, 0.0);
    if (side == target) {
        std::copy(pixels.begin(), pixels.end(), out.pixels.begin());
        return out;
    }
    const auto taps = axis_taps(side, target);
    for (std::size_t r = 0; r < target; ++r) {
        const Tap& tr = taps[r];
        const double* row_lo = pixels.data() + tr.lo * side;
        const double* row_hi = pixels.data() + tr.hi * side;
        double* dst = out.pixels.data() + r * target;
        for (std::size_t c = 0; c < target; ++c) {
            const Tap& tc = taps[c];
            const double top = row_lo[tc.lo] + tc.w * (row_lo[tc.hi] - row_lo[tc.lo]);
            const double bottom = row_hi[tc.lo] + tc.w * (row_hi[tc.hi] - row_hi[tc.lo]);
            dst[c] = top + tr.w * (bottom - top);
        }
    }
    return out;
}

std::vector<double> resize_transpose(std::span<const double> grad, std::size_t target, std::size_t side) {
    if (grad.size() != target * target)
        throw ShapeError("resize_transpose gradient is " + std::to_string(grad.size()) +
                         " values, expected " + std::to_string(target * target));
    if (side == 0) throw ShapeError("resize_transpose needs a positive source side");
    std::vector<double> out(side * side, 0.0);
    if (side == target) {
        std::copy(grad.begin(), grad.end(), out.begin());
        return out;
    }
    const auto taps = axis_taps(side, target);
    for (std::size_t r = 0; r < target; ++r) {
        const Tap& tr = taps[r];
        for (std::size_t c = 0; c < target; ++c) {
            const Tap& tc = taps[c];
            const double g = grad[r * target + c];
            if (g == 0.0) continue;
            const double g_top = g * (1.0 - tr.w);
            const double g_bottom = g * tr.w;
            out[tr.lo * side + tc.lo] += g_top * (1.0 - tc.w);
            out[tr.lo * side + tc.hi] += g_top * tc.w;
            out[tr.hi * side + tc.lo] += g_bottom * (1.0 - tc.w);
            out[tr.hi * side + tc.hi] += g_bottom * tc.w;
        }
    }
    return out;
}

ResizedImage bytes_to_input(std::span<const std::uint8_t> x, std::size_t target) {
    if (x.empty()) {
        const double zero = 0.0;
        return resize(std::span<const double>(&zero, 1), 1, target);
    }
    return resize(bytes_to_image(x), target);
}

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t side) {
    if (pixels.size() != side * side) throw ShapeError("pgm pixels are not side*side");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "P5\n" << side << ' ' << side << "\n255\n";
    for (double p : pixels) {
        const auto v = static_cast<unsigned char>(std::floor(std::clamp(p, 0.0, 1.0) * 255.0 + 0.5));
        out.put(static_cast<char>(v));
    }
}

} // namespace maldef
