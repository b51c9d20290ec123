#include "maldef/error.hpp"
#include "maldef/imaging.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

using namespace maldef;

namespace {

std::vector<double> random_pixels(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& p : v) p = u(rng);
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

} // namespace

TEST_CASE("image side is the ceiling square root") {
    CHECK(image_side(0) == 0);
    CHECK(image_side(1) == 1);
    CHECK(image_side(4) == 2);
    CHECK(image_side(5) == 3);
    CHECK(image_side(1000) == 32);
    CHECK(image_side(1024) == 32);
    CHECK(image_side(1025) == 33);
    for (std::size_t n = 1; n < 5000; n += 7) {
        const std::size_t s = image_side(n);
        CHECK(s * s >= n);
        CHECK((s - 1) * (s - 1) < n);
    }
}

TEST_CASE("bytes become row-major pixels with zero padding") {
    const std::vector<std::uint8_t> x{0, 255, 51};
    const auto img = bytes_to_image(ByteSequence(x));
    CHECK(img.side == 2);
    CHECK(img.source_length == 3);
    REQUIRE(img.pixels.size() == 4);
    CHECK(img.pixels[0] == 0.0);
    CHECK(img.pixels[1] == 1.0);
    CHECK(img.pixels[2] == doctest::Approx(0.2));
    CHECK(img.pixels[3] == 0.0);
    CHECK_THROWS_AS(bytes_to_image(ByteSequence()), PreconditionError);
}

TEST_CASE("image to bytes inverts the conversion") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::uint8_t> x(1 + rng() % 5000);
        for (auto& b : x) b = static_cast<std::uint8_t>(rng());
        CHECK(image_to_bytes(bytes_to_image(ByteSequence(x))).vec() == x);
    }
    GrayImage half{1, 1, {0.5}};  // 127.5 rounds up
    CHECK(image_to_bytes(half)[0] == 128);
}

TEST_CASE("resize of a 2x2 checker to 3x3 has 0.5 at the center") {
    const std::vector<double> px{0.0, 1.0, 1.0, 0.0};
    const auto r = resize(px, 2, 3);
    REQUIRE(r.pixels.size() == 9);
    CHECK(r.pixels[4] == doctest::Approx(0.5).epsilon(1e-15));
    // corners are sampled exactly
    CHECK(r.pixels[0] == 0.0);
    CHECK(r.pixels[2] == 1.0);
    CHECK(r.pixels[6] == 1.0);
    CHECK(r.pixels[8] == 0.0);
    CHECK(r.pixels[1] == doctest::Approx(0.5));
}

TEST_CASE("resize is the identity at equal size and keeps constants") {
    std::mt19937_64 rng(4);
    const auto px = random_pixels(rng, 49);
    CHECK(resize(px, 7, 7).pixels == px);
    const std::vector<double> flat(100, 0.25);
    for (std::size_t t : {1, 3, 10, 64}) {
        for (double v : resize(flat, 10, t).pixels) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
    }
    const std::vector<double> one{0.7};
    for (double v : resize(one, 1, 5).pixels) CHECK(v == 0.7);
}

TEST_CASE("resize is linear") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const std::size_t side = 1 + rng() % 40;
        const std::size_t target = 1 + rng() % 40;
        const auto x = random_pixels(rng, side * side);
        const auto y = random_pixels(rng, side * side);
        const double a = 1.7, b = -0.3;
        std::vector<double> mix(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
        const auto rx = resize(x, side, target).pixels;
        const auto ry = resize(y, side, target).pixels;
        const auto rm = resize(mix, side, target).pixels;
        for (std::size_t i = 0; i < rm.size(); ++i) CHECK(std::abs(rm[i] - (a * rx[i] + b * ry[i])) <= 1e-6);
    }
}

TEST_CASE("resize_transpose is the exact adjoint of resize") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
        const std::size_t side = 1 + rng() % 90;
        const std::size_t target = 1 + rng() % 70;
        const auto a = random_pixels(rng, side * side);
        const auto b = random_pixels(rng, target * target);
        const auto ra = resize(a, side, target).pixels;
        const auto tb = resize_transpose(b, target, side);
        REQUIRE(tb.size() == side * side);
        CHECK(std::abs(dot(ra, b) - dot(a, tb)) <= 1e-6 * norm(a) * norm(b));
    }
}

TEST_CASE("resize preconditions") {
    const std::vector<double> px(9, 0.0);
    CHECK_THROWS_AS(resize(px, 2, 3), ShapeError);
    CHECK_THROWS_AS(resize_transpose(px, 2, 3), ShapeError);
}

TEST_CASE("empty byte sequence maps to a zero model input") {
    const auto r = bytes_to_input({}, 8);
    CHECK(r.side == 8);
    for (double v : r.pixels) CHECK(v == 0.0);
}

TEST_CASE("pgm output has a P5 header and one byte per pixel") {
    const auto path = std::filesystem::temp_directory_path() / "maldef_test.pgm";
    const std::vector<double> px{0.0, 1.0, 0.5, 0.25};
    write_pgm(path, px, 2);
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    in.get();
    CHECK(magic == "P5");
    CHECK(w == 2);
    CHECK(h == 2);
    CHECK(maxv == 255);
    char buf[4];
    in.read(buf, 4);
    CHECK(static_cast<unsigned char>(buf[1]) == 255);
    CHECK(static_cast<unsigned char>(buf[2]) == 128);
    std::filesystem::remove(path);
}
