#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cdpsr/io.hpp"
#include "cdpsr/rng.hpp"
#include "support.hpp"

using namespace cdpsr;

TEST(CounterEngine, ReproducibleAndCounterAddressed) {
    rng::CounterEngine a(rng::derive_key(42, {1, 2})), b(rng::derive_key(42, {1, 2}));
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
    rng::CounterEngine jump(rng::derive_key(42, {1, 2}), 100);
    EXPECT_EQ(jump(), a());
}

TEST(CounterEngine, DistinctStreams) {
    std::set<std::uint64_t> first;
    for (std::uint64_t id = 0; id < 1000; ++id) first.insert(rng::CounterEngine(rng::derive_key(7, {id}))());
    EXPECT_EQ(first.size(), 1000u);
    EXPECT_NE(rng::derive_key(1, {2, 3}), rng::derive_key(1, {3, 2}));
}

TEST(CounterEngine, UnitDoublesRoughlyUniform) {
    rng::CounterEngine eng(rng::derive_key(3, {}));
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng::to_unit(eng());
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s += u;
        s2 += u * u;
    }
    EXPECT_NEAR(s / n, 0.5, 0.005);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
}

TEST(KeyValue, ParsesCommentsAndRejectsJunk) {
    const auto kv = KeyValue::parse("# comment\n a = 1 \n\nb=x y\n");
    EXPECT_EQ(kv.get("a"), "1");
    EXPECT_EQ(kv.get("b"), "x y");
    EXPECT_THROW(kv.get("missing"), ConfigError);
    EXPECT_THROW(KeyValue::parse("novalue\n"), ConfigError);
    EXPECT_THROW(KeyValue::parse_double("k", "1.5x"), ConfigError);
    EXPECT_THROW(KeyValue::parse_uint("k", "-3"), ConfigError);
}

TEST(KeyValue, DoublesRoundTripExactly) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> d(-1e6, 1e6);
    for (int i = 0; i < 500; ++i) {
        const double v = d(gen) * std::pow(10.0, static_cast<int>(gen() % 20) - 10);
        EXPECT_EQ(KeyValue::parse_double("v", KeyValue::format_double(v)), v);
    }
}

TEST(GridFiles, RealAndComplexRoundTrip) {
    test::TempDir dir("io");
    const auto u = test::random_field(7, 3, 0.35, 4);
    save_grid(dir / "u.f64", u);
    const auto back = load_complex(dir / "u.f64");
    ASSERT_TRUE(back.same_shape(u));
    EXPECT_EQ(back.pitch(), u.pitch());
    for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(back[i], u[i]);
    EXPECT_TRUE(load_header(dir / "u.f64").complex);

    const auto img = test::random_image(5, 9, 8);
    save_grid(dir / "r.f64", img);
    const auto r = load_real(dir / "r.f64");
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(r[i], img[i]);
    EXPECT_THROW(load_real(dir / "u.f64"), IoError);
}

TEST(GridFiles, RawDumpIsLittleEndianRowMajor) {
    test::TempDir dir("raw");
    RealGrid g(2, 1, 1.0, std::vector<double>{1.0, -2.0});
    write_raw(dir / "g.f64", g);
    const auto bytes = test::read_file(dir / "g.f64");
    ASSERT_EQ(bytes.size(), 16u);
    // 1.0 = 0x3FF0000000000000
    EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x3F);
    EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0xF0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x00);
    EXPECT_THROW(read_raw(dir / "g.f64", 3, 1, 1.0), ShapeError);
}

TEST(Png, SixteenBitRoundTrip) {
    test::TempDir dir("png");
    const auto img = test::random_image(13, 7, 2);
    export_real_png(dir / "a.png", img, 16);
    const auto back = load_png_unit(dir / "a.png");
    ASSERT_EQ(back.width(), 13u);
    double lo = 1, hi = 0;
    for (double v : img.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], (img[i] - lo) / (hi - lo), 1.0 / 65535.0);
}
