#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "clm/jpeg/codec.hpp"

using namespace clm;
using namespace clm::jpeg;

namespace {

Raster random_gray(int w, int h, std::uint64_t seed) {
    Raster r;
    r.width = w;
    r.height = h;
    r.channels = 1;
    r.samples.resize(static_cast<std::size_t>(w) * h);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& s : r.samples) s = static_cast<std::uint8_t>(d(rng));
    return r;
}

Raster constant_gray(int w, int h, std::uint8_t v) {
    Raster r;
    r.width = w;
    r.height = h;
    r.channels = 1;
    r.samples.assign(static_cast<std::size_t>(w) * h, v);
    return r;
}

Raster random_rgb(int w, int h, std::uint64_t seed) {
    Raster r = random_gray(w, h, seed);
    r.channels = 3;
    r.samples.resize(static_cast<std::size_t>(w) * h * 3);
    std::mt19937_64 rng(seed ^ 0xabc);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& s : r.samples) s = static_cast<std::uint8_t>(d(rng));
    return r;
}

// First byte offset after the SOS segment (start of entropy data).
std::size_t entropy_start(const ByteSequence& b) {
    for (std::size_t i = 2; i + 3 < b.size();) {
        std::size_t len = (static_cast<std::size_t>(b[i + 2]) << 8) | b[i + 3];
        if (b[i] == 0xFF && b[i + 1] == 0xDA) return i + 2 + len;
        i += 2 + len;
    }
    return 0;
}

}  // namespace

TEST_CASE("constant gray block encodes to all-zero coefficient blocks") {
    auto bytes = encode_image(constant_gray(32, 32, 128), 50, Subsampling::none);
    // 16 blocks, each DC diff 0 (2 bits) + EOB (4 bits) = 96 bits = 12 bytes
    std::size_t es = entropy_start(bytes);
    REQUIRE(es > 0);
    CHECK(bytes.size() - es - 2 == 12);
    auto rep = decode_stream(bytes);
    CHECK(rep.valid);
    REQUIRE(rep.decoded.has_value());
    for (auto s : rep.decoded->samples) CHECK(s == 128);
}

TEST_CASE("DQT payload equals build_quant_tables") {
    auto bytes = encode_image(random_gray(32, 32, 1), 75);
    auto tables = build_quant_tables(75);
    // locate DQT segment
    std::size_t i = 2;
    while (!(bytes[i] == 0xFF && bytes[i + 1] == 0xDB)) {
        std::size_t len = (static_cast<std::size_t>(bytes[i + 2]) << 8) | bytes[i + 3];
        i += 2 + len;
    }
    CHECK(bytes[i + 4] == 0x00);
    for (int z = 0; z < 64; ++z) CHECK(bytes[i + 5 + z] == tables.luminance[z]);
}

TEST_CASE("round-trip PSNR on seeded random rasters") {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        Raster r = random_gray(32, 32, seed);
        auto rep = decode_stream(encode_image(r, 92));
        REQUIRE(rep.valid);
        REQUIRE(rep.decoded.has_value());
        CHECK(psnr(r, *rep.decoded) >= 30.0);
    }
}

TEST_CASE("color 4:2:0 round-trip") {
    Raster r = random_rgb(32, 32, 3);
    auto bytes = encode_image(r, 90, Subsampling::s420);
    auto rep = decode_stream(bytes);
    CHECK(rep.valid);
    REQUIRE(rep.decoded.has_value());
    CHECK(rep.decoded->channels == 3);
    auto est = estimate_quality(bytes);
    CHECK(est.exact);
    CHECK(est.quality == 90);
}

TEST_CASE("color 4:4:4 round-trip") {
    Raster r = random_rgb(32, 32, 4);
    auto rep = decode_stream(encode_image(r, 85, Subsampling::none));
    CHECK(rep.valid);
    CHECK(psnr(r, *rep.decoded) > 20.0);
}

TEST_CASE("truncation and insertion diagnostics") {
    auto bytes = encode_image(random_gray(32, 32, 11), 75);

    SUBCASE("EOI removed") {
        ByteSequence t(bytes.begin(), bytes.end() - 2);
        auto rep = decode_stream(t);
        CHECK(!rep.valid);
        CHECK(rep.has(Diag::premature_end_of_data));
    }
    SUBCASE("22 bytes inserted before EOI") {
        ByteSequence t(bytes.begin(), bytes.end() - 2);
        for (int i = 0; i < 22; ++i) t.push_back(static_cast<std::uint8_t>(i + 1));
        t.push_back(0xFF);
        t.push_back(0xD9);
        auto rep = decode_stream(t);
        CHECK(!rep.valid);
        CHECK(rep.has(Diag::extraneous_bytes_before_eoi));
    }
    SUBCASE("missing SOI") {
        ByteSequence t = bytes;
        t[0] = 0x00;
        auto rep = decode_stream(t);
        CHECK(rep.has(Diag::missing_soi));
        CHECK(!rep.decoded.has_value());
    }
}

TEST_CASE("DHT truncated mid-table reports bad_huffman_table") {
    auto bytes = encode_image(random_gray(32, 32, 12), 75);
    // find first DHT and shrink its declared length so values are cut off
    std::size_t i = 2;
    while (!(bytes[i] == 0xFF && bytes[i + 1] == 0xC4)) {
        std::size_t len = (static_cast<std::size_t>(bytes[i + 2]) << 8) | bytes[i + 3];
        i += 2 + len;
    }
    bytes[i + 2] = 0;
    bytes[i + 3] = 2 + 1 + 16;  // lengths kept, values dropped
    auto rep = validate_stream(bytes);
    CHECK(!rep.valid);
    CHECK(rep.has(Diag::bad_huffman_table));
}

TEST_CASE("some one-byte entropy corruption yields bad_huffman_code") {
    auto bytes = encode_image(random_gray(32, 32, 13), 75);
    std::size_t es = entropy_start(bytes);
    bool found = false;
    for (std::size_t k = es; k < bytes.size() - 2 && !found; ++k) {
        for (int v = 0; v < 256 && !found; ++v) {
            if (v == bytes[k]) continue;
            ByteSequence t = bytes;
            t[k] = static_cast<std::uint8_t>(v);
            if (validate_stream(t).has(Diag::bad_huffman_code)) found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("build_quant_tables") {
    SUBCASE("quality 50 is the Annex-K base table") {
        auto t = build_quant_tables(50);
        CHECK(t.luminance[0] == 16);   // zig-zag 0 = natural (0,0)
        CHECK(t.luminance[1] == 11);   // zig-zag 1 = natural (0,1)
        CHECK(t.luminance[63] == 99);  // zig-zag 63 = natural (7,7)
        CHECK((*t.chrominance)[0] == 17);
    }
    SUBCASE("quality 30 scales base 16 with scale 166") {
        auto t = build_quant_tables(30);
        CHECK(t.luminance[0] == (16 * 166 + 50) / 100);
    }
    SUBCASE("quality 100 clamps to all ones") {
        auto t = build_quant_tables(100);
        for (int z = 0; z < 64; ++z) {
            CHECK(t.luminance[z] == 1);
            CHECK((*t.chrominance)[z] == 1);
        }
    }
    CHECK_THROWS_AS(build_quant_tables(0), CodecError);
    CHECK_THROWS_AS(build_quant_tables(101), CodecError);
}

TEST_CASE("estimate_quality") {
    SUBCASE("inverts the encoder for every q in 1..100") {
        Raster r = random_gray(32, 32, 21);
        for (int q : {1, 2, 30, 50, 75, 92, 99, 100}) {
            auto est = estimate_quality(encode_image(r, q));
            CHECK(est.exact);
            CHECK(est.quality == q);
        }
    }
    SUBCASE("scaled tables are unique across q (brute force)") {
        for (int q1 = 1; q1 <= 100; ++q1)
            for (int q2 = q1 + 1; q2 <= 100; ++q2)
                CHECK(build_quant_tables(q1) != build_quant_tables(q2));
    }
    SUBCASE("hand-edited table entry reports nonstandard with nearest q") {
        auto bytes = encode_image(random_gray(32, 32, 22), 75);
        std::size_t i = 2;
        while (!(bytes[i] == 0xFF && bytes[i + 1] == 0xDB)) {
            std::size_t len = (static_cast<std::size_t>(bytes[i + 2]) << 8) | bytes[i + 3];
            i += 2 + len;
        }
        bytes[i + 5] += 1;  // first luminance entry
        auto est = estimate_quality(bytes);
        CHECK(!est.exact);
        CHECK(est.quality == 75);  // one-off entry stays nearest to 75
    }
    SUBCASE("unparseable DQT throws") {
        ByteSequence junk = {0x00, 0x01, 0x02};
        CHECK_THROWS_AS(estimate_quality(junk), CodecError);
    }
}

TEST_CASE("dct blocks") {
    double in[64], out[64], back[64];

    SUBCASE("all-zero block") {
        for (auto& v : in) v = 0;
        fdct_block(in, out);
        for (auto v : out) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("constant block c has DC = 8c") {
        for (auto& v : in) v = 37.0;
        fdct_block(in, out);
        CHECK(out[0] == doctest::Approx(8 * 37.0));
        for (int i = 1; i < 64; ++i) CHECK(out[i] == doctest::Approx(0.0).epsilon(1e-9));
        idct_block(out, back);
        for (auto v : back) CHECK(v == doctest::Approx(37.0));
    }
    SUBCASE("round-trip within 0.5 per sample") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> d(-128, 127);
        for (auto& v : in) v = d(rng);
        fdct_block(in, out);
        idct_block(out, back);
        for (int i = 0; i < 64; ++i) CHECK(std::abs(back[i] - in[i]) < 0.5);
    }
}

TEST_CASE("encoder rejects bad inputs") {
    CHECK_THROWS_AS(encode_image(constant_gray(30, 32, 0), 75), CodecError);
    CHECK_THROWS_AS(encode_image(constant_gray(32, 32, 0), 0), CodecError);
    Raster bad = constant_gray(32, 32, 0);
    bad.samples.pop_back();
    CHECK_THROWS_AS(encode_image(bad, 75), CodecError);
}

TEST_CASE("encode determinism and monotone distortion") {
    Raster r = random_gray(32, 32, 31);
    CHECK(encode_image(r, 80) == encode_image(r, 80));

    auto mse = [&](int q) {
        auto rep = decode_stream(encode_image(r, q));
        double s = 0;
        for (std::size_t i = 0; i < r.samples.size(); ++i) {
            double d = static_cast<double>(r.samples[i]) - rep.decoded->samples[i];
            s += d * d;
        }
        return s;
    };
    CHECK(mse(30) >= mse(92));
}

TEST_CASE("byte-stuffing soundness") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto bytes = encode_image(random_gray(32, 32, seed), 92);
        std::size_t es = entropy_start(bytes);
        for (std::size_t i = es; i + 1 < bytes.size() - 2; ++i) {
            if (bytes[i] == 0xFF) CHECK(bytes[i + 1] == 0x00);
        }
    }
}

TEST_CASE("validator totality over all one-byte variants of a small file") {
    auto bytes = encode_image(random_gray(8, 8, 41), 75, Subsampling::none);
    for (std::size_t k = 0; k < bytes.size(); ++k) {
        ByteSequence t = bytes;
        for (int v = 0; v < 256; ++v) {
            if (v == bytes[k]) continue;
            t[k] = static_cast<std::uint8_t>(v);
            auto rep = validate_stream(t);  // must terminate
            CHECK(rep.valid == rep.diagnostics.empty());
        }
        t[k] = bytes[k];
    }
}

TEST_CASE("round-trip validity across the full quality set") {
    const int Q[] = {30, 50, 60, 70, 75, 80, 85, 90, 92};
    Raster r = random_gray(32, 32, 51);
    for (int q : Q) {
        auto bytes = encode_image(r, q);
        CHECK(validate_stream(bytes).valid);
        auto est = estimate_quality(bytes);
        CHECK(est.exact);
        CHECK(est.quality == q);
    }
}
