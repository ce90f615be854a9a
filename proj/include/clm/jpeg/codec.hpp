#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clm/bytes.hpp"

namespace clm::jpeg {

// 8-bit image raster, row-major, channels interleaved (RGB) or single plane.
struct Raster {
    int width = 0;
    int height = 0;
    int channels = 1;  // 1 = grayscale, 3 = RGB
    std::vector<std::uint8_t> samples;

    std::uint8_t at(int x, int y, int c = 0) const {
        return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

// Quantization tables in zig-zag order, entries in [1, 255].
// Grayscale files carry only the luminance table.
struct QuantTables {
    std::array<std::uint16_t, 64> luminance{};
    std::optional<std::array<std::uint16_t, 64>> chrominance;

    bool operator==(const QuantTables&) const = default;
};

enum class Diag {
    missing_soi,
    unknown_marker,
    bad_segment_length,
    bad_quant_table,
    bad_huffman_table,
    bad_huffman_code,
    premature_end_of_data,
    extraneous_bytes_before_eoi,
    missing_eoi,
    dimension_mismatch,
};

const char* diag_name(Diag d);

struct Diagnostic {
    Diag code;
    std::size_t byte_offset;
    std::string message;
};

struct ValidationReport {
    bool valid = false;  // valid <=> diagnostics empty
    std::vector<Diagnostic> diagnostics;
    std::optional<Raster> decoded;  // absent when headers are unparseable

    bool has(Diag d) const {
        for (const auto& x : diagnostics)
            if (x.code == d) return true;
        return false;
    }
};

enum class Subsampling { none, s420 };

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Baseline-sequential JFIF stream: SOI, APP0, DQT(s), SOF0, DHT(s), SOS,
// entropy data with 0xFF 0x00 stuffing, EOI. Standard Annex-K Huffman tables.
// Dimensions must be multiples of 8 (16 with 4:2:0 subsampling).
ByteSequence encode_image(const Raster& raster, int quality,
                          Subsampling subsampling = Subsampling::s420);

// Best-effort decode of arbitrary bytes; never throws. Every deviation from
// the baseline JFIF contract surfaces as a diagnostic.
ValidationReport decode_stream(const ByteSequence& bytes);

// Same classification as decode_stream without materializing the raster.
ValidationReport validate_stream(const ByteSequence& bytes);

// Annex-K base tables scaled by the libjpeg rule:
//   scale = 5000/q (q < 50) else 200 - 2q; entry = clamp((base*scale+50)/100, 1, 255)
QuantTables build_quant_tables(int quality);

struct QualityEstimate {
    bool exact = false;
    int quality = 0;  // exact match, or nearest q by L1 table distance
};

// Inverts build_quant_tables against the stream's DQT segment(s).
// Throws CodecError when no DQT parses.
QualityEstimate estimate_quality(const ByteSequence& bytes);

// Type-II 2-D DCT with JPEG normalization (constant block c -> DC = 8c) and
// its inverse. Blocks are row-major 8x8.
void fdct_block(const double in[64], double out[64]);
void idct_block(const double in[64], double out[64]);

double psnr(const Raster& a, const Raster& b);

}  // namespace clm::jpeg
