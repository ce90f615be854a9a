#include "clm/jpeg/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

namespace clm::jpeg {

namespace {

// ---------------------------------------------------------------- tables

// Zig-zag position -> natural (row-major) index.
constexpr std::uint8_t kZigZag[64] = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// Annex-K base quantization tables, natural order.
constexpr std::uint16_t kBaseLuminance[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,
    12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,
    14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,
    24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::uint16_t kBaseChrominance[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99};

// Annex-K Huffman table specs: codes-per-bitlength[16] then symbol values.
constexpr std::uint8_t kDcLumBits[16] = {0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
constexpr std::uint8_t kDcLumVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
constexpr std::uint8_t kDcChrBits[16] = {0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
constexpr std::uint8_t kDcChrVals[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};

constexpr std::uint8_t kAcLumBits[16] = {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d};
constexpr std::uint8_t kAcLumVals[162] = {
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
    0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5,
    0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
    0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA};

constexpr std::uint8_t kAcChrBits[16] = {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77};
constexpr std::uint8_t kAcChrVals[162] = {
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0,
    0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
    0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6A, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
    0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
    0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
    0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8,
    0xF9, 0xFA};

// 1-D DCT basis, cosTab[u][x] = cos((2x+1) u pi / 16).
struct CosTable {
    double c[8][8];
    double scale[8];  // C(u)/2
    CosTable() {
        for (int u = 0; u < 8; ++u) {
            scale[u] = (u == 0 ? std::sqrt(0.5) : 1.0) * 0.5;
            for (int x = 0; x < 8; ++x)
                c[u][x] = std::cos((2 * x + 1) * u * M_PI / 16.0);
        }
    }
};
const CosTable& cos_table() {
    static const CosTable t;
    return t;
}

// ---------------------------------------------------------------- encoder

struct HuffCode {
    std::uint16_t code = 0;
    std::uint8_t length = 0;
};

// Canonical code assignment from (counts per length, values).
void build_encode_table(const std::uint8_t bits[16], const std::uint8_t* vals, int nvals,
                        HuffCode out[256]) {
    std::uint16_t code = 0;
    int k = 0;
    for (int len = 1; len <= 16; ++len) {
        for (int i = 0; i < bits[len - 1]; ++i) {
            out[vals[k]] = {code, static_cast<std::uint8_t>(len)};
            ++code;
            ++k;
        }
        code <<= 1;
    }
    (void)nvals;
}

struct BitWriter {
    ByteSequence& out;
    std::uint32_t acc = 0;
    int nbits = 0;

    void put(std::uint16_t code, int length) {
        acc = (acc << length) | code;
        nbits += length;
        while (nbits >= 8) {
            std::uint8_t b = static_cast<std::uint8_t>((acc >> (nbits - 8)) & 0xFF);
            out.push_back(b);
            if (b == 0xFF) out.push_back(0x00);  // byte stuffing
            nbits -= 8;
        }
        acc &= (1u << nbits) - 1;
    }

    void flush() {
        if (nbits > 0) put(static_cast<std::uint16_t>((1 << (8 - nbits)) - 1), 8 - nbits);
    }
};

// Magnitude category and offset bits for a coefficient.
struct MagCode {
    int size;
    std::uint16_t bits;
};

MagCode magnitude(int v) {
    int a = v < 0 ? -v : v;
    int size = 0;
    while (a) {
        a >>= 1;
        ++size;
    }
    std::uint16_t bits = static_cast<std::uint16_t>(v >= 0 ? v : v + (1 << size) - 1);
    return {size, bits};
}

void append_u16(ByteSequence& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void append_marker(ByteSequence& b, std::uint8_t marker) {
    b.push_back(0xFF);
    b.push_back(marker);
}

int clamp_byte(double v) {
    return v < 0.0 ? 0 : (v > 255.0 ? 255 : static_cast<int>(std::lround(v)));
}

// Encodes one quantized block (DC diff + run-length AC) into the bit stream.
int encode_block(BitWriter& bw, const double freq[64], const std::array<std::uint16_t, 64>& qtab_zz,
                 int last_dc, const HuffCode dc_tab[256], const HuffCode ac_tab[256]) {
    int quant[64];
    for (int i = 0; i < 64; ++i) {
        double coef = freq[kZigZag[i]];
        quant[i] = static_cast<int>(std::lround(coef / qtab_zz[i]));
    }

    int diff = quant[0] - last_dc;
    MagCode m = magnitude(diff);
    bw.put(dc_tab[m.size].code, dc_tab[m.size].length);
    if (m.size > 0) bw.put(m.bits, m.size);

    int last_nonzero = 0;
    for (int i = 1; i < 64; ++i)
        if (quant[i] != 0) last_nonzero = i;

    int run = 0;
    for (int i = 1; i <= last_nonzero; ++i) {
        if (quant[i] == 0) {
            ++run;
            continue;
        }
        while (run >= 16) {
            bw.put(ac_tab[0xF0].code, ac_tab[0xF0].length);  // ZRL
            run -= 16;
        }
        MagCode a = magnitude(quant[i]);
        int sym = (run << 4) | a.size;
        bw.put(ac_tab[sym].code, ac_tab[sym].length);
        bw.put(a.bits, a.size);
        run = 0;
    }
    if (last_nonzero < 63) bw.put(ac_tab[0x00].code, ac_tab[0x00].length);  // EOB

    return quant[0];
}

// Extracts an 8x8 level-shifted block from a component plane.
void extract_block(const std::vector<double>& plane, int pw, int bx, int by, double out[64]) {
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) out[y * 8 + x] = plane[(by * 8 + y) * pw + (bx * 8 + x)] - 128.0;
}

// ---------------------------------------------------------------- decoder

struct DecHuffTable {
    bool present = false;
    // Canonical decode: per code length, first code / last code / index into values.
    std::int32_t mincode[17] = {};
    std::int32_t maxcode[17] = {};
    int valptr[17] = {};
    std::vector<std::uint8_t> values;
};

struct DecComponent {
    int id = 0;
    int h = 1, v = 1;
    int tq = 0;
    int td = 0, ta = 0;
    int pred = 0;
};

struct Parser {
    const ByteSequence& bytes;
    bool want_raster;
    ValidationReport report;
    std::size_t pos = 0;

    // frame state
    bool have_sof = false;
    int width = 0, height = 0;
    std::vector<DecComponent> comps;
    int hmax = 1, vmax = 1;
    bool qtab_present[4] = {};
    std::array<std::uint16_t, 64> qtabs[4] = {};  // zig-zag order
    DecHuffTable dc_tabs[4], ac_tabs[4];

    // decoded coefficient blocks per component (natural order after dezigzag),
    // indexed [comp][block_row][block_col]; only kept when small enough.
    bool keep_coeffs = false;
    std::vector<std::vector<std::vector<std::array<int, 64>>>> coeffs;
    int blocks_w[4] = {}, blocks_h[4] = {};

    explicit Parser(const ByteSequence& b, bool raster) : bytes(b), want_raster(raster) {}

    void fail(Diag d, std::size_t off, std::string msg) {
        report.diagnostics.push_back({d, off, std::move(msg)});
    }

    bool ensure(std::size_t n, std::size_t off, const char* what) {
        if (pos + n <= bytes.size()) return true;
        fail(Diag::bad_segment_length, off, std::string("truncated ") + what);
        return false;
    }

    int u8() { return bytes[pos++]; }
    int u16() {
        int v = (bytes[pos] << 8) | bytes[pos + 1];
        pos += 2;
        return v;
    }

    void run();
    bool parse_dqt(std::size_t seg_end);
    bool parse_dht(std::size_t seg_end);
    bool parse_sof(std::size_t seg_end);
    bool parse_sos(std::size_t seg_end);
    void decode_scan();
    void materialize();
};

bool build_decode_table(DecHuffTable& t, const std::uint8_t bits[16],
                        const std::vector<std::uint8_t>& values) {
    t.values = values;
    std::int32_t code = 0;
    int k = 0;
    for (int len = 1; len <= 16; ++len) {
        t.valptr[len] = k;
        t.mincode[len] = code;
        code += bits[len - 1];
        k += bits[len - 1];
        t.maxcode[len] = code - 1;
        if (bits[len - 1] == 0) t.maxcode[len] = -1;
        if (code > (1 << len)) return false;  // code space overflow
        code <<= 1;
    }
    t.present = true;
    return true;
}

struct BitReader {
    const ByteSequence& bytes;
    std::size_t pos;
    std::uint32_t acc = 0;
    int nbits = 0;
    bool hit_marker = false;
    std::uint8_t marker = 0;
    std::size_t marker_pos = 0;  // offset of the 0xFF that introduced the marker
    bool exhausted = false;

    BitReader(const ByteSequence& b, std::size_t p) : bytes(b), pos(p) {}

    // Returns 0/1, or -1 once the entropy data ends (marker or end of file).
    int bit() {
        if (nbits == 0) {
            while (true) {
                if (pos >= bytes.size()) {
                    exhausted = true;
                    return -1;
                }
                std::uint8_t b = bytes[pos];
                if (b != 0xFF) {
                    acc = b;
                    nbits = 8;
                    ++pos;
                    break;
                }
                // 0xFF: stuffed zero, fill byte, or a real marker
                if (pos + 1 >= bytes.size()) {
                    exhausted = true;
                    return -1;
                }
                std::uint8_t n = bytes[pos + 1];
                if (n == 0x00) {
                    acc = 0xFF;
                    nbits = 8;
                    pos += 2;
                    break;
                }
                if (n == 0xFF) {
                    ++pos;  // fill byte
                    continue;
                }
                hit_marker = true;
                marker = n;
                marker_pos = pos;
                return -1;
            }
        }
        --nbits;
        return (acc >> nbits) & 1;
    }

    // Byte position where entropy data ended (for diagnostics).
    std::size_t offset() const { return hit_marker ? marker_pos : pos; }
};

// -1: data ended, -2: no code matched.
int huff_decode(BitReader& br, const DecHuffTable& t) {
    std::int32_t code = 0;
    for (int len = 1; len <= 16; ++len) {
        int b = br.bit();
        if (b < 0) return -1;
        code = (code << 1) | b;
        if (t.maxcode[len] >= 0 && code <= t.maxcode[len] && code >= t.mincode[len]) {
            int idx = t.valptr[len] + (code - t.mincode[len]);
            if (idx < 0 || idx >= static_cast<int>(t.values.size())) return -2;
            return t.values[idx];
        }
    }
    return -2;
}

int extend(int v, int size) { return v < (1 << (size - 1)) ? v - (1 << size) + 1 : v; }

bool Parser::parse_dqt(std::size_t seg_end) {
    while (pos < seg_end) {
        std::size_t off = pos;
        int pqtq = u8();
        int pq = pqtq >> 4, tq = pqtq & 0x0F;
        if (pq != 0) {
            fail(Diag::bad_quant_table, off, "non-baseline quantization table precision");
            return false;
        }
        if (tq > 3) {
            fail(Diag::bad_quant_table, off, "quantization table id out of range");
            return false;
        }
        if (pos + 64 > seg_end) {
            fail(Diag::bad_quant_table, off, "truncated quantization table");
            return false;
        }
        for (int i = 0; i < 64; ++i) {
            int e = u8();
            if (e == 0) {
                fail(Diag::bad_quant_table, pos - 1, "zero quantization table entry");
                return false;
            }
            qtabs[tq][i] = static_cast<std::uint16_t>(e);
        }
        qtab_present[tq] = true;
    }
    return true;
}

bool Parser::parse_dht(std::size_t seg_end) {
    while (pos < seg_end) {
        std::size_t off = pos;
        int tcth = u8();
        int tc = tcth >> 4, th = tcth & 0x0F;
        if (tc > 1 || th > 3) {
            fail(Diag::bad_huffman_table, off, "huffman table class/id out of range");
            return false;
        }
        if (pos + 16 > seg_end) {
            fail(Diag::bad_huffman_table, off, "truncated huffman table lengths");
            return false;
        }
        std::uint8_t bits[16];
        int total = 0;
        for (int i = 0; i < 16; ++i) {
            bits[i] = bytes[pos++];
            total += bits[i];
        }
        if (total == 0 || total > 256 || pos + static_cast<std::size_t>(total) > seg_end) {
            fail(Diag::bad_huffman_table, off, "truncated or empty huffman table values");
            return false;
        }
        std::vector<std::uint8_t> vals(bytes.begin() + pos, bytes.begin() + pos + total);
        pos += total;
        DecHuffTable& t = (tc == 0 ? dc_tabs[th] : ac_tabs[th]);
        t = DecHuffTable{};
        if (!build_decode_table(t, bits, vals)) {
            fail(Diag::bad_huffman_table, off, "huffman code space overflow");
            return false;
        }
    }
    return true;
}

bool Parser::parse_sof(std::size_t seg_end) {
    std::size_t off = pos;
    if (have_sof) {
        fail(Diag::dimension_mismatch, off, "duplicate frame header");
        return false;
    }
    if (seg_end - pos < 6) {
        fail(Diag::bad_segment_length, off, "short frame header");
        return false;
    }
    int precision = u8();
    height = u16();
    width = u16();
    int nc = u8();
    if (precision != 8) {
        fail(Diag::dimension_mismatch, off, "unsupported sample precision");
        return false;
    }
    if (width == 0 || height == 0) {
        fail(Diag::dimension_mismatch, off, "zero image dimension");
        return false;
    }
    if (nc < 1 || nc > 4 || seg_end - pos < static_cast<std::size_t>(3 * nc)) {
        fail(Diag::bad_segment_length, off, "bad component count in frame header");
        return false;
    }
    comps.clear();
    for (int i = 0; i < nc; ++i) {
        DecComponent c;
        c.id = u8();
        int hv = u8();
        c.h = hv >> 4;
        c.v = hv & 0x0F;
        c.tq = u8();
        if (c.h < 1 || c.h > 2 || c.v < 1 || c.v > 2 || c.tq > 3) {
            fail(Diag::dimension_mismatch, off, "unsupported sampling factors or table id");
            return false;
        }
        hmax = std::max(hmax, c.h);
        vmax = std::max(vmax, c.v);
        comps.push_back(c);
    }
    for (const auto& c : comps) {
        if (!qtab_present[c.tq]) {
            fail(Diag::bad_quant_table, off, "component references undefined quantization table");
            return false;
        }
    }
    have_sof = true;
    return true;
}

bool Parser::parse_sos(std::size_t seg_end) {
    std::size_t off = pos;
    if (!have_sof) {
        fail(Diag::dimension_mismatch, off, "scan without frame header");
        return false;
    }
    if (seg_end - pos < 1) {
        fail(Diag::bad_segment_length, off, "short scan header");
        return false;
    }
    int ns = u8();
    if (ns != static_cast<int>(comps.size()) || seg_end - pos < static_cast<std::size_t>(2 * ns + 3)) {
        fail(Diag::bad_segment_length, off, "bad scan component count");
        return false;
    }
    for (int i = 0; i < ns; ++i) {
        int cid = u8();
        int tdta = u8();
        auto it = std::find_if(comps.begin(), comps.end(),
                               [cid](const DecComponent& c) { return c.id == cid; });
        if (it == comps.end()) {
            fail(Diag::dimension_mismatch, off, "scan references unknown component");
            return false;
        }
        it->td = tdta >> 4;
        it->ta = tdta & 0x0F;
        if (it->td > 3 || it->ta > 3 || !dc_tabs[it->td].present || !ac_tabs[it->ta].present) {
            fail(Diag::bad_huffman_table, off, "scan references undefined huffman table");
            return false;
        }
    }
    int ss = u8(), se = u8(), ahal = u8();
    if (ss != 0 || se != 63 || ahal != 0) {
        fail(Diag::dimension_mismatch, off, "non-baseline spectral selection");
        return false;
    }
    return true;
}

void Parser::decode_scan() {
    std::int64_t mcux, mcuy;
    int blocks_per_mcu = 0;
    if (comps.size() == 1) {
        // Non-interleaved single-component scan: MCU is one block.
        mcux = (width + 7) / 8;
        mcuy = (height + 7) / 8;
        blocks_per_mcu = 1;
        blocks_w[0] = static_cast<int>(std::min<std::int64_t>(mcux, 1 << 14));
        blocks_h[0] = static_cast<int>(std::min<std::int64_t>(mcuy, 1 << 14));
    } else {
        mcux = (width + 8 * hmax - 1) / (8 * hmax);
        mcuy = (height + 8 * vmax - 1) / (8 * vmax);
        for (std::size_t ci = 0; ci < comps.size(); ++ci) {
            blocks_per_mcu += comps[ci].h * comps[ci].v;
            blocks_w[ci] = static_cast<int>(std::min<std::int64_t>(mcux * comps[ci].h, 1 << 14));
            blocks_h[ci] = static_cast<int>(std::min<std::int64_t>(mcuy * comps[ci].v, 1 << 14));
        }
    }

    std::int64_t total_blocks = 0;
    for (std::size_t ci = 0; ci < comps.size(); ++ci)
        total_blocks += static_cast<std::int64_t>(blocks_w[ci]) * blocks_h[ci];
    keep_coeffs = want_raster && total_blocks <= (1 << 20);
    if (keep_coeffs) {
        coeffs.resize(comps.size());
        for (std::size_t ci = 0; ci < comps.size(); ++ci)
            coeffs[ci].assign(blocks_h[ci], std::vector<std::array<int, 64>>(
                                                blocks_w[ci], std::array<int, 64>{}));
    }

    BitReader br(bytes, pos);
    bool scan_ok = true;

    auto decode_block = [&](DecComponent& c, int brow, int bcol) -> bool {
        int block_zz[64] = {};
        int s = huff_decode(br, dc_tabs[c.td]);
        if (s < 0) {
            fail(s == -1 ? Diag::premature_end_of_data : Diag::bad_huffman_code, br.offset(),
                 s == -1 ? "entropy data ended mid-block" : "bit pattern matches no huffman code");
            return false;
        }
        if (s > 15) {
            fail(Diag::bad_huffman_code, br.offset(), "invalid DC magnitude category");
            return false;
        }
        int diff = 0;
        if (s > 0) {
            int v = 0;
            for (int i = 0; i < s; ++i) {
                int b = br.bit();
                if (b < 0) {
                    fail(Diag::premature_end_of_data, br.offset(), "entropy data ended mid-block");
                    return false;
                }
                v = (v << 1) | b;
            }
            diff = extend(v, s);
        }
        c.pred += diff;
        block_zz[0] = c.pred;

        int k = 1;
        while (k < 64) {
            int rs = huff_decode(br, ac_tabs[c.ta]);
            if (rs < 0) {
                fail(rs == -1 ? Diag::premature_end_of_data : Diag::bad_huffman_code, br.offset(),
                     rs == -1 ? "entropy data ended mid-block" : "bit pattern matches no huffman code");
                return false;
            }
            int run = rs >> 4, size = rs & 0x0F;
            if (size == 0) {
                if (run == 15) {
                    k += 16;  // ZRL
                    continue;
                }
                break;  // EOB
            }
            k += run;
            if (k > 63) {
                fail(Diag::bad_huffman_code, br.offset(), "coefficient index past end of block");
                return false;
            }
            int v = 0;
            for (int i = 0; i < size; ++i) {
                int b = br.bit();
                if (b < 0) {
                    fail(Diag::premature_end_of_data, br.offset(), "entropy data ended mid-block");
                    return false;
                }
                v = (v << 1) | b;
            }
            block_zz[k] = extend(v, size);
            ++k;
        }

        if (keep_coeffs && brow < blocks_h[&c - comps.data()] && bcol < blocks_w[&c - comps.data()]) {
            auto& dst = coeffs[&c - comps.data()][brow][bcol];
            for (int i = 0; i < 64; ++i) dst[kZigZag[i]] = block_zz[i];
        }
        return true;
    };

    for (std::int64_t my = 0; my < mcuy && scan_ok; ++my) {
        for (std::int64_t mx = 0; mx < mcux && scan_ok; ++mx) {
            if (comps.size() == 1) {
                scan_ok = decode_block(comps[0], static_cast<int>(my), static_cast<int>(mx));
            } else {
                for (std::size_t ci = 0; ci < comps.size() && scan_ok; ++ci) {
                    DecComponent& c = comps[ci];
                    for (int by = 0; by < c.v && scan_ok; ++by)
                        for (int bx = 0; bx < c.h && scan_ok; ++bx)
                            scan_ok = decode_block(c, static_cast<int>(my * c.v + by),
                                                   static_cast<int>(mx * c.h + bx));
                }
            }
        }
    }

    pos = br.pos;
    if (!scan_ok) return;

    // All MCUs decoded; discard pad bits and expect EOI at the byte boundary.
    if (pos >= bytes.size()) {
        fail(Diag::premature_end_of_data, bytes.size(), "stream truncated at end of entropy data");
        return;
    }
    // Fill bytes (0xFF) before the marker are legal.
    std::size_t scan_from = pos;
    std::size_t j = pos;
    while (j + 1 < bytes.size() && bytes[j] == 0xFF && bytes[j + 1] == 0xFF) ++j;
    if (j + 1 < bytes.size() && bytes[j] == 0xFF && bytes[j + 1] == 0xD9) {
        pos = j + 2;
        return;
    }
    if (j + 1 < bytes.size() && bytes[j] == 0xFF && bytes[j + 1] != 0x00) {
        fail(Diag::missing_eoi, j, "expected EOI, found another marker");
        return;
    }
    // Raw bytes after the entropy data: extraneous if an EOI follows, missing otherwise.
    while (j + 1 < bytes.size() && !(bytes[j] == 0xFF && bytes[j + 1] == 0xD9)) ++j;
    if (j + 1 >= bytes.size()) {
        fail(Diag::missing_eoi, bytes.size(), "no EOI marker after entropy data");
        return;
    }
    fail(Diag::extraneous_bytes_before_eoi, scan_from,
         std::to_string(j - scan_from) + " extraneous bytes before marker 0xd9");
    pos = j + 2;
}

void Parser::materialize() {
    if (!keep_coeffs || comps.empty()) return;
    std::int64_t nsamp = static_cast<std::int64_t>(width) * height *
                         (comps.size() >= 3 ? 3 : 1);
    if (nsamp > (1 << 26)) return;

    const CosTable& ct = cos_table();
    // Per-component planes at full image resolution (nearest upsampling).
    std::vector<std::vector<std::uint8_t>> planes(comps.size());
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
        const DecComponent& c = comps[ci];
        int cw = blocks_w[ci] * 8, ch = blocks_h[ci] * 8;
        std::vector<std::uint8_t> plane(static_cast<std::size_t>(cw) * ch, 128);
        double freq[64], tmp[64], spat[64];
        for (int by = 0; by < blocks_h[ci]; ++by) {
            for (int bx = 0; bx < blocks_w[ci]; ++bx) {
                const auto& blk = coeffs[ci][by][bx];
                // dequantize; the zig-zag table maps table entries to natural order
                for (int z = 0; z < 64; ++z)
                    freq[kZigZag[z]] = blk[kZigZag[z]] * static_cast<double>(qtabs[c.tq][z]);
                // 1-D inverse DCT on rows then columns
                for (int r = 0; r < 8; ++r)
                    for (int x = 0; x < 8; ++x) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u) s += ct.scale[u] * freq[r * 8 + u] * ct.c[u][x];
                        tmp[r * 8 + x] = s;
                    }
                for (int col = 0; col < 8; ++col)
                    for (int y = 0; y < 8; ++y) {
                        double s = 0;
                        for (int u = 0; u < 8; ++u) s += ct.scale[u] * tmp[u * 8 + col] * ct.c[u][y];
                        spat[y * 8 + col] = s;
                    }
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        plane[static_cast<std::size_t>(by * 8 + y) * cw + bx * 8 + x] =
                            static_cast<std::uint8_t>(clamp_byte(spat[y * 8 + x] + 128.0));
            }
        }
        // upsample to image resolution
        std::vector<std::uint8_t> up(static_cast<std::size_t>(width) * height, 128);
        for (int y = 0; y < height; ++y) {
            int sy = std::min(y * c.v / vmax, ch - 1);
            for (int x = 0; x < width; ++x) {
                int sx = std::min(x * c.h / hmax, cw - 1);
                up[static_cast<std::size_t>(y) * width + x] = plane[static_cast<std::size_t>(sy) * cw + sx];
            }
        }
        planes[ci] = std::move(up);
    }

    Raster r;
    r.width = width;
    r.height = height;
    if (comps.size() == 1) {
        r.channels = 1;
        r.samples = std::move(planes[0]);
    } else {
        r.channels = 3;
        r.samples.resize(static_cast<std::size_t>(width) * height * 3);
        for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height; ++i) {
            double Y = planes[0][i], Cb = planes[1][i] - 128.0, Cr = planes[2][i] - 128.0;
            r.samples[i * 3 + 0] = static_cast<std::uint8_t>(clamp_byte(Y + 1.402 * Cr));
            r.samples[i * 3 + 1] = static_cast<std::uint8_t>(clamp_byte(Y - 0.344136 * Cb - 0.714136 * Cr));
            r.samples[i * 3 + 2] = static_cast<std::uint8_t>(clamp_byte(Y + 1.772 * Cb));
        }
    }
    report.decoded = std::move(r);
}

void Parser::run() {
    if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8) {
        fail(Diag::missing_soi, 0, "stream does not start with SOI");
        return;
    }
    pos = 2;

    while (true) {
        if (pos >= bytes.size()) {
            fail(Diag::missing_eoi, bytes.size(), "stream ended before scan data");
            return;
        }
        std::size_t off = pos;
        if (bytes[pos] != 0xFF) {
            fail(Diag::unknown_marker, off, "expected marker, found raw byte");
            return;
        }
        while (pos < bytes.size() && bytes[pos] == 0xFF) ++pos;  // fill bytes
        if (pos >= bytes.size()) {
            fail(Diag::missing_eoi, bytes.size(), "stream ended at marker prefix");
            return;
        }
        std::uint8_t marker = bytes[pos++];

        if (marker == 0xD9) {  // EOI before any scan
            fail(Diag::premature_end_of_data, off, "EOI before scan data");
            return;
        }
        if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) {
            fail(Diag::unknown_marker, off, "unexpected standalone marker");
            return;
        }

        if (!ensure(2, off, "segment length")) return;
        std::size_t len_off = pos;
        std::size_t len = static_cast<std::size_t>(u16());
        if (len < 2 || len_off + len > bytes.size()) {
            fail(Diag::bad_segment_length, len_off, "segment length out of bounds");
            return;
        }
        std::size_t seg_end = len_off + len;

        switch (marker) {
            case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: case 0xE6:
            case 0xE7: case 0xE8: case 0xE9: case 0xEA: case 0xEB: case 0xEC: case 0xED:
            case 0xEE: case 0xEF: case 0xFE:
                pos = seg_end;  // APPn / COM: skip
                break;
            case 0xDB:
                if (!parse_dqt(seg_end)) return;
                pos = seg_end;
                break;
            case 0xC4:
                if (!parse_dht(seg_end)) return;
                pos = seg_end;
                break;
            case 0xC0:
                if (!parse_sof(seg_end)) return;
                pos = seg_end;
                break;
            case 0xDD:
                if (len != 4) {
                    fail(Diag::bad_segment_length, off, "bad DRI length");
                    return;
                }
                if (u16() != 0) {
                    fail(Diag::unknown_marker, off, "restart intervals unsupported");
                    return;
                }
                break;
            case 0xDA:
                if (!parse_sos(seg_end)) return;
                pos = seg_end;
                decode_scan();
                materialize();
                return;
            default: {
                char buf[8];
                std::snprintf(buf, sizeof(buf), "0x%02x", marker);
                fail(Diag::unknown_marker, off,
                     std::string("marker ") + buf + " not allowed in baseline stream");
                return;
            }
        }
    }
}

ValidationReport decode_impl(const ByteSequence& bytes, bool want_raster) {
    Parser p(bytes, want_raster);
    p.run();
    p.report.valid = p.report.diagnostics.empty();
    return p.report;
}

}  // namespace

const char* diag_name(Diag d) {
    switch (d) {
        case Diag::missing_soi: return "missing_soi";
        case Diag::unknown_marker: return "unknown_marker";
        case Diag::bad_segment_length: return "bad_segment_length";
        case Diag::bad_quant_table: return "bad_quant_table";
        case Diag::bad_huffman_table: return "bad_huffman_table";
        case Diag::bad_huffman_code: return "bad_huffman_code";
        case Diag::premature_end_of_data: return "premature_end_of_data";
        case Diag::extraneous_bytes_before_eoi: return "extraneous_bytes_before_eoi";
        case Diag::missing_eoi: return "missing_eoi";
        case Diag::dimension_mismatch: return "dimension_mismatch";
    }
    return "?";
}

void fdct_block(const double in[64], double out[64]) {
    const CosTable& ct = cos_table();
    double tmp[64];
    for (int r = 0; r < 8; ++r)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += in[r * 8 + x] * ct.c[u][x];
            tmp[r * 8 + u] = s * ct.scale[u];
        }
    for (int c = 0; c < 8; ++c)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += tmp[y * 8 + c] * ct.c[u][y];
            out[u * 8 + c] = s * ct.scale[u];
        }
}

void idct_block(const double in[64], double out[64]) {
    const CosTable& ct = cos_table();
    double tmp[64];
    for (int r = 0; r < 8; ++r)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int u = 0; u < 8; ++u) s += ct.scale[u] * in[r * 8 + u] * ct.c[u][x];
            tmp[r * 8 + x] = s;
        }
    for (int c = 0; c < 8; ++c)
        for (int y = 0; y < 8; ++y) {
            double s = 0;
            for (int u = 0; u < 8; ++u) s += ct.scale[u] * tmp[u * 8 + c] * ct.c[u][y];
            out[y * 8 + c] = s;
        }
}

QuantTables build_quant_tables(int quality) {
    if (quality < 1 || quality > 100)
        throw CodecError("quality must be in [1, 100]");
    int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    QuantTables t;
    t.chrominance.emplace();
    for (int z = 0; z < 64; ++z) {
        int lum = (kBaseLuminance[kZigZag[z]] * scale + 50) / 100;
        int chr = (kBaseChrominance[kZigZag[z]] * scale + 50) / 100;
        t.luminance[z] = static_cast<std::uint16_t>(std::clamp(lum, 1, 255));
        (*t.chrominance)[z] = static_cast<std::uint16_t>(std::clamp(chr, 1, 255));
    }
    return t;
}

ByteSequence encode_image(const Raster& raster, int quality, Subsampling subsampling) {
    if (quality < 1 || quality > 100) throw CodecError("quality must be in [1, 100]");
    if (raster.channels != 1 && raster.channels != 3)
        throw CodecError("raster must have 1 or 3 channels");
    if (raster.samples.size() !=
        static_cast<std::size_t>(raster.width) * raster.height * raster.channels)
        throw CodecError("raster sample count does not match dimensions");
    bool color = raster.channels == 3;
    bool sub = color && subsampling == Subsampling::s420;
    int mod = sub ? 16 : 8;
    if (raster.width <= 0 || raster.height <= 0 || raster.width % mod || raster.height % mod)
        throw CodecError("dimensions must be positive multiples of " + std::to_string(mod));

    QuantTables qt = build_quant_tables(quality);
    const auto& qlum = qt.luminance;
    const auto& qchr = *qt.chrominance;

    const int w = raster.width, h = raster.height;

    // component planes, level shift deferred to block extraction
    std::vector<double> yp(static_cast<std::size_t>(w) * h);
    std::vector<double> cbp, crp;
    if (!color) {
        for (std::size_t i = 0; i < yp.size(); ++i) yp[i] = raster.samples[i];
    } else {
        cbp.resize(yp.size());
        crp.resize(yp.size());
        for (std::size_t i = 0; i < yp.size(); ++i) {
            double r = raster.samples[i * 3 + 0];
            double g = raster.samples[i * 3 + 1];
            double b = raster.samples[i * 3 + 2];
            yp[i] = clamp_byte(0.299 * r + 0.587 * g + 0.114 * b);
            cbp[i] = clamp_byte(-0.168736 * r - 0.331264 * g + 0.5 * b + 128.0);
            crp[i] = clamp_byte(0.5 * r - 0.418688 * g - 0.081312 * b + 128.0);
        }
        if (sub) {
            int cw = w / 2, chh = h / 2;
            std::vector<double> cb2(static_cast<std::size_t>(cw) * chh), cr2(cb2.size());
            for (int y = 0; y < chh; ++y)
                for (int x = 0; x < cw; ++x) {
                    auto avg = [&](const std::vector<double>& p) {
                        double s = p[(2 * y) * static_cast<std::size_t>(w) + 2 * x] +
                                   p[(2 * y) * static_cast<std::size_t>(w) + 2 * x + 1] +
                                   p[(2 * y + 1) * static_cast<std::size_t>(w) + 2 * x] +
                                   p[(2 * y + 1) * static_cast<std::size_t>(w) + 2 * x + 1];
                        return std::lround(s / 4.0);
                    };
                    cb2[static_cast<std::size_t>(y) * cw + x] = static_cast<double>(avg(cbp));
                    cr2[static_cast<std::size_t>(y) * cw + x] = static_cast<double>(avg(crp));
                }
            cbp = std::move(cb2);
            crp = std::move(cr2);
        }
    }

    ByteSequence out;
    append_marker(out, 0xD8);  // SOI

    // APP0 / JFIF 1.01
    append_marker(out, 0xE0);
    append_u16(out, 16);
    const char jfif[5] = {'J', 'F', 'I', 'F', 0};
    for (char c : jfif) out.push_back(static_cast<std::uint8_t>(c));
    out.push_back(1);
    out.push_back(1);
    out.push_back(0);  // no density units
    append_u16(out, 1);
    append_u16(out, 1);
    out.push_back(0);
    out.push_back(0);  // no thumbnail

    // DQT, one segment per table
    append_marker(out, 0xDB);
    append_u16(out, 2 + 65);
    out.push_back(0x00);
    for (auto e : qlum) out.push_back(static_cast<std::uint8_t>(e));
    if (color) {
        append_marker(out, 0xDB);
        append_u16(out, 2 + 65);
        out.push_back(0x01);
        for (auto e : qchr) out.push_back(static_cast<std::uint8_t>(e));
    }

    // SOF0
    int nc = color ? 3 : 1;
    append_marker(out, 0xC0);
    append_u16(out, static_cast<std::uint16_t>(8 + 3 * nc));
    out.push_back(8);
    append_u16(out, static_cast<std::uint16_t>(h));
    append_u16(out, static_cast<std::uint16_t>(w));
    out.push_back(static_cast<std::uint8_t>(nc));
    out.push_back(1);
    out.push_back(color && sub ? 0x22 : 0x11);
    out.push_back(0);
    if (color) {
        out.push_back(2);
        out.push_back(0x11);
        out.push_back(1);
        out.push_back(3);
        out.push_back(0x11);
        out.push_back(1);
    }

    // DHT, one segment per table, Annex-K tables verbatim
    auto emit_dht = [&](std::uint8_t cls_id, const std::uint8_t bits[16], const std::uint8_t* vals,
                        int nvals) {
        append_marker(out, 0xC4);
        append_u16(out, static_cast<std::uint16_t>(2 + 1 + 16 + nvals));
        out.push_back(cls_id);
        for (int i = 0; i < 16; ++i) out.push_back(bits[i]);
        for (int i = 0; i < nvals; ++i) out.push_back(vals[i]);
    };
    emit_dht(0x00, kDcLumBits, kDcLumVals, 12);
    emit_dht(0x10, kAcLumBits, kAcLumVals, 162);
    if (color) {
        emit_dht(0x01, kDcChrBits, kDcChrVals, 12);
        emit_dht(0x11, kAcChrBits, kAcChrVals, 162);
    }

    // SOS
    append_marker(out, 0xDA);
    append_u16(out, static_cast<std::uint16_t>(6 + 2 * nc));
    out.push_back(static_cast<std::uint8_t>(nc));
    out.push_back(1);
    out.push_back(0x00);
    if (color) {
        out.push_back(2);
        out.push_back(0x11);
        out.push_back(3);
        out.push_back(0x11);
    }
    out.push_back(0);
    out.push_back(63);
    out.push_back(0);

    // entropy data
    HuffCode dc_lum[256] = {}, ac_lum[256] = {}, dc_chr[256] = {}, ac_chr[256] = {};
    build_encode_table(kDcLumBits, kDcLumVals, 12, dc_lum);
    build_encode_table(kAcLumBits, kAcLumVals, 162, ac_lum);
    build_encode_table(kDcChrBits, kDcChrVals, 12, dc_chr);
    build_encode_table(kAcChrBits, kAcChrVals, 162, ac_chr);

    BitWriter bw{out};
    double block[64], freq[64];
    int dc_y = 0, dc_cb = 0, dc_cr = 0;

    if (!color) {
        int bw_blocks = w / 8, bh_blocks = h / 8;
        for (int by = 0; by < bh_blocks; ++by)
            for (int bx = 0; bx < bw_blocks; ++bx) {
                extract_block(yp, w, bx, by, block);
                fdct_block(block, freq);
                dc_y = encode_block(bw, freq, qlum, dc_y, dc_lum, ac_lum);
            }
    } else if (sub) {
        int cw = w / 2;
        for (int my = 0; my < h / 16; ++my)
            for (int mx = 0; mx < w / 16; ++mx) {
                for (int by = 0; by < 2; ++by)
                    for (int bx = 0; bx < 2; ++bx) {
                        extract_block(yp, w, mx * 2 + bx, my * 2 + by, block);
                        fdct_block(block, freq);
                        dc_y = encode_block(bw, freq, qlum, dc_y, dc_lum, ac_lum);
                    }
                extract_block(cbp, cw, mx, my, block);
                fdct_block(block, freq);
                dc_cb = encode_block(bw, freq, qchr, dc_cb, dc_chr, ac_chr);
                extract_block(crp, cw, mx, my, block);
                fdct_block(block, freq);
                dc_cr = encode_block(bw, freq, qchr, dc_cr, dc_chr, ac_chr);
            }
    } else {
        for (int by = 0; by < h / 8; ++by)
            for (int bx = 0; bx < w / 8; ++bx) {
                extract_block(yp, w, bx, by, block);
                fdct_block(block, freq);
                dc_y = encode_block(bw, freq, qlum, dc_y, dc_lum, ac_lum);
                extract_block(cbp, w, bx, by, block);
                fdct_block(block, freq);
                dc_cb = encode_block(bw, freq, qchr, dc_cb, dc_chr, ac_chr);
                extract_block(crp, w, bx, by, block);
                fdct_block(block, freq);
                dc_cr = encode_block(bw, freq, qchr, dc_cr, dc_chr, ac_chr);
            }
    }
    bw.flush();

    append_marker(out, 0xD9);  // EOI
    return out;
}

ValidationReport decode_stream(const ByteSequence& bytes) { return decode_impl(bytes, true); }

ValidationReport validate_stream(const ByteSequence& bytes) {
    ValidationReport r = decode_impl(bytes, false);
    r.decoded.reset();
    return r;
}

QualityEstimate estimate_quality(const ByteSequence& bytes) {
    // Lenient DQT-only parse: walk segments until SOS, collect tables.
    bool have[2] = {};
    std::array<std::uint16_t, 64> tabs[2] = {};
    if (bytes.size() >= 4 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
        std::size_t pos = 2;
        while (pos + 4 <= bytes.size() && bytes[pos] == 0xFF) {
            std::uint8_t marker = bytes[pos + 1];
            if (marker == 0xDA || marker == 0xD9) break;
            std::size_t len = (static_cast<std::size_t>(bytes[pos + 2]) << 8) | bytes[pos + 3];
            if (len < 2 || pos + 2 + len > bytes.size()) break;
            if (marker == 0xDB) {
                std::size_t p = pos + 4, seg_end = pos + 2 + len;
                while (p < seg_end) {
                    int tq = bytes[p] & 0x0F;
                    int pq = bytes[p] >> 4;
                    ++p;
                    if (pq != 0 || tq > 1 || p + 64 > seg_end) break;
                    for (int i = 0; i < 64; ++i) tabs[tq][i] = bytes[p + i];
                    have[tq] = true;
                    p += 64;
                }
            }
            pos += 2 + len;
        }
    }
    if (!have[0]) throw CodecError("no parseable DQT segment");

    auto distance = [&](const QuantTables& ref) {
        long d = 0;
        for (int i = 0; i < 64; ++i) d += std::abs(static_cast<int>(ref.luminance[i]) - tabs[0][i]);
        if (have[1])
            for (int i = 0; i < 64; ++i)
                d += std::abs(static_cast<int>((*ref.chrominance)[i]) - tabs[1][i]);
        return d;
    };

    int best_q = 1;
    long best_d = -1;
    for (int q = 1; q <= 100; ++q) {
        long d = distance(build_quant_tables(q));
        if (d == 0) return {true, q};
        if (best_d < 0 || d < best_d) {
            best_d = d;
            best_q = q;
        }
    }
    return {false, best_q};
}

double psnr(const Raster& a, const Raster& b) {
    if (a.samples.size() != b.samples.size() || a.samples.empty()) return 0.0;
    double mse = 0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        double d = static_cast<double>(a.samples[i]) - b.samples[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.samples.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace clm::jpeg
