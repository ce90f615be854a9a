#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clm/bytes.hpp"

namespace clm::tok {

// Byte-level vocabulary: byte value b maps to id b; specials follow densely.
using TokenId = std::uint16_t;

constexpr int kVocabSize = 280;
constexpr TokenId kBos = 256;         // <s>
constexpr TokenId kEos = 257;         // </s>
constexpr TokenId kUnk = 258;         // <unk>
constexpr TokenId kBytesOpen = 259;   // <bytes>
constexpr TokenId kBytesClose = 260;  // </bytes>
constexpr TokenId kQualityBase = 261; // <q30>..<q92> in quality-set order
constexpr TokenId kClassBase = 270;   // <class0>..<class9>
constexpr int kNumClasses = 10;

constexpr std::array<int, 9> kQualitySet = {30, 50, 60, 70, 75, 80, 85, 90, 92};

struct TokenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TokenId quality_token(int quality);  // throws when quality is not in the set
TokenId class_token(int class_label);
std::optional<int> token_to_quality(TokenId id);
std::optional<int> token_to_class(TokenId id);
std::string token_name(TokenId id);

// Identifies the vocabulary + sentence template; stored in caches/checkpoints.
std::uint64_t vocab_hash();

enum class Variant { generation, recognition };

// A condition-wrapped training sequence:
//   <s> c1 c2 <bytes> b* </bytes> c1' c2' </s>
// Generation: c1,c2 are the condition tokens; trailing conditions unsupervised.
// Recognition: c1,c2 are <unk>; trailing condition targets supervised.
// loss_mask[t] gates the loss of predicting token t from the prefix t-1.
struct Sentence {
    std::vector<TokenId> token_ids;
    std::vector<std::uint8_t> loss_mask;
    Variant variant = Variant::generation;
    int quality = 0;
    int class_label = 0;
    std::string source;
};

Sentence encode_sentence(const ByteSequence& file, int quality, int class_label, Variant variant,
                         std::string source = {});

// <s> <unk> <unk> <bytes> b* </bytes> : ready for two-step property prediction.
std::vector<TokenId> recognition_prompt(const ByteSequence& file);

// <s> <qQ> <classC> <bytes>
std::vector<TokenId> generation_prompt(int quality, int class_label);

// Extracts byte ids strictly between the first <bytes> and the following
// </bytes>. Throws TokenError on malformed sentences or specials in the region.
ByteSequence detokenize_bytes(std::span<const TokenId> tokens);

// Index of the first byte token (one past <bytes>) and of </bytes> in a
// recognition-framed sequence; shared by the anomaly tasks.
constexpr int kPromptPrefixLen = 4;  // <s> c1 c2 <bytes>

// Flat binary token cache: u32 sentence count, then per sentence
// u32 length | u8 variant | u8 quality index | u8 class | ids as LE u16.
// A JSON sidecar (<path>.json) carries the vocab hash and template version.
void save_sentence_cache(const std::filesystem::path& path, const std::vector<Sentence>& sentences);
std::vector<Sentence> load_sentence_cache(const std::filesystem::path& path);

}  // namespace clm::tok
