#include "clm/tok/sentence.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace clm::tok {

namespace {

int quality_index(int quality) {
    auto it = std::find(kQualitySet.begin(), kQualitySet.end(), quality);
    if (it == kQualitySet.end())
        throw TokenError("quality " + std::to_string(quality) + " is not in the quality set");
    return static_cast<int>(it - kQualitySet.begin());
}

}  // namespace

TokenId quality_token(int quality) {
    return static_cast<TokenId>(kQualityBase + quality_index(quality));
}

TokenId class_token(int class_label) {
    if (class_label < 0 || class_label >= kNumClasses)
        throw TokenError("class label out of range: " + std::to_string(class_label));
    return static_cast<TokenId>(kClassBase + class_label);
}

std::optional<int> token_to_quality(TokenId id) {
    if (id >= kQualityBase && id < kQualityBase + static_cast<int>(kQualitySet.size()))
        return kQualitySet[id - kQualityBase];
    return std::nullopt;
}

std::optional<int> token_to_class(TokenId id) {
    if (id >= kClassBase && id < kClassBase + kNumClasses) return id - kClassBase;
    return std::nullopt;
}

std::string token_name(TokenId id) {
    if (id < 256) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "0x%02X", id);
        return buf;
    }
    switch (id) {
        case kBos: return "<s>";
        case kEos: return "</s>";
        case kUnk: return "<unk>";
        case kBytesOpen: return "<bytes>";
        case kBytesClose: return "</bytes>";
        default: break;
    }
    if (auto q = token_to_quality(id)) return "<q" + std::to_string(*q) + ">";
    if (auto c = token_to_class(id)) return "<class" + std::to_string(*c) + ">";
    return "<invalid:" + std::to_string(id) + ">";
}

std::uint64_t vocab_hash() {
    std::string desc = "bytes256|s|/s|unk|bytes|/bytes|q:30,50,60,70,75,80,85,90,92|class:10|v1";
    return fnv1a64(desc.data(), desc.size());
}

Sentence encode_sentence(const ByteSequence& file, int quality, int class_label, Variant variant,
                         std::string source) {
    TokenId qt = quality_token(quality);
    TokenId ct = class_token(class_label);

    Sentence s;
    s.variant = variant;
    s.quality = quality;
    s.class_label = class_label;
    s.source = std::move(source);
    s.token_ids.reserve(file.size() + 8);

    bool rec = variant == Variant::recognition;
    s.token_ids.push_back(kBos);
    s.token_ids.push_back(rec ? kUnk : qt);
    s.token_ids.push_back(rec ? kUnk : ct);
    s.token_ids.push_back(kBytesOpen);
    for (auto b : file) s.token_ids.push_back(b);
    s.token_ids.push_back(kBytesClose);
    s.token_ids.push_back(qt);
    s.token_ids.push_back(ct);
    s.token_ids.push_back(kEos);

    s.loss_mask.assign(s.token_ids.size(), 1);
    s.loss_mask[0] = 0;  // <s> is never a target
    if (!rec) {
        // generation variant: no supervision on the trailing condition tokens
        s.loss_mask[s.token_ids.size() - 3] = 0;
        s.loss_mask[s.token_ids.size() - 2] = 0;
    }
    return s;
}

std::vector<TokenId> recognition_prompt(const ByteSequence& file) {
    std::vector<TokenId> t;
    t.reserve(file.size() + 5);
    t.push_back(kBos);
    t.push_back(kUnk);
    t.push_back(kUnk);
    t.push_back(kBytesOpen);
    for (auto b : file) t.push_back(b);
    t.push_back(kBytesClose);
    return t;
}

std::vector<TokenId> generation_prompt(int quality, int class_label) {
    return {kBos, quality_token(quality), class_token(class_label), kBytesOpen};
}

ByteSequence detokenize_bytes(std::span<const TokenId> tokens) {
    auto open = std::find(tokens.begin(), tokens.end(), kBytesOpen);
    if (open == tokens.end()) throw TokenError("sentence has no <bytes> delimiter");
    auto close = std::find(open + 1, tokens.end(), kBytesClose);
    if (close == tokens.end()) throw TokenError("sentence has no </bytes> delimiter");
    ByteSequence out;
    out.reserve(static_cast<std::size_t>(close - open) - 1);
    for (auto it = open + 1; it != close; ++it) {
        if (*it >= 256)
            throw TokenError("special token " + token_name(*it) + " inside byte region");
        out.push_back(static_cast<std::uint8_t>(*it));
    }
    return out;
}

void save_sentence_cache(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw TokenError("cannot write token cache: " + path.string());
    auto put_u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<std::uint32_t>(sentences.size()));
    for (const auto& s : sentences) {
        put_u32(static_cast<std::uint32_t>(s.token_ids.size()));
        std::uint8_t variant = s.variant == Variant::recognition ? 1 : 0;
        std::uint8_t qidx = static_cast<std::uint8_t>(quality_index(s.quality));
        std::uint8_t cls = static_cast<std::uint8_t>(s.class_label);
        f.write(reinterpret_cast<const char*>(&variant), 1);
        f.write(reinterpret_cast<const char*>(&qidx), 1);
        f.write(reinterpret_cast<const char*>(&cls), 1);
        f.write(reinterpret_cast<const char*>(s.token_ids.data()),
                static_cast<std::streamsize>(s.token_ids.size() * sizeof(TokenId)));
    }
    nlohmann::json side;
    side["vocab_hash"] = vocab_hash();
    side["template_version"] = 1;
    side["sentences"] = sentences.size();
    std::ofstream js(path.string() + ".json");
    js << side.dump(2) << "\n";
}

std::vector<Sentence> load_sentence_cache(const std::filesystem::path& path) {
    {
        std::ifstream js(path.string() + ".json");
        if (!js) throw TokenError("token cache sidecar missing: " + path.string() + ".json");
        nlohmann::json side = nlohmann::json::parse(js);
        if (side.at("vocab_hash").get<std::uint64_t>() != vocab_hash())
            throw TokenError("token cache vocab hash mismatch");
    }
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TokenError("cannot read token cache: " + path.string());
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    std::uint32_t n = get_u32();
    std::vector<Sentence> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t len = get_u32();
        std::uint8_t variant = 0, qidx = 0, cls = 0;
        f.read(reinterpret_cast<char*>(&variant), 1);
        f.read(reinterpret_cast<char*>(&qidx), 1);
        f.read(reinterpret_cast<char*>(&cls), 1);
        std::vector<TokenId> ids(len);
        f.read(reinterpret_cast<char*>(ids.data()),
               static_cast<std::streamsize>(len * sizeof(TokenId)));
        if (!f) throw TokenError("truncated token cache");
        ByteSequence file = detokenize_bytes(ids);
        out.push_back(encode_sentence(file, kQualitySet[qidx], cls,
                                      variant ? Variant::recognition : Variant::generation));
    }
    return out;
}

}  // namespace clm::tok
