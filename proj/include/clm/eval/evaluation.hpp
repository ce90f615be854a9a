#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "clm/jpeg/codec.hpp"
#include "clm/lm/decoding.hpp"
#include "clm/tok/sentence.hpp"

namespace clm::eval {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LabeledFile {
    ByteSequence bytes;
    int quality = 0;
    int class_label = 0;
    std::string source_id;
};

struct RecognitionReport {
    double quality_accuracy = 0;
    double class_accuracy = 0;
    long n_samples = 0;
    // confusion[truth][predicted]; column 10 counts illegal (non-class) predictions
    std::array<std::array<long, tok::kNumClasses + 1>, tok::kNumClasses> confusion{};
    std::string phase;  // "pretrained" | "finetuned"
};

// Two-step greedy prediction from the recognition prompt: first token is the
// quality guess, second the class guess. Predictions outside the legal token
// subranges count as wrong.
template <typename Float>
RecognitionReport eval_recognition(const lm::Model<Float>& model,
                                   const std::vector<LabeledFile>& files,
                                   const std::string& phase = "pretrained") {
    if (files.empty()) throw EvalError("empty evaluation split");
    RecognitionReport rep;
    rep.phase = phase;
    long q_hits = 0, c_hits = 0;
    for (const auto& f : files) {
        auto prompt = tok::recognition_prompt(f.bytes);
        lm::DecodeState<Float> st(model);
        for (auto t : prompt) st.append(t);

        auto argmax = [&]() {
            const auto& lg = st.last_logits();
            int best = 0;
            for (int v = 1; v < static_cast<int>(lg.size()); ++v)
                if (lg[v] > lg[best]) best = v;
            return static_cast<tok::TokenId>(best);
        };
        tok::TokenId q_pred = argmax();
        st.append(q_pred);
        tok::TokenId c_pred = argmax();

        auto q = tok::token_to_quality(q_pred);
        auto c = tok::token_to_class(c_pred);
        q_hits += q && *q == f.quality;
        c_hits += c && *c == f.class_label;
        rep.confusion[f.class_label][c ? *c : tok::kNumClasses] += 1;
        ++rep.n_samples;
    }
    rep.quality_accuracy = static_cast<double>(q_hits) / rep.n_samples;
    rep.class_accuracy = static_cast<double>(c_hits) / rep.n_samples;
    return rep;
}

struct GenerationRecord {
    int quality = 0;
    int class_label = 0;
    int beam_rank = 0;  // 0 for greedy
    bool valid = false;
    std::vector<std::string> diagnostics;  // codec diagnostic codes, or generation_truncated
    int estimated_quality = 0;             // 0 when not estimable
    bool quality_match = false;
    std::size_t byte_length = 0;
    std::string file_path;
};

struct GenerationReport {
    std::vector<GenerationRecord> records;  // sorted by (quality, class, beam_rank)
    double valid_fraction = 0;
    double quality_match_fraction = 0;
};

struct BeamDecode {
    int beams = 4;
    double top_p = 0.9;
};

// Decodes one file per (quality, class) pair (or `beams` files in beam mode),
// writes them under out_dir/<q>/<class>[_<rank>].jpeg, and validates each.
template <typename Float>
GenerationReport eval_generation(const lm::Model<Float>& model, const std::vector<int>& qualities,
                                 const std::vector<int>& classes,
                                 const std::filesystem::path& out_dir, int max_len = 0,
                                 const BeamDecode* beam = nullptr) {
    GenerationReport rep;
    for (int q : qualities)
        for (int c : classes) {
            auto prompt = tok::generation_prompt(q, c);
            int limit = max_len > 0 ? max_len : model.config.context_length;

            std::vector<lm::DecodeResult> results;
            if (beam)
                results = lm::beam_search_decode(model, prompt, beam->beams, beam->top_p,
                                                 tok::kBytesClose, limit);
            else
                results.push_back(lm::greedy_decode(model, prompt, tok::kBytesClose, limit));

            auto dir = out_dir / std::to_string(q);
            std::filesystem::create_directories(dir);
            for (std::size_t rank = 0; rank < results.size(); ++rank) {
                const auto& res = results[rank];
                GenerationRecord rec;
                rec.quality = q;
                rec.class_label = c;
                rec.beam_rank = static_cast<int>(rank);
                std::string name = std::to_string(c) +
                                   (beam ? "_" + std::to_string(rank) : std::string()) + ".jpeg";

                ByteSequence bytes;
                if (res.truncated) {
                    rec.diagnostics.push_back("generation_truncated");
                    // salvage whatever byte tokens were produced
                    for (std::size_t i = prompt.size(); i < res.tokens.size(); ++i)
                        if (res.tokens[i] < 256)
                            bytes.push_back(static_cast<std::uint8_t>(res.tokens[i]));
                } else {
                    bytes = tok::detokenize_bytes(res.tokens);
                }
                rec.byte_length = bytes.size();
                write_file(dir / name, bytes);
                rec.file_path = (dir / name).string();

                if (!res.truncated) {
                    auto vr = jpeg::validate_stream(bytes);
                    rec.valid = vr.valid;
                    for (const auto& d : vr.diagnostics)
                        rec.diagnostics.push_back(jpeg::diag_name(d.code));
                    if (rec.valid) {
                        auto est = jpeg::estimate_quality(bytes);
                        rec.estimated_quality = est.quality;
                        rec.quality_match = est.exact && est.quality == q;
                    }
                }
                rep.records.push_back(std::move(rec));
            }
        }

    long valid = 0, match = 0;
    for (const auto& r : rep.records) {
        valid += r.valid;
        match += r.quality_match;
    }
    if (!rep.records.empty()) {
        rep.valid_fraction = static_cast<double>(valid) / rep.records.size();
        rep.quality_match_fraction = static_cast<double>(match) / rep.records.size();
    }
    return rep;
}

std::string recognition_to_json(const RecognitionReport& report);
std::string generation_to_json(const GenerationReport& report);

}  // namespace clm::eval
