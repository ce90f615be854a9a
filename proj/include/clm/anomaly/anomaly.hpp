#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clm/jpeg/codec.hpp"
#include "clm/lm/model.hpp"
#include "clm/stats/wilcoxon.hpp"

namespace clm::anomaly {

struct AnomalyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Validity { broken, valid };

struct AnomalyVariant {
    std::string original_id;
    ByteSequence perturbed_bytes;
    int position = 0;                // 0-based byte index k
    std::uint8_t injected_value = 0;
    std::uint8_t original_value = 0;
    Validity validity = Validity::broken;
};

// Psi(x, v, k): copy of x with byte k replaced by v. v must differ from x[k].
ByteSequence perturb(const ByteSequence& x, std::uint8_t v, int k);

struct SampledMode {
    int count = 2000;
    std::uint64_t seed = 0;
};

// Full mode: all 255*N variants. Sampled: `count` distinct (k,v) pairs drawn
// uniformly without replacement. Each variant is classified via validate_stream.
std::vector<AnomalyVariant> enumerate_variants(const ByteSequence& x, const std::string& id,
                                               std::optional<SampledMode> sampled = std::nullopt);

struct TaggingResult {
    std::vector<double> differences;  // ΔL = L(x) - L(x_hat)
    double w = 0;
    double p_value = 1;
    double alpha = 0.05;
    bool reject_h0 = false;
    std::vector<long> histogram;  // 50 uniform bins over [min, max]
    double hist_min = 0, hist_max = 0;
};

struct AnomalyReport {
    std::string task;  // "detection" | "correction"
    std::vector<int> ks = {1, 3, 5};
    // stratum -> accuracy per k; strata are "broken", "valid", "overall"
    std::map<std::string, std::vector<double>> accuracies;
    std::map<std::string, long> counts;
};

constexpr int kHistogramBins = 50;

// ΔL for one variant under recognition framing over `region`.
template <typename Float>
double delta_loglik(const lm::Model<Float>& model, const ByteSequence& original,
                    const ByteSequence& perturbed, lm::Region region) {
    auto so = tok::encode_sentence(original, tok::kQualitySet[0], 0, tok::Variant::recognition);
    auto sp = tok::encode_sentence(perturbed, tok::kQualitySet[0], 0, tok::Variant::recognition);
    return lm::sequence_loglik(model, so.token_ids, region) -
           lm::sequence_loglik(model, sp.token_ids, region);
}

TaggingResult make_tagging_result(std::vector<double> differences, double alpha = 0.05);

template <typename Float>
TaggingResult tag_files(const lm::Model<Float>& model,
                        const std::map<std::string, ByteSequence>& originals,
                        const std::vector<AnomalyVariant>& variants,
                        lm::Region region = lm::Region::bytes_only) {
    std::vector<double> diffs;
    std::map<std::string, double> l_orig;
    for (const auto& v : variants) {
        auto it = originals.find(v.original_id);
        if (it == originals.end())
            throw AnomalyError("variant references unknown original " + v.original_id);
        if (!l_orig.count(v.original_id)) {
            auto s = tok::encode_sentence(it->second, tok::kQualitySet[0], 0,
                                          tok::Variant::recognition);
            l_orig[v.original_id] = lm::sequence_loglik(model, s.token_ids, region);
        }
        auto sp = tok::encode_sentence(v.perturbed_bytes, tok::kQualitySet[0], 0,
                                       tok::Variant::recognition);
        diffs.push_back(l_orig[v.original_id] - lm::sequence_loglik(model, sp.token_ids, region));
    }
    return make_tagging_result(std::move(diffs));
}

// Eq. 2: byte positions ranked by ascending next-token log-probability under
// recognition framing; ties broken by earlier position.
template <typename Float>
std::vector<int> detect_anomaly(const lm::Model<Float>& model, const ByteSequence& perturbed,
                                int top_k) {
    auto s = tok::encode_sentence(perturbed, tok::kQualitySet[0], 0, tok::Variant::recognition);
    auto lp = lm::token_logprobs(model, s.token_ids);
    const int n = static_cast<int>(perturbed.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    // byte k sits at token position kPromptPrefixLen + k
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return lp[tok::kPromptPrefixLen + a] < lp[tok::kPromptPrefixLen + b];
    });
    if (top_k < n) order.resize(top_k);
    return order;
}

// Byte candidates for position k ranked by probability given the (unperturbed)
// prefix; support restricted to byte tokens. The framing is a free choice here
// (the prefix is what matters): recognition by default, or generation with the
// file's real conditions when they are known, which disambiguates files that
// share a byte prefix.
template <typename Float>
std::vector<std::uint8_t> correct_anomaly(const lm::Model<Float>& model,
                                          const ByteSequence& perturbed, int k, int top_k,
                                          tok::Variant framing = tok::Variant::recognition,
                                          int quality = tok::kQualitySet[0], int class_label = 0) {
    const int n = static_cast<int>(perturbed.size());
    if (k < 0 || k >= n) throw AnomalyError("position outside byte region");
    auto s = tok::encode_sentence(perturbed, quality, class_label, framing);
    std::vector<Float> logits;
    // prefix up to (not including) the byte at token position kPromptPrefixLen + k
    std::span<const tok::TokenId> prefix(s.token_ids.data(), tok::kPromptPrefixLen + k);
    lm::forward(model, prefix, logits);
    const int V = model.config.vocab_size;
    const Float* row = logits.data() + static_cast<std::size_t>(prefix.size() - 1) * V;

    std::array<int, 256> order;
    for (int i = 0; i < 256; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return row[a] > row[b]; });
    std::vector<std::uint8_t> out;
    for (int i = 0; i < std::min(top_k, 256); ++i) out.push_back(static_cast<std::uint8_t>(order[i]));
    return out;
}

struct AnomalyEvalResult {
    AnomalyReport detection;
    AnomalyReport correction;
    TaggingResult tagging;
    long broken_count = 0, valid_count = 0;
};

template <typename Float>
AnomalyEvalResult run_anomaly_eval(const lm::Model<Float>& model,
                                   const std::map<std::string, ByteSequence>& originals,
                                   std::optional<SampledMode> sampled = std::nullopt,
                                   const std::vector<int>& ks = {1, 3, 5},
                                   lm::Region region = lm::Region::bytes_only) {
    std::vector<AnomalyVariant> variants;
    for (const auto& [id, bytes] : originals) {
        auto vs = enumerate_variants(bytes, id, sampled);
        variants.insert(variants.end(), vs.begin(), vs.end());
    }

    int kmax = 0;
    for (int k : ks) kmax = std::max(kmax, k);

    // per-variant hits for detection and correction
    std::map<std::string, std::vector<std::array<long, 2>>> det_hits, cor_hits;
    for (const char* st : {"broken", "valid"}) {
        det_hits[st].assign(ks.size(), {0, 0});
        cor_hits[st].assign(ks.size(), {0, 0});
    }
    for (const auto& v : variants) {
        const char* st = v.validity == Validity::broken ? "broken" : "valid";
        auto ranked = detect_anomaly(model, v.perturbed_bytes, kmax);
        auto cands = correct_anomaly(model, v.perturbed_bytes, v.position, kmax);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            bool det = std::find(ranked.begin(), ranked.begin() + std::min<std::size_t>(ks[i], ranked.size()),
                                 v.position) != ranked.begin() + std::min<std::size_t>(ks[i], ranked.size());
            bool cor = std::find(cands.begin(), cands.begin() + std::min<std::size_t>(ks[i], cands.size()),
                                 v.original_value) != cands.begin() + std::min<std::size_t>(ks[i], cands.size());
            det_hits[st][i][0] += det;
            det_hits[st][i][1] += 1;
            cor_hits[st][i][0] += cor;
            cor_hits[st][i][1] += 1;
        }
    }

    auto build = [&](const char* task,
                     std::map<std::string, std::vector<std::array<long, 2>>>& hits) {
        AnomalyReport r;
        r.task = task;
        r.ks = ks;
        for (const char* st : {"broken", "valid"}) {
            std::vector<double> acc;
            for (std::size_t i = 0; i < ks.size(); ++i)
                acc.push_back(hits[st][i][1] ? static_cast<double>(hits[st][i][0]) / hits[st][i][1]
                                             : 0.0);
            r.accuracies[st] = acc;
            r.counts[st] = hits[st][0][1];
        }
        std::vector<double> overall;
        long total = r.counts["broken"] + r.counts["valid"];
        for (std::size_t i = 0; i < ks.size(); ++i)
            overall.push_back(total ? static_cast<double>(hits["broken"][i][0] +
                                                          hits["valid"][i][0]) /
                                          total
                                    : 0.0);
        r.accuracies["overall"] = overall;
        r.counts["overall"] = total;
        return r;
    };

    AnomalyEvalResult res;
    res.detection = build("detection", det_hits);
    res.correction = build("correction", cor_hits);
    res.tagging = tag_files(model, originals, variants, region);
    res.broken_count = res.detection.counts["broken"];
    res.valid_count = res.detection.counts["valid"];
    return res;
}

// {task, strata, ks, accuracies, counts} JSON; tagging adds the test fields.
std::string report_to_json(const AnomalyReport& report);
std::string tagging_to_json(const TaggingResult& tagging, const std::string& histogram_csv_path);
void write_histogram_csv(const TaggingResult& tagging, const std::filesystem::path& path);

}  // namespace clm::anomaly
