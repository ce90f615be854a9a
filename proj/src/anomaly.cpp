#include "clm/anomaly/anomaly.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "clm/rng.hpp"

namespace clm::anomaly {

using nlohmann::json;

ByteSequence perturb(const ByteSequence& x, std::uint8_t v, int k) {
    if (k < 0 || k >= static_cast<int>(x.size())) throw AnomalyError("position out of range");
    if (x[k] == v) throw AnomalyError("injected value equals the original byte");
    ByteSequence out = x;
    out[k] = v;
    return out;
}

std::vector<AnomalyVariant> enumerate_variants(const ByteSequence& x, const std::string& id,
                                               std::optional<SampledMode> sampled) {
    const long n = static_cast<long>(x.size());
    if (n < 1) throw AnomalyError("empty file");
    const long total = 255 * n;

    std::vector<long> picks;  // pair index: k * 255 + rank of v among values != x[k]
    if (sampled) {
        if (sampled->count > total) throw AnomalyError("sample count exceeds 255*N");
        // partial Fisher-Yates over the pair index space
        std::vector<long> pool(total);
        for (long i = 0; i < total; ++i) pool[i] = i;
        auto rng = make_rng(sampled->seed, "anomaly/sample/" + id);
        for (int i = 0; i < sampled->count; ++i) {
            std::uniform_int_distribution<long> u(i, total - 1);
            std::swap(pool[i], pool[u(rng)]);
            picks.push_back(pool[i]);
        }
        std::sort(picks.begin(), picks.end());
    } else {
        picks.resize(total);
        for (long i = 0; i < total; ++i) picks[i] = i;
    }

    std::vector<AnomalyVariant> out;
    out.reserve(picks.size());
    for (long pi : picks) {
        int k = static_cast<int>(pi / 255);
        int r = static_cast<int>(pi % 255);
        int v = r < x[k] ? r : r + 1;  // skip the original value
        AnomalyVariant av;
        av.original_id = id;
        av.position = k;
        av.original_value = x[k];
        av.injected_value = static_cast<std::uint8_t>(v);
        av.perturbed_bytes = perturb(x, av.injected_value, k);
        av.validity =
            jpeg::validate_stream(av.perturbed_bytes).valid ? Validity::valid : Validity::broken;
        out.push_back(std::move(av));
    }
    return out;
}

TaggingResult make_tagging_result(std::vector<double> differences, double alpha) {
    if (differences.empty()) throw AnomalyError("no likelihood differences");
    TaggingResult r;
    r.differences = std::move(differences);
    r.alpha = alpha;
    auto wr = stats::wilcoxon_signed_rank_greater(r.differences);
    r.w = wr.w;
    r.p_value = wr.p_value;
    r.reject_h0 = r.p_value < alpha;

    auto [mn, mx] = std::minmax_element(r.differences.begin(), r.differences.end());
    r.hist_min = *mn;
    r.hist_max = *mx;
    r.histogram.assign(kHistogramBins, 0);
    double span = r.hist_max - r.hist_min;
    for (double d : r.differences) {
        int bin = span == 0 ? 0
                            : std::min<int>(kHistogramBins - 1,
                                            static_cast<int>((d - r.hist_min) / span *
                                                             kHistogramBins));
        ++r.histogram[bin];
    }
    return r;
}

std::string report_to_json(const AnomalyReport& report) {
    json j;
    j["task"] = report.task;
    j["ks"] = report.ks;
    j["strata"] = {"broken", "valid", "overall"};
    for (const auto& [st, acc] : report.accuracies) j["accuracies"][st] = acc;
    for (const auto& [st, c] : report.counts) j["counts"][st] = c;
    return j.dump(2);
}

std::string tagging_to_json(const TaggingResult& tagging, const std::string& histogram_csv_path) {
    json j;
    j["task"] = "tagging";
    j["W"] = tagging.w;
    j["p_value"] = tagging.p_value;
    j["alpha"] = tagging.alpha;
    j["reject_H0"] = tagging.reject_h0;
    j["n"] = tagging.differences.size();
    j["histogram_csv_path"] = histogram_csv_path;
    return j.dump(2);
}

void write_histogram_csv(const TaggingResult& tagging, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw AnomalyError("cannot write histogram " + path.string());
    out << "bin_low,bin_high,count\n";
    double span = tagging.hist_max - tagging.hist_min;
    double width = span == 0 ? 1.0 : span / kHistogramBins;
    for (int i = 0; i < kHistogramBins; ++i)
        out << tagging.hist_min + i * width << ',' << tagging.hist_min + (i + 1) * width << ','
            << tagging.histogram[i] << '\n';
}

}  // namespace clm::anomaly
