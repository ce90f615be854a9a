#include "clm/eval/evaluation.hpp"

#include <json.hpp>

namespace clm::eval {

using nlohmann::json;

std::string recognition_to_json(const RecognitionReport& report) {
    json j;
    j["task"] = "recognition";
    j["phase"] = report.phase;
    j["quality_accuracy"] = report.quality_accuracy;
    j["class_accuracy"] = report.class_accuracy;
    j["n_samples"] = report.n_samples;
    j["confusion"] = json::array();
    for (const auto& row : report.confusion) j["confusion"].push_back(row);
    return j.dump(2);
}

std::string generation_to_json(const GenerationReport& report) {
    json j;
    j["task"] = "generation";
    j["valid_fraction"] = report.valid_fraction;
    j["quality_match_fraction"] = report.quality_match_fraction;
    j["records"] = json::array();
    for (const auto& r : report.records)
        j["records"].push_back({{"quality", r.quality},
                                {"class", r.class_label},
                                {"beam_rank", r.beam_rank},
                                {"valid", r.valid},
                                {"diagnostics", r.diagnostics},
                                {"estimated_quality", r.estimated_quality},
                                {"quality_match", r.quality_match},
                                {"byte_length", r.byte_length},
                                {"file_path", r.file_path}});
    return j.dump(2);
}

}  // namespace clm::eval
