#include "clm/corpus/builder.hpp"

#include <omp.h>

#include <fstream>

#include <json.hpp>

#include "clm/rng.hpp"

namespace clm::corpus {

using nlohmann::json;

const std::vector<int>& default_quality_set() {
    static const std::vector<int> q = {30, 50, 60, 70, 75, 80, 85, 90, 92};
    return q;
}

CorpusManifest build_corpus(const std::vector<LabeledImage>& images,
                            const std::vector<int>& quality_set,
                            const AugmentSpec& augmentation_spec, int multiplier,
                            const std::string& split, const std::filesystem::path& out_dir,
                            std::uint64_t seed) {
    if (multiplier < 1) throw DatasetError("multiplier must be >= 1");
    std::filesystem::create_directories(out_dir);

    const int nq = static_cast<int>(quality_set.size());
    const std::size_t per_image = static_cast<std::size_t>(multiplier) * nq;
    std::vector<ManifestEntry> entries(images.size() * per_image);
    std::vector<std::string> failures(images.size());

#pragma omp parallel for schedule(dynamic)
    for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(images.size()); ++ii) {
        const LabeledImage& src = images[ii];
        try {
            LabeledImage base = src;
            base.raster = resize_bilinear(src.raster, 32, 32);
            auto sub = base.raster.channels == 3 ? jpeg::Subsampling::s420 : jpeg::Subsampling::none;
            for (int a = 0; a < multiplier; ++a) {
                LabeledImage copy = base;
                if (a > 0) {
                    auto rng = make_rng(seed, "augment/" + src.source_id + "/" + std::to_string(a));
                    copy = augment(base, augmentation_spec, rng);
                }
                for (int qi = 0; qi < nq; ++qi) {
                    int q = quality_set[qi];
                    ByteSequence bytes = jpeg::encode_image(copy.raster, q, sub);
                    char name[96];
                    std::snprintf(name, sizeof(name), "%s_a%d_q%02d.jpeg", src.source_id.c_str(),
                                  a, q);
                    write_file(out_dir / name, bytes);
                    ManifestEntry& e = entries[ii * per_image + a * nq + qi];
                    e.file_path = name;
                    e.quality = q;
                    e.class_label = src.class_label;
                    e.byte_length = bytes.size();
                    e.split = split;
                    e.source_id = src.source_id;
                    e.aug_index = a;
                }
            }
        } catch (const std::exception& ex) {
            failures[ii] = src.source_id + ": " + ex.what();
        }
    }
    for (const auto& f : failures)
        if (!f.empty()) throw DatasetError("encode failed for " + f);

    std::sort(entries.begin(), entries.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
        return std::tie(a.source_id, a.aug_index, a.quality) <
               std::tie(b.source_id, b.aug_index, b.quality);
    });

    CorpusManifest m;
    m.entries = std::move(entries);
    m.quality_set = quality_set;
    m.augmentation_spec = augmentation_spec;
    m.seed = seed;
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["seed"] = manifest.seed;
    j["quality_set"] = manifest.quality_set;
    j["augmentation_spec"] = {{"rotation_max_deg", manifest.augmentation_spec.rotation_max_deg},
                              {"crop_pad", manifest.augmentation_spec.crop_pad},
                              {"hflip_prob", manifest.augmentation_spec.hflip_prob}};
    j["entries"] = json::array();
    for (const auto& e : manifest.entries) {
        j["entries"].push_back({{"file_path", e.file_path},
                                {"quality", e.quality},
                                {"class_label", e.class_label},
                                {"byte_length", e.byte_length},
                                {"split", e.split},
                                {"source_id", e.source_id},
                                {"aug_index", e.aug_index}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot read manifest " + path.string());
    json j = json::parse(in);
    CorpusManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.quality_set = j.at("quality_set").get<std::vector<int>>();
    const auto& a = j.at("augmentation_spec");
    m.augmentation_spec.rotation_max_deg = a.at("rotation_max_deg").get<double>();
    m.augmentation_spec.crop_pad = a.at("crop_pad").get<int>();
    m.augmentation_spec.hflip_prob = a.at("hflip_prob").get<double>();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.file_path = je.at("file_path").get<std::string>();
        e.quality = je.at("quality").get<int>();
        e.class_label = je.at("class_label").get<int>();
        e.byte_length = je.at("byte_length").get<std::uint64_t>();
        e.split = je.at("split").get<std::string>();
        e.source_id = je.at("source_id").get<std::string>();
        e.aug_index = je.at("aug_index").get<int>();
        m.entries.push_back(std::move(e));
    }
    return m;
}

}  // namespace clm::corpus
