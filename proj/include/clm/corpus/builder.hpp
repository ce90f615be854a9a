#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clm/corpus/augment.hpp"
#include "clm/corpus/dataset.hpp"

namespace clm::corpus {

struct ManifestEntry {
    std::string file_path;  // relative to the manifest's directory
    int quality = 0;
    int class_label = 0;
    std::uint64_t byte_length = 0;
    std::string split;  // "train" or "val"
    std::string source_id;
    int aug_index = 0;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;
    std::vector<int> quality_set;
    AugmentSpec augmentation_spec;
    std::uint64_t seed = 0;
};

// The nine quality settings the token vocabulary knows about.
const std::vector<int>& default_quality_set();

// Resizes every image to 32x32 (bilinear), writes `multiplier` copies per
// image at every quality in quality_set (copy 0 is the unaugmented original;
// copies 1..multiplier-1 are augmented with their own derived rng), and
// serializes manifest.json next to the files. Entries are sorted by
// (source_id, aug_index, quality) so the OpenMP image loop never changes the
// output.
CorpusManifest build_corpus(const std::vector<LabeledImage>& images,
                            const std::vector<int>& quality_set, const AugmentSpec& augmentation_spec,
                            int multiplier, const std::string& split,
                            const std::filesystem::path& out_dir, std::uint64_t seed);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

}  // namespace clm::corpus
