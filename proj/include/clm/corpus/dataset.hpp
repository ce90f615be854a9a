#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "clm/jpeg/codec.hpp"

namespace clm::corpus {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LabeledImage {
    jpeg::Raster raster;
    int class_label = 0;  // 0..9
    std::string source_id;
};

// IDX-format pair (magic 0x00000803 images, 0x00000801 labels), as shipped
// for MNIST: 28x28 grayscale.
std::vector<LabeledImage> load_idx(const std::filesystem::path& images_path,
                                   const std::filesystem::path& labels_path);

// CIFAR-10 binary batch: records of 1 label byte + 3072 planar pixel bytes.
std::vector<LabeledImage> load_cifar(const std::filesystem::path& path);

// Seeded procedural 32x32 rasters, one oriented-wave pattern per class; lets
// the full pipeline run without dataset downloads.
std::vector<LabeledImage> synthetic_dataset(int per_class, int num_classes, int channels,
                                            std::uint64_t seed, const std::string& split_tag);

}  // namespace clm::corpus
