#pragma once

#include <random>

#include "clm/corpus/dataset.hpp"

namespace clm::corpus {

// Augmentation policy. All transforms that are enabled are applied in order:
// rotation, pad+crop, hflip. A default-constructed spec is the identity.
struct AugmentSpec {
    double rotation_max_deg = 0;  // uniform angle in [-max, max], nearest neighbor, fill 0
    int crop_pad = 0;             // reflect-pad then random crop back to original size
    double hflip_prob = 0;

    static AugmentSpec mnist() { return {15.0, 0, 0.0}; }
    static AugmentSpec cifar() { return {0.0, 4, 0.5}; }
    static AugmentSpec none() { return {}; }
};

jpeg::Raster resize_bilinear(const jpeg::Raster& src, int out_width, int out_height);

LabeledImage augment(const LabeledImage& image, const AugmentSpec& spec, std::mt19937_64& rng);

}  // namespace clm::corpus
