#include "clm/corpus/dataset.hpp"

#include <cmath>

#include "clm/rng.hpp"

namespace clm::corpus {

namespace {

std::uint32_t read_u32be(const ByteSequence& b, std::size_t off, const char* what) {
    if (off + 4 > b.size())
        throw DatasetError(std::string("truncated ") + what + " at offset " + std::to_string(off));
    return (static_cast<std::uint32_t>(b[off]) << 24) | (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | b[off + 3];
}

}  // namespace

std::vector<LabeledImage> load_idx(const std::filesystem::path& images_path,
                                   const std::filesystem::path& labels_path) {
    ByteSequence img = read_file(images_path);
    ByteSequence lab = read_file(labels_path);

    if (read_u32be(img, 0, "IDX image header") != 0x00000803)
        throw DatasetError("bad IDX image magic in " + images_path.string());
    if (read_u32be(lab, 0, "IDX label header") != 0x00000801)
        throw DatasetError("bad IDX label magic in " + labels_path.string());

    std::uint32_t n = read_u32be(img, 4, "IDX image header");
    std::uint32_t rows = read_u32be(img, 8, "IDX image header");
    std::uint32_t cols = read_u32be(img, 12, "IDX image header");
    std::uint32_t nl = read_u32be(lab, 4, "IDX label header");
    if (n != nl) throw DatasetError("IDX image/label counts differ");

    std::size_t need = 16 + static_cast<std::size_t>(n) * rows * cols;
    if (img.size() < need)
        throw DatasetError("IDX image payload truncated at offset " + std::to_string(img.size()));
    if (lab.size() < 8 + n)
        throw DatasetError("IDX label payload truncated at offset " + std::to_string(lab.size()));

    std::vector<LabeledImage> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        LabeledImage li;
        li.raster.width = static_cast<int>(cols);
        li.raster.height = static_cast<int>(rows);
        li.raster.channels = 1;
        std::size_t off = 16 + static_cast<std::size_t>(i) * rows * cols;
        li.raster.samples.assign(img.begin() + off, img.begin() + off + rows * cols);
        li.class_label = lab[8 + i];
        char id[32];
        std::snprintf(id, sizeof(id), "idx-%06u", i);
        li.source_id = id;
        out.push_back(std::move(li));
    }
    return out;
}

std::vector<LabeledImage> load_cifar(const std::filesystem::path& path) {
    ByteSequence b = read_file(path);
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    if (b.empty() || b.size() % kRecord != 0)
        throw DatasetError("CIFAR batch size is not a multiple of 3073: " + path.string());

    std::size_t n = b.size() / kRecord;
    std::vector<LabeledImage> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = b.data() + i * kRecord;
        LabeledImage li;
        li.class_label = rec[0];
        li.raster.width = 32;
        li.raster.height = 32;
        li.raster.channels = 3;
        li.raster.samples.resize(32 * 32 * 3);
        // planar R,G,B -> interleaved
        for (int p = 0; p < 32 * 32; ++p) {
            li.raster.samples[static_cast<std::size_t>(p) * 3 + 0] = rec[1 + p];
            li.raster.samples[static_cast<std::size_t>(p) * 3 + 1] = rec[1 + 1024 + p];
            li.raster.samples[static_cast<std::size_t>(p) * 3 + 2] = rec[1 + 2048 + p];
        }
        char id[32];
        std::snprintf(id, sizeof(id), "cifar-%06zu", i);
        li.source_id = id;
        out.push_back(std::move(li));
    }
    return out;
}

std::vector<LabeledImage> synthetic_dataset(int per_class, int num_classes, int channels,
                                            std::uint64_t seed, const std::string& split_tag) {
    std::vector<LabeledImage> out;
    out.reserve(static_cast<std::size_t>(per_class) * num_classes);
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            auto rng = make_rng(seed, "synthetic/" + split_tag + "/" + std::to_string(c) + "/" +
                                          std::to_string(i));
            std::uniform_real_distribution<double> u(0.0, 1.0);

            // classes are separated by a flat base level; a small oriented
            // ripple adds per-image texture without inflating the entropy
            // segment of the encoded files
            double base = num_classes > 1 ? 20.0 + 216.0 * c / (num_classes - 1) : 128.0;
            double theta = c * M_PI / num_classes;
            double freq = 1.5 + 0.3 * c;
            double ct = std::cos(theta), st = std::sin(theta);

            LabeledImage li;
            li.class_label = c;
            li.raster.width = 32;
            li.raster.height = 32;
            li.raster.channels = channels;
            li.raster.samples.resize(static_cast<std::size_t>(32 * 32 * channels));
            char id[48];
            std::snprintf(id, sizeof(id), "syn-%s-c%d-%04d", split_tag.c_str(), c, i);
            li.source_id = id;

            for (int ch = 0; ch < channels; ++ch) {
                double phi = 2.0 * M_PI * u(rng);
                double a = 6.0 * (0.75 + 0.25 * u(rng));
                for (int y = 0; y < 32; ++y)
                    for (int x = 0; x < 32; ++x) {
                        double w = (x * ct + y * st) / 32.0;
                        double v = base + a * std::sin(2.0 * M_PI * freq * w + phi);
                        li.raster.at(x, y, ch) = static_cast<std::uint8_t>(
                            std::clamp(v, 0.0, 255.0));
                    }
            }
            out.push_back(std::move(li));
        }
    }
    return out;
}

}  // namespace clm::corpus
