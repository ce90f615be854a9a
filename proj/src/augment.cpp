#include "clm/corpus/augment.hpp"

#include <cmath>

namespace clm::corpus {

jpeg::Raster resize_bilinear(const jpeg::Raster& src, int out_width, int out_height) {
    jpeg::Raster dst;
    dst.width = out_width;
    dst.height = out_height;
    dst.channels = src.channels;
    dst.samples.resize(static_cast<std::size_t>(out_width) * out_height * src.channels);
    if (src.width == out_width && src.height == out_height) {
        dst.samples = src.samples;
        return dst;
    }
    // align-corners mapping so edge pixels map exactly
    double sx = out_width > 1 ? static_cast<double>(src.width - 1) / (out_width - 1) : 0.0;
    double sy = out_height > 1 ? static_cast<double>(src.height - 1) / (out_height - 1) : 0.0;
    for (int y = 0; y < out_height; ++y) {
        double fy = y * sy;
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, src.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            double fx = x * sx;
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, src.width - 1);
            double wx = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                double top = (1 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                double bot = (1 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                double v = (1 - wy) * top + wy * bot;
                dst.at(x, y, c) = static_cast<std::uint8_t>(
                    std::clamp(static_cast<int>(std::lround(v)), 0, 255));
            }
        }
    }
    return dst;
}

namespace {

jpeg::Raster rotate_nearest(const jpeg::Raster& src, double degrees) {
    jpeg::Raster dst = src;
    double rad = degrees * M_PI / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    double cx = (src.width - 1) / 2.0, cy = (src.height - 1) / 2.0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            // inverse map destination -> source
            double dx = x - cx, dy = y - cy;
            int sx = static_cast<int>(std::lround(c * dx + s * dy + cx));
            int sy = static_cast<int>(std::lround(-s * dx + c * dy + cy));
            for (int ch = 0; ch < src.channels; ++ch) {
                std::uint8_t v = 0;
                if (sx >= 0 && sx < src.width && sy >= 0 && sy < src.height)
                    v = src.at(sx, sy, ch);
                dst.at(x, y, ch) = v;
            }
        }
    return dst;
}

int reflect_index(int i, int n) {
    // reflect without repeating the border sample; indices in [-n+1, 2n-2]
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

jpeg::Raster pad_reflect_crop(const jpeg::Raster& src, int pad, int off_x, int off_y) {
    jpeg::Raster dst = src;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            int sx = reflect_index(x + off_x - pad, src.width);
            int sy = reflect_index(y + off_y - pad, src.height);
            for (int ch = 0; ch < src.channels; ++ch) dst.at(x, y, ch) = src.at(sx, sy, ch);
        }
    return dst;
}

jpeg::Raster hflip(const jpeg::Raster& src) {
    jpeg::Raster dst = src;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
            for (int ch = 0; ch < src.channels; ++ch)
                dst.at(x, y, ch) = src.at(src.width - 1 - x, y, ch);
    return dst;
}

}  // namespace

LabeledImage augment(const LabeledImage& image, const AugmentSpec& spec, std::mt19937_64& rng) {
    LabeledImage out = image;
    if (spec.rotation_max_deg != 0) {
        std::uniform_real_distribution<double> ang(-spec.rotation_max_deg, spec.rotation_max_deg);
        out.raster = rotate_nearest(out.raster, ang(rng));
    }
    if (spec.crop_pad > 0) {
        std::uniform_int_distribution<int> off(0, 2 * spec.crop_pad);
        int ox = off(rng), oy = off(rng);
        out.raster = pad_reflect_crop(out.raster, spec.crop_pad, ox, oy);
    }
    if (spec.hflip_prob > 0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < spec.hflip_prob) out.raster = hflip(out.raster);
    }
    return out;
}

}  // namespace clm::corpus
