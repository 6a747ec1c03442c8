#include "maelab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace maelab {

void AugmentConfig::validate() const {
    if (!(crop_scale_lo > 0.0 && crop_scale_lo <= crop_scale_hi && crop_scale_hi <= 1.0))
        throw std::invalid_argument("AugmentConfig: crop scale must satisfy 0 < lo <= hi <= 1");
    if (randaug_magnitude < 0.0 || randaug_magnitude > 10.0)
        throw std::invalid_argument("AugmentConfig: RandAug magnitude must be in [0,10]");
    for (float s : norm_std)
        if (s <= 0.0f) throw std::invalid_argument("AugmentConfig: std must be > 0");
}

Image random_resized_crop(const Image& img, double scale_lo, double scale_hi, double ratio_lo,
                          double ratio_hi, std::size_t out_size, Rng& rng) {
    if (scale_lo > scale_hi)
        throw std::invalid_argument("random_resized_crop: scale lo > hi");
    const double area = static_cast<double>(img.height) * img.width;

    std::size_t cw = 0, ch = 0, cx = 0, cy = 0;
    bool found = false;
    for (int attempt = 0; attempt < 10 && !found; ++attempt) {
        const double target = area * rng.uniform(scale_lo, scale_hi);
        const double aspect = std::exp(rng.uniform(std::log(ratio_lo), std::log(ratio_hi)));
        const double wf = std::sqrt(target * aspect);
        const double hf = std::sqrt(target / aspect);
        const auto w = static_cast<std::size_t>(std::lround(wf));
        const auto h = static_cast<std::size_t>(std::lround(hf));
        if (w >= 1 && h >= 1 && w <= img.width && h <= img.height) {
            cw = w;
            ch = h;
            cx = static_cast<std::size_t>(rng.below(img.width - w + 1));
            cy = static_cast<std::size_t>(rng.below(img.height - h + 1));
            found = true;
        }
    }
    if (!found) {
        // center-crop fallback at the mean requested scale
        const double target = area * 0.5 * (scale_lo + scale_hi);
        const std::size_t side = std::min(
            {img.width, img.height, static_cast<std::size_t>(std::lround(std::sqrt(target)))});
        cw = ch = std::max<std::size_t>(1, side);
        cx = (img.width - cw) / 2;
        cy = (img.height - ch) / 2;
    }

    Image crop = Image::zeros(ch, cw, img.channels);
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < ch; ++y)
            for (std::size_t x = 0; x < cw; ++x) crop.at(c, y, x) = img.at(c, cy + y, cx + x);
    return resize_bilinear(crop, out_size, out_size);
}

Image hflip(const Image& img) {
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

Image maybe_hflip(const Image& img, double prob, Rng& rng) {
    return rng.bernoulli(prob) ? hflip(img) : img;
}

// ---- RandAug-lite ------------------------------------------------------------

namespace {

// Inverse-mapped affine sample with bilinear interpolation, zero fill outside.
Image affine_sample(const Image& img, double m00, double m01, double m02, double m10, double m11,
                    double m12) {
    Image out = Image::zeros(img.height, img.width, img.channels);
    const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            // map output pixel back into the source around the image center
            const double dx = x - cx, dy = y - cy;
            const double sx = m00 * dx + m01 * dy + m02 + cx;
            const double sy = m10 * dx + m11 * dy + m12 + cy;
            const auto x0 = static_cast<long>(std::floor(sx));
            const auto y0 = static_cast<long>(std::floor(sy));
            const float wx = static_cast<float>(sx - x0);
            const float wy = static_cast<float>(sy - y0);
            for (std::size_t c = 0; c < img.channels; ++c) {
                auto px = [&](long yy, long xx) -> float {
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(img.height) ||
                        xx >= static_cast<long>(img.width))
                        return 0.0f;
                    return img.at(c, yy, xx);
                };
                const float top = px(y0, x0) * (1 - wx) + px(y0, x0 + 1) * wx;
                const float bot = px(y0 + 1, x0) * (1 - wx) + px(y0 + 1, x0 + 1) * wx;
                out.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    return out;
}

float image_mean(const Image& img) {
    double acc = 0.0;
    for (float v : img.data) acc += v;
    return static_cast<float>(acc / img.data.size());
}

Image op_translate(const Image& img, double level, Rng& rng) {
    const double dx = level * 0.3 * img.width * (rng.bernoulli(0.5) ? 1 : -1);
    const double dy = level * 0.3 * img.height * (rng.bernoulli(0.5) ? 1 : -1);
    return affine_sample(img, 1, 0, -dx, 0, 1, -dy);
}

Image op_rotate(const Image& img, double level, Rng& rng) {
    const double deg = level * 30.0 * (rng.bernoulli(0.5) ? 1 : -1);
    const double a = deg * std::numbers::pi / 180.0;
    // inverse rotation
    return affine_sample(img, std::cos(a), std::sin(a), 0, -std::sin(a), std::cos(a), 0);
}

Image op_shear(const Image& img, double level, Rng& rng) {
    const double s = level * 0.3 * (rng.bernoulli(0.5) ? 1 : -1);
    if (rng.bernoulli(0.5)) return affine_sample(img, 1, s, 0, 0, 1, 0);
    return affine_sample(img, 1, 0, 0, s, 1, 0);
}

Image op_contrast(const Image& img, double level, Rng& rng) {
    const float f = static_cast<float>(1.0 + level * 0.9 * (rng.bernoulli(0.5) ? 1 : -1));
    const float mu = image_mean(img);
    Image out = img;
    for (auto& v : out.data) v = std::clamp(mu + (v - mu) * f, 0.0f, 1.0f);
    return out;
}

Image op_brightness(const Image& img, double level, Rng& rng) {
    const float f = static_cast<float>(1.0 + level * 0.9 * (rng.bernoulli(0.5) ? 1 : -1));
    Image out = img;
    for (auto& v : out.data) v = std::clamp(v * f, 0.0f, 1.0f);
    return out;
}

Image op_sharpness(const Image& img, double level, Rng& rng) {
    const float f = static_cast<float>(level * 0.9 * (rng.bernoulli(0.5) ? 1 : -1));
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 1; y + 1 < img.height; ++y)
            for (std::size_t x = 1; x + 1 < img.width; ++x) {
                const float blur = (img.at(c, y - 1, x) + img.at(c, y + 1, x) +
                                    img.at(c, y, x - 1) + img.at(c, y, x + 1) +
                                    4.0f * img.at(c, y, x)) /
                                   8.0f;
                const float sharp = img.at(c, y, x) + (img.at(c, y, x) - blur);
                out.at(c, y, x) =
                    std::clamp(img.at(c, y, x) * (1 - f) + sharp * f, 0.0f, 1.0f);
            }
    return out;
}

Image op_posterize(const Image& img, double level, Rng&) {
    const int bits = 8 - static_cast<int>(std::lround(level * 4.0));
    if (bits >= 8) return img;
    const float levels = static_cast<float>((1 << bits) - 1);
    Image out = img;
    for (auto& v : out.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * levels) / levels;
    return out;
}

Image op_equalize(const Image& img, double level, Rng&) {
    if (level <= 0.0) return img;
    constexpr std::size_t kBins = 256;
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c) {
        std::size_t hist[kBins] = {};
        const std::size_t n = img.pixels();
        const float* ch = img.data.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) {
            auto b = static_cast<std::size_t>(std::clamp(ch[i], 0.0f, 1.0f) * (kBins - 1));
            ++hist[b];
        }
        float cdf[kBins];
        std::size_t run = 0;
        for (std::size_t b = 0; b < kBins; ++b) {
            run += hist[b];
            cdf[b] = static_cast<float>(run) / static_cast<float>(n);
        }
        float* och = out.data.data() + c * n;
        const float w = static_cast<float>(level);
        for (std::size_t i = 0; i < n; ++i) {
            auto b = static_cast<std::size_t>(std::clamp(ch[i], 0.0f, 1.0f) * (kBins - 1));
            och[i] = ch[i] * (1 - w) + cdf[b] * w;
        }
    }
    return out;
}

using RandaugOp = Image (*)(const Image&, double, Rng&);

const std::vector<std::pair<std::string, RandaugOp>>& randaug_table() {
    static const std::vector<std::pair<std::string, RandaugOp>> table = {
        {"translate", op_translate}, {"rotate", op_rotate},     {"shear", op_shear},
        {"contrast", op_contrast},   {"brightness", op_brightness},
        {"sharpness", op_sharpness}, {"posterize", op_posterize}, {"equalize", op_equalize},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& randaug_op_pool() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [name, fn] : randaug_table()) v.push_back(name);
        return v;
    }();
    return names;
}

Image randaug_lite(const Image& img, std::size_t num_ops, double magnitude, Rng& rng) {
    if (magnitude < 0.0 || magnitude > 10.0)
        throw std::invalid_argument("randaug_lite: magnitude must be in [0,10], got " +
                                    std::to_string(magnitude));
    if (num_ops == 0 || magnitude == 0.0) return img;
    const double level = magnitude / 10.0;
    Image out = img;
    const auto& table = randaug_table();
    for (std::size_t i = 0; i < num_ops; ++i) {
        const auto& [name, fn] = table[rng.below(table.size())];
        out = fn(out, level, rng);
    }
    return out;
}

Image normalize(const Image& img, const std::array<float, 3>& mean,
                const std::array<float, 3>& std) {
    if (img.channels != 3)
        throw std::invalid_argument("normalize: expected 3 channels, got " +
                                    std::to_string(img.channels));
    for (float s : std)
        if (s <= 0.0f) throw std::invalid_argument("normalize: std must be > 0");
    Image out = img;
    for (std::size_t c = 0; c < 3; ++c) {
        float* ch = out.data.data() + c * out.pixels();
        for (std::size_t i = 0; i < out.pixels(); ++i) ch[i] = (ch[i] - mean[c]) / std[c];
    }
    return out;
}

Image denormalize(const Image& img, const std::array<float, 3>& mean,
                  const std::array<float, 3>& std) {
    if (img.channels != 3) throw std::invalid_argument("denormalize: expected 3 channels");
    Image out = img;
    for (std::size_t c = 0; c < 3; ++c) {
        float* ch = out.data.data() + c * out.pixels();
        for (std::size_t i = 0; i < out.pixels(); ++i) ch[i] = ch[i] * std[c] + mean[c];
    }
    return out;
}

Image pretrain_augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    Image out = resize_bilinear(img, cfg.pretrain_size, cfg.pretrain_size);
    out = random_resized_crop(out, cfg.crop_scale_lo, cfg.crop_scale_hi, 3.0 / 4.0, 4.0 / 3.0,
                              cfg.pretrain_size, rng);
    out = maybe_hflip(out, cfg.hflip_prob, rng);
    return normalize(replicate3(out), cfg.norm_mean, cfg.norm_std);
}

Image finetune_augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    Image out = resize_bilinear(img, cfg.pretrain_size, cfg.pretrain_size);
    out = random_resized_crop(out, cfg.crop_scale_lo, cfg.crop_scale_hi, 3.0 / 4.0, 4.0 / 3.0,
                              cfg.train_size, rng);
    out = maybe_hflip(out, cfg.hflip_prob, rng);
    out = randaug_lite(out, cfg.randaug_ops, cfg.randaug_magnitude, rng);
    return normalize(replicate3(out), cfg.norm_mean, cfg.norm_std);
}

Image eval_transform(const Image& img, const AugmentConfig& cfg, std::size_t size) {
    return normalize(replicate3(resize_bilinear(img, size, size)), cfg.norm_mean, cfg.norm_std);
}

}  // namespace maelab
