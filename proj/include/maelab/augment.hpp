#pragma once

#include <array>

#include "maelab/image.hpp"
#include "maelab/rng.hpp"

namespace maelab {

struct AugmentConfig {
    double crop_scale_lo = 0.5;  // area fraction range for RandomResizedCrop
    double crop_scale_hi = 1.0;
    double hflip_prob = 0.5;
    std::size_t randaug_ops = 2;     // 0 disables RandAug
    double randaug_magnitude = 6.0;  // in [0,10]
    std::array<float, 3> norm_mean = {0.485f, 0.456f, 0.406f};
    std::array<float, 3> norm_std = {0.229f, 0.224f, 0.225f};
    std::size_t train_size = 224;     // fine-tuning input side
    std::size_t pretrain_size = 256;  // pre-training input side

    void validate() const;
};

// Crop with area fraction in [scale_lo, scale_hi] and aspect in
// [ratio_lo, ratio_hi] (log-uniform), rejection-sampled with a center-crop
// fallback after 10 tries, then resized bilinearly to out_size.
Image random_resized_crop(const Image& img, double scale_lo, double scale_hi, double ratio_lo,
                          double ratio_hi, std::size_t out_size, Rng& rng);

Image hflip(const Image& img);
Image maybe_hflip(const Image& img, double prob, Rng& rng);

// Names of the RandAug-lite op pool (geometry + intensity, no color ops).
const std::vector<std::string>& randaug_op_pool();

// Applies num_ops uniformly drawn pool ops at the given magnitude in [0,10];
// magnitude 0 is the identity for every op.
Image randaug_lite(const Image& img, std::size_t num_ops, double magnitude, Rng& rng);

// (x - mean) / std per channel; errors when any std is 0.
Image normalize(const Image& img, const std::array<float, 3>& mean,
                const std::array<float, 3>& std);
Image denormalize(const Image& img, const std::array<float, 3>& mean,
                  const std::array<float, 3>& std);

// Stage pipelines over a grayscale source image.
// Pre-training: resize-to-pretrain_size -> random_resized_crop -> hflip ->
// replicate to 3 channels -> normalize. Nothing else.
Image pretrain_augment(const Image& img, const AugmentConfig& cfg, Rng& rng);
// Fine-tuning adds randaug_lite before normalization and crops to train_size.
Image finetune_augment(const Image& img, const AugmentConfig& cfg, Rng& rng);
// Deterministic eval path: resize to size, replicate, normalize.
Image eval_transform(const Image& img, const AugmentConfig& cfg, std::size_t size);

}  // namespace maelab
