#pragma once

#include "maelab/vit.hpp"

namespace maelab {

// Per-sample partition of patch indices into visible and masked sets.
struct MaskPlan {
    std::size_t n_tokens = 0;
    double mask_ratio = 0.0;
    IndexRows keep;    // sorted per sample
    IndexRows masked;  // sorted per sample
    std::size_t batch() const { return keep.size(); }
};

// Uniform sampling without replacement, independent per sample; |keep| =
// round(n_tokens * (1 - mask_ratio)), identical across samples.
MaskPlan make_mask_plan(std::size_t n_tokens, double mask_ratio, std::size_t batch, Rng& rng);

struct DecoderConfig {
    std::size_t depth = 2;
    std::size_t width = 512;
    std::size_t heads = 16;
    double mlp_ratio = 4.0;
    void validate() const;
};

// Masked autoencoder: the encoder runs on visible patches only; the decoder
// sees the full token set (projected encoder outputs at visible slots, a
// shared learned mask token elsewhere) with positional embeddings added to
// both, and predicts pixels for every patch.
template <typename T>
class MaeModelT {
public:
    MaeModelT(VitConfig encoder_cfg, DecoderConfig decoder_cfg, Rng& rng);

    struct ForwardOut {
        TensorT<T> reconstruction;  // [B, N, patch_dim]
        TensorT<T> loss;            // scalar: MSE over masked patches only
        TensorT<T> targets;         // [B, N, patch_dim] (normalized when enabled)
    };
    // Loss targets come from target_images when given, else from images;
    // only rows in plan.masked are read on the target side.
    ForwardOut forward(const TensorT<T>& images, const MaskPlan& plan, bool train, Rng* rng,
                       bool normalize_targets = false,
                       const TensorT<T>* target_images = nullptr) const;

    // Full image with visible patches copied from the input and masked
    // patches filled with (de-normalized) decoder predictions.
    TensorT<T> reconstruct_image(const TensorT<T>& images, const MaskPlan& plan,
                                 bool normalize_targets = false) const;

    // Parameter handles across encoder and decoder, in construction order.
    std::vector<std::pair<std::string, TensorT<T>>> named_params() const;
    void zero_grad();

    VitConfig enc_cfg;
    DecoderConfig dec_cfg;
    VitModelT<T> encoder;
    ParamStoreT<T> dec_params;  // "dec.*" and "mask_token"
};

using MaeModel = MaeModelT<float>;

}  // namespace maelab
