#pragma once

#include <map>
#include <string>

#include "maelab/tensor.hpp"

namespace maelab {

enum class Pooling { GlobalAverage, ClassToken };

// Architecture hyperparameters for the vanilla ViT encoder.
struct VitConfig {
    std::size_t image_size = 224;
    std::size_t patch_size = 16;
    std::size_t in_channels = 3;
    std::size_t width = 384;
    std::size_t depth = 12;
    std::size_t heads = 6;
    double mlp_ratio = 4.0;
    double drop_path_rate = 0.0;
    std::size_t num_classes = 14;
    Pooling pooling = Pooling::GlobalAverage;
    bool include_head = true;  // off for the MAE encoder

    std::size_t grid_rows() const { return image_size / patch_size; }
    std::size_t n_tokens() const { return grid_rows() * grid_rows(); }
    std::size_t patch_dim() const { return in_channels * patch_size * patch_size; }
    std::size_t mlp_hidden() const { return static_cast<std::size_t>(width * mlp_ratio); }
    std::size_t head_dim() const { return width / heads; }

    void validate() const;  // divisibility and range checks
};

VitConfig vit_s16(std::size_t num_classes = 14);
VitConfig vit_b16(std::size_t num_classes = 14);
// Small config for tests and desk-scale runs: 32px images, 8px patches,
// depth 2, width 32, heads 2.
VitConfig vit_tiny(std::size_t num_classes = 4);

// Trainable scalar count, computed from the config alone.
std::size_t vit_param_count(const VitConfig& cfg);

// Named parameter tensors in a fixed construction order.
template <typename T>
struct ParamStoreT {
    TensorT<T>& add(const std::string& name, TensorT<T> t);
    TensorT<T>& at(const std::string& name);
    const TensorT<T>& at(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
    const std::vector<std::string>& names() const { return order_; }
    std::size_t scalar_count() const;
    void zero_grad();

private:
    std::vector<std::string> order_;
    std::map<std::string, TensorT<T>> by_name_;
};

using ParamStore = ParamStoreT<float>;

// [B, C, H, W] -> [B, N, C*p*p] with N = (H/p)*(W/p); pure data movement,
// inverted bitwise by unpatchify.
template <typename T>
TensorT<T> patchify(const TensorT<T>& images, std::size_t patch_size);
template <typename T>
TensorT<T> unpatchify(const TensorT<T>& patches, std::size_t patch_size, std::size_t channels,
                      std::size_t height, std::size_t width);

// Fixed 2D sin-cos table [rows*cols, width]; no trainable parameters, so it
// can be regenerated at any grid and needs no interpolation across input
// resolutions. width must be divisible by 4.
template <typename T = float>
TensorT<T> sincos_pos_embed(std::size_t rows, std::size_t cols, std::size_t width);

// Stochastic depth: per-sample Bernoulli keep with prob 1-rate in train mode,
// kept samples scaled by 1/(1-rate); identity in eval mode. 0 <= rate < 1.
template <typename T>
TensorT<T> drop_path(const TensorT<T>& x, double rate, bool train, Rng& rng);

struct TokenBatch {
    Tensor tokens;  // [B, n_tokens, width]
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// Pre-norm transformer trunk shared by the encoder and the MAE decoder.
struct TrunkSpec {
    std::size_t width = 0;
    std::size_t heads = 0;
    std::size_t depth = 0;
    double mlp_ratio = 4.0;
    double drop_path_rate = 0.0;
};

template <typename T>
struct TrunkResultT {
    TensorT<T> tokens;          // after final norm
    TensorT<T> gradcam_target;  // first LayerNorm output of the last block
    TensorT<T> last_attention;  // [B, heads, K, K]
};

template <typename T>
void add_trunk_params(ParamStoreT<T>& store, const std::string& prefix, const TrunkSpec& spec,
                      Rng& rng);
template <typename T>
TrunkResultT<T> run_trunk(const ParamStoreT<T>& store, const std::string& prefix,
                          const TrunkSpec& spec, TensorT<T> x, bool train, Rng* rng);

template <typename T>
class VitModelT {
public:
    VitModelT(const VitConfig& cfg, Rng& rng);

    // Linear patch embedding: [B, K, patch_dim] -> [B, K, width].
    TensorT<T> embed(const TensorT<T>& patches) const;

    // Pre-norm transformer blocks + final norm over an arbitrary token set.
    // DropPath rates ramp linearly from 0 to cfg.drop_path_rate across depth.
    TrunkResultT<T> trunk(TensorT<T> x, bool train, Rng* rng) const;

    struct Output {
        TensorT<T> logits;  // [B, num_classes], when the head is present
        TensorT<T> pooled;  // [B, width]
        TensorT<T> tokens;
        TensorT<T> gradcam_target;
        TensorT<T> last_attention;
    };
    Output forward(const TensorT<T>& images, bool train, Rng* rng, bool use_pos = true) const;

    TrunkSpec trunk_spec() const {
        return {cfg.width, cfg.heads, cfg.depth, cfg.mlp_ratio, cfg.drop_path_rate};
    }

    // Overwrites parameter values from another precision's store (exact widen
    // or narrow); names and shapes must match.
    template <typename U>
    void copy_params_from(const ParamStoreT<U>& other);

    VitConfig cfg;
    ParamStoreT<T> params;
};

using VitModel = VitModelT<float>;

}  // namespace maelab
