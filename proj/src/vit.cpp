#include "maelab/vit.hpp"

#include <cmath>
#include <stdexcept>

namespace maelab {

void VitConfig::validate() const {
    if (patch_size == 0 || image_size % patch_size != 0)
        throw std::invalid_argument("VitConfig: image_size " + std::to_string(image_size) +
                                    " not divisible by patch_size " + std::to_string(patch_size));
    if (heads == 0 || width % heads != 0)
        throw std::invalid_argument("VitConfig: width " + std::to_string(width) +
                                    " not divisible by heads " + std::to_string(heads));
    if (drop_path_rate < 0.0 || drop_path_rate >= 1.0)
        throw std::invalid_argument("VitConfig: drop_path_rate must be in [0,1)");
    if (depth == 0) throw std::invalid_argument("VitConfig: depth must be >= 1");
}

VitConfig vit_s16(std::size_t num_classes) {
    VitConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.width = 384;
    c.depth = 12;
    c.heads = 6;
    c.num_classes = num_classes;
    return c;
}

VitConfig vit_b16(std::size_t num_classes) {
    VitConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.width = 768;
    c.depth = 12;
    c.heads = 12;
    c.num_classes = num_classes;
    return c;
}

VitConfig vit_tiny(std::size_t num_classes) {
    VitConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.width = 32;
    c.depth = 2;
    c.heads = 2;
    c.num_classes = num_classes;
    return c;
}

std::size_t vit_param_count(const VitConfig& cfg) {
    const std::size_t W = cfg.width;
    const std::size_t H = cfg.mlp_hidden();
    const std::size_t P = cfg.patch_dim();
    std::size_t n = P * W + W;  // patch embedding
    if (cfg.pooling == Pooling::ClassToken) n += W;
    // per block: ln1 + q,k,v + proj + ln2 + mlp
    n += cfg.depth * (2 * W + 3 * (W * W + W) + (W * W + W) + 2 * W + (W * H + H) + (H * W + W));
    n += 2 * W;  // final norm
    if (cfg.include_head) n += W * cfg.num_classes + cfg.num_classes;
    return n;
}

// ---- ParamStoreT ------------------------------------------------------------

template <typename T>
TensorT<T>& ParamStoreT<T>::add(const std::string& name, TensorT<T> t) {
    if (by_name_.count(name)) throw std::logic_error("ParamStore: duplicate name " + name);
    t.set_requires_grad(true);
    order_.push_back(name);
    return by_name_.emplace(name, std::move(t)).first->second;
}

template <typename T>
TensorT<T>& ParamStoreT<T>::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
    return it->second;
}

template <typename T>
const TensorT<T>& ParamStoreT<T>::at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
    return it->second;
}

template <typename T>
std::size_t ParamStoreT<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += by_name_.at(name).numel();
    return n;
}

template <typename T>
void ParamStoreT<T>::zero_grad() {
    for (const auto& name : order_) by_name_.at(name).zero_grad();
}

// ---- patchify ---------------------------------------------------------------

template <typename T>
TensorT<T> patchify(const TensorT<T>& images, std::size_t p) {
    const Shape& s = images.shape();
    if (s.size() != 4)
        throw std::invalid_argument("patchify: expected [B,C,H,W], got " + shape_str(s));
    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    if (p == 0 || H % p != 0 || W % p != 0)
        throw std::invalid_argument("patchify: dims " + shape_str(s) +
                                    " not divisible by patch size " + std::to_string(p));
    const std::size_t gr = H / p, gc = W / p, N = gr * gc, P = C * p * p;

    std::vector<T> out(B * N * P);
    const auto& in = images.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t r0 = (n / gc) * p, c0 = (n % gc) * p;
            T* dst = out.data() + (b * N + n) * P;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        dst[c * p * p + y * p + x] = in[((b * C + c) * H + r0 + y) * W + c0 + x];
        }
    return TensorT<T>::from_data({B, N, P}, std::move(out));
}

template <typename T>
TensorT<T> unpatchify(const TensorT<T>& patches, std::size_t p, std::size_t C, std::size_t H,
                      std::size_t W) {
    const Shape& s = patches.shape();
    if (s.size() != 3 || s[2] != C * p * p || s[1] != (H / p) * (W / p))
        throw std::invalid_argument("unpatchify: patches " + shape_str(s) +
                                    " do not match image layout");
    const std::size_t B = s[0], gc = W / p, N = s[1], P = s[2];

    std::vector<T> out(B * C * H * W);
    const auto& in = patches.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t r0 = (n / gc) * p, c0 = (n % gc) * p;
            const T* src = in.data() + (b * N + n) * P;
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        out[((b * C + c) * H + r0 + y) * W + c0 + x] = src[c * p * p + y * p + x];
        }
    return TensorT<T>::from_data({B, C, H, W}, std::move(out));
}

// ---- positional embedding ----------------------------------------------------

namespace {

// 1D table: [sin(pos*w_0..), cos(pos*w_0..)], dim scalars per position.
template <typename T>
void sincos_1d(std::vector<T>& out, std::size_t stride, std::size_t offset, std::size_t n_pos,
               const std::vector<double>& pos, std::size_t dim) {
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < n_pos; ++i)
        for (std::size_t k = 0; k < half; ++k) {
            const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / half);
            const double v = pos[i] * omega;
            out[i * stride + offset + k] = static_cast<T>(std::sin(v));
            out[i * stride + offset + half + k] = static_cast<T>(std::cos(v));
        }
}

}  // namespace

template <typename T>
TensorT<T> sincos_pos_embed(std::size_t rows, std::size_t cols, std::size_t width) {
    if (width % 4 != 0)
        throw std::invalid_argument("sincos_pos_embed: width " + std::to_string(width) +
                                    " not divisible by 4");
    const std::size_t n = rows * cols;
    std::vector<T> out(n * width, T(0));
    std::vector<double> row_pos(n), col_pos(n);
    for (std::size_t i = 0; i < n; ++i) {
        row_pos[i] = static_cast<double>(i / cols);
        col_pos[i] = static_cast<double>(i % cols);
    }
    sincos_1d<T>(out, width, 0, n, row_pos, width / 2);
    sincos_1d<T>(out, width, width / 2, n, col_pos, width / 2);
    return TensorT<T>::from_data({n, width}, std::move(out));
}

// ---- drop path -----------------------------------------------------------------

template <typename T>
TensorT<T> drop_path(const TensorT<T>& x, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("drop_path: rate must be in [0,1), got " +
                                    std::to_string(rate));
    if (!train || rate == 0.0) return x;
    const std::size_t B = x.dim(0);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> scales(B);
    for (auto& s : scales) s = rng.bernoulli(1.0 - rate) ? keep_scale : T(0);
    return row_scale(x, scales);
}

// ---- trunk -----------------------------------------------------------------------

namespace {

template <typename T>
TensorT<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const T limit = std::sqrt(T(6) / static_cast<T>(fan_in + fan_out));
    return TensorT<T>::uniform({fan_in, fan_out}, rng, -limit, limit);
}

}  // namespace

template <typename T>
void add_trunk_params(ParamStoreT<T>& store, const std::string& prefix, const TrunkSpec& spec,
                      Rng& rng) {
    const std::size_t W = spec.width;
    const std::size_t H = static_cast<std::size_t>(W * spec.mlp_ratio);
    for (std::size_t i = 0; i < spec.depth; ++i) {
        const std::string b = prefix + "block" + std::to_string(i) + ".";
        store.add(b + "ln1.g", TensorT<T>::full({W}, T(1)));
        store.add(b + "ln1.b", TensorT<T>::zeros({W}));
        for (const char* nm : {"q", "k", "v"}) {
            store.add(b + "attn." + nm + ".w", xavier_uniform<T>(W, W, rng));
            store.add(b + "attn." + nm + ".b", TensorT<T>::zeros({W}));
        }
        store.add(b + "attn.proj.w", xavier_uniform<T>(W, W, rng));
        store.add(b + "attn.proj.b", TensorT<T>::zeros({W}));
        store.add(b + "ln2.g", TensorT<T>::full({W}, T(1)));
        store.add(b + "ln2.b", TensorT<T>::zeros({W}));
        store.add(b + "mlp.fc1.w", xavier_uniform<T>(W, H, rng));
        store.add(b + "mlp.fc1.b", TensorT<T>::zeros({H}));
        store.add(b + "mlp.fc2.w", xavier_uniform<T>(H, W, rng));
        store.add(b + "mlp.fc2.b", TensorT<T>::zeros({W}));
    }
    store.add(prefix + "norm.g", TensorT<T>::full({W}, T(1)));
    store.add(prefix + "norm.b", TensorT<T>::zeros({W}));
}

template <typename T>
TrunkResultT<T> run_trunk(const ParamStoreT<T>& store, const std::string& prefix,
                          const TrunkSpec& spec, TensorT<T> x, bool train, Rng* rng) {
    TrunkResultT<T> out;
    const std::size_t B = x.dim(0), K = x.dim(1);
    const std::size_t heads = spec.heads, D = spec.width / heads;
    const T att_scale = T(1) / std::sqrt(static_cast<T>(D));

    for (std::size_t i = 0; i < spec.depth; ++i) {
        const std::string b = prefix + "block" + std::to_string(i) + ".";
        const double dp_rate =
            spec.depth > 1 ? spec.drop_path_rate * static_cast<double>(i) / (spec.depth - 1)
                           : 0.0;
        auto branch_drop = [&](const TensorT<T>& t) {
            if (!train || dp_rate == 0.0) return t;
            if (!rng) throw std::logic_error("run_trunk: train mode with DropPath needs an rng");
            return drop_path(t, dp_rate, train, *rng);
        };

        TensorT<T> h = layer_norm(x, store.at(b + "ln1.g"), store.at(b + "ln1.b"));
        if (i + 1 == spec.depth) out.gradcam_target = h;

        auto split_heads = [&](const char* nm) {
            TensorT<T> t = add(matmul(h, store.at(b + "attn." + nm + ".w")),
                               store.at(b + "attn." + nm + ".b"));
            return transpose(reshape(t, {B, K, heads, D}), 1, 2);  // [B,heads,K,D]
        };
        TensorT<T> q = split_heads("q");
        TensorT<T> k = split_heads("k");
        TensorT<T> v = split_heads("v");
        TensorT<T> att = softmax(scalar_mul(matmul(q, transpose(k, 2, 3)), att_scale));
        if (i + 1 == spec.depth) out.last_attention = att;
        TensorT<T> ctx = reshape(transpose(matmul(att, v), 1, 2), {B, K, spec.width});
        TensorT<T> attn_out =
            add(matmul(ctx, store.at(b + "attn.proj.w")), store.at(b + "attn.proj.b"));
        x = add(x, branch_drop(attn_out));

        TensorT<T> h2 = layer_norm(x, store.at(b + "ln2.g"), store.at(b + "ln2.b"));
        TensorT<T> mlp = add(
            matmul(gelu(add(matmul(h2, store.at(b + "mlp.fc1.w")), store.at(b + "mlp.fc1.b"))),
                   store.at(b + "mlp.fc2.w")),
            store.at(b + "mlp.fc2.b"));
        x = add(x, branch_drop(mlp));
    }
    out.tokens = layer_norm(x, store.at(prefix + "norm.g"), store.at(prefix + "norm.b"));
    return out;
}

// ---- model -----------------------------------------------------------------------

template <typename T>
VitModelT<T>::VitModelT(const VitConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    const std::size_t W = cfg.width, P = cfg.patch_dim();

    params.add("patch_embed.w", xavier_uniform<T>(P, W, rng));
    params.add("patch_embed.b", TensorT<T>::zeros({W}));
    if (cfg.pooling == Pooling::ClassToken)
        params.add("cls_token", TensorT<T>::randn({W}, rng, T(0.02)));
    add_trunk_params(params, "", trunk_spec(), rng);
    if (cfg.include_head) {
        // zero-init head for fine-tuning stability
        params.add("head.w", TensorT<T>::zeros({W, cfg.num_classes}));
        params.add("head.b", TensorT<T>::zeros({cfg.num_classes}));
    }
}

template <typename T>
TensorT<T> VitModelT<T>::embed(const TensorT<T>& patches) const {
    return add(matmul(patches, params.at("patch_embed.w")), params.at("patch_embed.b"));
}

template <typename T>
TrunkResultT<T> VitModelT<T>::trunk(TensorT<T> x, bool train, Rng* rng) const {
    return run_trunk(params, "", trunk_spec(), std::move(x), train, rng);
}

template <typename T>
typename VitModelT<T>::Output VitModelT<T>::forward(const TensorT<T>& images, bool train,
                                                    Rng* rng, bool use_pos) const {
    TensorT<T> patches = patchify(images, cfg.patch_size);
    const std::size_t B = patches.dim(0), N = patches.dim(1);
    TensorT<T> x = embed(patches);
    if (use_pos) x = add(x, sincos_pos_embed<T>(cfg.grid_rows(), cfg.grid_rows(), cfg.width));

    if (cfg.pooling == Pooling::ClassToken) {
        // prepend cls: scatter patch tokens to rows 1..N and cls to row 0
        IndexRows shift(B), zero(B, {0});
        for (std::size_t b = 0; b < B; ++b) {
            shift[b].resize(N);
            for (std::size_t n = 0; n < N; ++n) shift[b][n] = n + 1;
        }
        TensorT<T> cls = expand_rows(params.at("cls_token"), B, 1);
        x = add(scatter_rows(x, shift, N + 1), scatter_rows(cls, zero, N + 1));
    }

    Output out;
    TrunkResultT<T> t = trunk(x, train, rng);
    out.tokens = t.tokens;
    out.gradcam_target = t.gradcam_target;
    out.last_attention = t.last_attention;

    if (cfg.pooling == Pooling::ClassToken) {
        IndexRows zero(B, {0});
        out.pooled = reshape(gather_rows(t.tokens, zero), {B, cfg.width});
    } else {
        out.pooled = mean_axis(t.tokens, 1);
    }
    if (cfg.include_head)
        out.logits = add(matmul(out.pooled, params.at("head.w")), params.at("head.b"));
    return out;
}

template <typename T>
template <typename U>
void VitModelT<T>::copy_params_from(const ParamStoreT<U>& other) {
    for (const auto& name : params.names()) {
        const auto& src = other.at(name);
        auto& dst = params.at(name);
        if (src.shape() != dst.shape())
            throw std::invalid_argument("copy_params_from: shape mismatch on " + name);
        auto& d = dst.mutable_data();
        const auto& s = src.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(s[i]);
    }
}

// ---- explicit instantiations ------------------------------------------------------

#define MAELAB_INSTANTIATE_VIT(T)                                                             \
    template struct ParamStoreT<T>;                                                          \
    template TensorT<T> patchify(const TensorT<T>&, std::size_t);                            \
    template TensorT<T> unpatchify(const TensorT<T>&, std::size_t, std::size_t, std::size_t, \
                                   std::size_t);                                             \
    template TensorT<T> sincos_pos_embed<T>(std::size_t, std::size_t, std::size_t);          \
    template TensorT<T> drop_path(const TensorT<T>&, double, bool, Rng&);                    \
    template void add_trunk_params(ParamStoreT<T>&, const std::string&, const TrunkSpec&,    \
                                   Rng&);                                                    \
    template TrunkResultT<T> run_trunk(const ParamStoreT<T>&, const std::string&,            \
                                       const TrunkSpec&, TensorT<T>, bool, Rng*);            \
    template class VitModelT<T>;

MAELAB_INSTANTIATE_VIT(float)
MAELAB_INSTANTIATE_VIT(double)
#undef MAELAB_INSTANTIATE_VIT

template void VitModelT<float>::copy_params_from(const ParamStoreT<float>&);
template void VitModelT<float>::copy_params_from(const ParamStoreT<double>&);
template void VitModelT<double>::copy_params_from(const ParamStoreT<float>&);
template void VitModelT<double>::copy_params_from(const ParamStoreT<double>&);

}  // namespace maelab
