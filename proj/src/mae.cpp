#include "maelab/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace maelab {

MaskPlan make_mask_plan(std::size_t n_tokens, double mask_ratio, std::size_t batch, Rng& rng) {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
        throw std::invalid_argument("make_mask_plan: mask_ratio must be in (0,1), got " +
                                    std::to_string(mask_ratio));
    const std::size_t n_keep =
        static_cast<std::size_t>(std::lround(static_cast<double>(n_tokens) * (1.0 - mask_ratio)));
    if (n_keep == 0) throw std::invalid_argument("make_mask_plan: zero kept tokens");

    MaskPlan plan;
    plan.n_tokens = n_tokens;
    plan.mask_ratio = mask_ratio;
    plan.keep.resize(batch);
    plan.masked.resize(batch);
    std::vector<std::size_t> perm(n_tokens);
    for (std::size_t b = 0; b < batch; ++b) {
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        plan.keep[b].assign(perm.begin(), perm.begin() + n_keep);
        plan.masked[b].assign(perm.begin() + n_keep, perm.end());
        std::sort(plan.keep[b].begin(), plan.keep[b].end());
        std::sort(plan.masked[b].begin(), plan.masked[b].end());
    }
    return plan;
}

void DecoderConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("DecoderConfig: depth must be >= 1");
    if (heads == 0 || width % heads != 0)
        throw std::invalid_argument("DecoderConfig: width " + std::to_string(width) +
                                    " not divisible by heads " + std::to_string(heads));
}

template <typename T>
MaeModelT<T>::MaeModelT(VitConfig encoder_cfg, DecoderConfig decoder_cfg, Rng& rng)
    : enc_cfg([&] {
          encoder_cfg.include_head = false;
          encoder_cfg.pooling = Pooling::GlobalAverage;
          return encoder_cfg;
      }()),
      dec_cfg(decoder_cfg),
      encoder(enc_cfg, rng) {
    dec_cfg.validate();
    const std::size_t We = enc_cfg.width, Wd = dec_cfg.width, P = enc_cfg.patch_dim();
    const T lim = std::sqrt(T(6) / static_cast<T>(We + Wd));
    dec_params.add("dec.proj.w", TensorT<T>::uniform({We, Wd}, rng, -lim, lim));
    dec_params.add("dec.proj.b", TensorT<T>::zeros({Wd}));
    dec_params.add("mask_token", TensorT<T>::randn({Wd}, rng, T(0.02)));
    add_trunk_params(dec_params, "dec.",
                     {dec_cfg.width, dec_cfg.heads, dec_cfg.depth, dec_cfg.mlp_ratio, 0.0}, rng);
    const T lim2 = std::sqrt(T(6) / static_cast<T>(Wd + P));
    dec_params.add("dec.pred.w", TensorT<T>::uniform({Wd, P}, rng, -lim2, lim2));
    dec_params.add("dec.pred.b", TensorT<T>::zeros({P}));
}

namespace {

// Per-patch mean/std normalization of pixel targets.
template <typename T>
TensorT<T> normalize_patch_rows(const TensorT<T>& patches) {
    const std::size_t B = patches.dim(0), N = patches.dim(1), P = patches.dim(2);
    std::vector<T> out(patches.data());
    for (std::size_t r = 0; r < B * N; ++r) {
        T* row = out.data() + r * P;
        T mu = T(0);
        for (std::size_t p = 0; p < P; ++p) mu += row[p];
        mu /= static_cast<T>(P);
        T var = T(0);
        for (std::size_t p = 0; p < P; ++p) var += (row[p] - mu) * (row[p] - mu);
        var /= static_cast<T>(P);
        const T rstd = T(1) / std::sqrt(var + T(1e-6));
        for (std::size_t p = 0; p < P; ++p) row[p] = (row[p] - mu) * rstd;
    }
    return TensorT<T>::from_data({B, N, P}, std::move(out));
}

}  // namespace

template <typename T>
typename MaeModelT<T>::ForwardOut MaeModelT<T>::forward(const TensorT<T>& images,
                                                        const MaskPlan& plan, bool train,
                                                        Rng* rng, bool normalize_targets,
                                                        const TensorT<T>* target_images) const {
    TensorT<T> patches = patchify(images, enc_cfg.patch_size);
    const std::size_t B = patches.dim(0), N = patches.dim(1);
    if (plan.n_tokens != N || plan.batch() != B)
        throw std::invalid_argument("mae_forward: plan covers " + std::to_string(plan.n_tokens) +
                                    " tokens x " + std::to_string(plan.batch()) +
                                    " samples, images give " + std::to_string(N) + " x " +
                                    std::to_string(B));

    // encoder over visible patches only
    TensorT<T> enc_pos =
        sincos_pos_embed<T>(enc_cfg.grid_rows(), enc_cfg.grid_rows(), enc_cfg.width);
    TensorT<T> x =
        add(encoder.embed(gather_rows(patches, plan.keep)), gather_rows(enc_pos, plan.keep));
    TensorT<T> enc_out = encoder.trunk(x, train, rng).tokens;

    // decoder over the full token set: projected encoder outputs at visible
    // slots, the shared mask token at masked slots, positions added to both
    TensorT<T> proj =
        add(matmul(enc_out, dec_params.at("dec.proj.w")), dec_params.at("dec.proj.b"));
    const std::size_t n_masked = plan.masked.empty() ? 0 : plan.masked[0].size();
    TensorT<T> dec_in = scatter_rows(proj, plan.keep, N);
    if (n_masked > 0) {
        TensorT<T> mask_tok = expand_rows(dec_params.at("mask_token"), B, n_masked);
        dec_in = add(dec_in, scatter_rows(mask_tok, plan.masked, N));
    }
    const std::size_t dec_grid = enc_cfg.grid_rows();
    dec_in = add(dec_in, sincos_pos_embed<T>(dec_grid, dec_grid, dec_cfg.width));
    TensorT<T> dec_out =
        run_trunk(dec_params, "dec.",
                  {dec_cfg.width, dec_cfg.heads, dec_cfg.depth, dec_cfg.mlp_ratio, 0.0}, dec_in,
                  train, rng)
            .tokens;

    ForwardOut out;
    out.reconstruction =
        add(matmul(dec_out, dec_params.at("dec.pred.w")), dec_params.at("dec.pred.b"));
    out.targets =
        target_images != nullptr ? patchify(*target_images, enc_cfg.patch_size) : patches;
    if (normalize_targets) out.targets = normalize_patch_rows(out.targets);
    out.loss = masked_mse(out.reconstruction, out.targets, plan.masked);
    return out;
}

template <typename T>
TensorT<T> MaeModelT<T>::reconstruct_image(const TensorT<T>& images, const MaskPlan& plan,
                                           bool normalize_targets) const {
    TensorT<T> patches = patchify(images, enc_cfg.patch_size);
    const std::size_t B = patches.dim(0), N = patches.dim(1), P = patches.dim(2);

    std::vector<T> composed = patches.data();
    const bool any_masked = !plan.masked.empty() && !plan.masked[0].empty();
    if (any_masked) {
        ForwardOut fw = forward(images, plan, /*train=*/false, nullptr, normalize_targets);
        const auto& pred = fw.reconstruction.data();
        for (std::size_t b = 0; b < B; ++b)
            for (auto i : plan.masked[b]) {
                const T* src = pred.data() + (b * N + i) * P;
                T* dst = composed.data() + (b * N + i) * P;
                if (normalize_targets) {
                    // predictions live in per-patch normalized space; map back
                    // with the original patch's statistics
                    const T* orig = patches.data().data() + (b * N + i) * P;
                    T mu = T(0);
                    for (std::size_t p = 0; p < P; ++p) mu += orig[p];
                    mu /= static_cast<T>(P);
                    T var = T(0);
                    for (std::size_t p = 0; p < P; ++p) var += (orig[p] - mu) * (orig[p] - mu);
                    var /= static_cast<T>(P);
                    const T sd = std::sqrt(var + T(1e-6));
                    for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] * sd + mu;
                } else {
                    std::copy(src, src + P, dst);
                }
            }
    }
    const Shape& s = images.shape();
    return unpatchify(TensorT<T>::from_data({B, N, P}, std::move(composed)), enc_cfg.patch_size,
                      s[1], s[2], s[3]);
}

template <typename T>
std::vector<std::pair<std::string, TensorT<T>>> MaeModelT<T>::named_params() const {
    std::vector<std::pair<std::string, TensorT<T>>> out;
    for (const auto& name : encoder.params.names()) out.emplace_back(name, encoder.params.at(name));
    for (const auto& name : dec_params.names()) out.emplace_back(name, dec_params.at(name));
    return out;
}

template <typename T>
void MaeModelT<T>::zero_grad() {
    encoder.params.zero_grad();
    dec_params.zero_grad();
}

template class MaeModelT<float>;
template class MaeModelT<double>;

}  // namespace maelab
