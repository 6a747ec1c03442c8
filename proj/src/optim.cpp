#include "maelab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace maelab {

void OptimizerConfig::validate() const {
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("OptimizerConfig: betas must be in [0,1)");
    if (weight_decay < 0.0)
        throw std::invalid_argument("OptimizerConfig: weight_decay must be >= 0");
    if (eps <= 0.0) throw std::invalid_argument("OptimizerConfig: eps must be > 0");
}

void ScheduleConfig::validate() const {
    if (!(warmup_epochs >= 0.0 && warmup_epochs < total_epochs))
        throw std::invalid_argument("ScheduleConfig: need 0 <= warmup_epochs < total_epochs");
    if (steps_per_epoch == 0)
        throw std::invalid_argument("ScheduleConfig: steps_per_epoch must be >= 1");
}

double lr_at(std::size_t step, const ScheduleConfig& sched, double base_lr, double min_lr) {
    sched.validate();
    const double warmup_steps = sched.warmup_epochs * static_cast<double>(sched.steps_per_epoch);
    const double total_steps = sched.total_epochs * static_cast<double>(sched.steps_per_epoch);
    const double s = static_cast<double>(step);
    if (warmup_steps > 0.0 && s < warmup_steps) return base_lr * s / warmup_steps;
    if (s >= total_steps) return min_lr;
    const double progress = (s - warmup_steps) / (total_steps - warmup_steps);
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<double> layer_decay_multipliers(std::size_t depth, double decay) {
    if (decay <= 0.0 || decay > 1.0)
        throw std::invalid_argument("layer_decay_multipliers: decay must be in (0,1], got " +
                                    std::to_string(decay));
    std::vector<double> mult(depth + 2);
    for (std::size_t g = 0; g < mult.size(); ++g)
        mult[g] = std::pow(decay, static_cast<double>(depth + 1 - g));
    return mult;
}

std::size_t layer_decay_group(const std::string& name, std::size_t depth) {
    if (name.rfind("patch_embed.", 0) == 0 || name == "cls_token") return 0;
    if (name.rfind("block", 0) == 0) {
        const std::size_t dot = name.find('.');
        if (dot != std::string::npos && dot > 5) {
            const std::size_t i = std::stoul(name.substr(5, dot - 5));
            if (i >= depth)
                throw std::invalid_argument("layer_decay_group: " + name + " beyond depth " +
                                            std::to_string(depth));
            return i + 1;
        }
    }
    return depth + 1;  // head, final norm
}

bool default_decay_exempt(const Tensor& param) { return param.shape().size() <= 1; }

std::vector<ParamGroupEntry> make_param_groups(
    const std::vector<std::pair<std::string, Tensor>>& named_params) {
    std::vector<ParamGroupEntry> out;
    out.reserve(named_params.size());
    for (const auto& [name, p] : named_params)
        out.push_back({name, p, 1.0, default_decay_exempt(p)});
    return out;
}

std::vector<ParamGroupEntry> make_param_groups_layer_decay(
    const std::vector<std::pair<std::string, Tensor>>& named_params, std::size_t depth,
    double decay) {
    const auto mult = layer_decay_multipliers(depth, decay);
    std::vector<ParamGroupEntry> out;
    out.reserve(named_params.size());
    for (const auto& [name, p] : named_params) {
        const std::size_t g = layer_decay_group(name, depth);
        out.push_back({name, p, mult[g], default_decay_exempt(p)});
    }
    return out;
}

namespace {

const std::vector<float>& grads_or_zero(const ParamGroupEntry& e, std::vector<float>& scratch) {
    if (!e.param.has_grad()) {
        scratch.assign(e.param.numel(), 0.0f);
        return scratch;
    }
    const auto& g = e.param.grad();
    for (float v : g)
        if (!std::isfinite(v))
            throw std::runtime_error("optimizer: non-finite gradient in parameter " + e.name);
    return g;
}

}  // namespace

void adamw_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
                const OptimizerConfig& cfg, double lr_t) {
    cfg.validate();
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    std::vector<float> scratch;
    for (auto& e : params) {
        const auto& g = grads_or_zero(e, scratch);
        auto& p = e.param.mutable_data();
        auto& m = state.m[e.name];
        auto& v = state.v[e.name];
        if (m.size() != p.size()) m.assign(p.size(), 0.0f);
        if (v.size() != p.size()) v.assign(p.size(), 0.0f);

        const double lr = lr_t * e.lr_mult;
        const double wd = e.decay_exempt ? 0.0 : cfg.weight_decay;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i]);
            v[i] = static_cast<float>(cfg.beta2 * v[i] +
                                      (1.0 - cfg.beta2) * static_cast<double>(g[i]) * g[i]);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            // decoupled decay, applied separately from the adaptive step
            double x = p[i] - lr * wd * p[i];
            x -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
            p[i] = static_cast<float>(x);
        }
    }
}

void lars_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
               const OptimizerConfig& cfg, double lr_t) {
    cfg.validate();
    state.step += 1;

    std::vector<float> scratch;
    for (auto& e : params) {
        const auto& g = grads_or_zero(e, scratch);
        auto& p = e.param.mutable_data();
        auto& buf = state.mom[e.name];
        if (buf.size() != p.size()) buf.assign(p.size(), 0.0f);

        const double wd = e.decay_exempt ? 0.0 : cfg.weight_decay;
        double p_norm = 0.0, u_norm = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double u = g[i] + wd * p[i];
            p_norm += static_cast<double>(p[i]) * p[i];
            u_norm += u * u;
        }
        p_norm = std::sqrt(p_norm);
        u_norm = std::sqrt(u_norm);
        double trust = 1.0;
        if (!e.decay_exempt && p_norm > 0.0 && u_norm > 0.0) trust = p_norm / u_norm;

        const double lr = lr_t * e.lr_mult * trust;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double u = g[i] + wd * p[i];
            buf[i] = static_cast<float>(cfg.momentum * buf[i] + u);
            p[i] = static_cast<float>(p[i] - lr * buf[i]);
        }
    }
}

void optimizer_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
                    const OptimizerConfig& cfg, double lr_t) {
    if (cfg.kind == OptimKind::AdamW)
        adamw_step(params, state, cfg, lr_t);
    else
        lars_step(params, state, cfg, lr_t);
}

}  // namespace maelab
