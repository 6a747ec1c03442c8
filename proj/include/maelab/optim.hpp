#pragma once

#include <map>
#include <string>

#include "maelab/tensor.hpp"

namespace maelab {

enum class OptimKind { AdamW, Lars };

struct OptimizerConfig {
    OptimKind kind = OptimKind::AdamW;
    double base_lr = 1.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.05;
    double momentum = 0.9;  // LARS
    double eps = 1e-8;

    void validate() const;
};

struct ScheduleConfig {
    double warmup_epochs = 20.0;
    double total_epochs = 800.0;
    double min_lr = 0.0;
    std::size_t steps_per_epoch = 1;

    void validate() const;
};

// Linear warmup from 0 to base_lr over warmup_epochs*steps_per_epoch steps,
// then cosine from base_lr to min_lr over the remaining steps; clamps to
// min_lr past the schedule's end.
double lr_at(std::size_t step, const ScheduleConfig& sched, double base_lr, double min_lr);

// multiplier(g) = d^(L+1-g) for groups g in {0..L+1}: 0 = patch/pos embed,
// i = block i, L+1 = head/final-norm.
std::vector<double> layer_decay_multipliers(std::size_t depth, double decay);

// Parameter name -> layer-decay group for the naming scheme used by the
// models ("patch_embed.*"/"cls_token" -> 0, "blockI.*" -> I+1, rest -> L+1).
std::size_t layer_decay_group(const std::string& param_name, std::size_t depth);

// 1-d parameters (biases, norms, tokens) are weight-decay-exempt and, for
// LARS, exempt from trust-ratio scaling.
bool default_decay_exempt(const Tensor& param);

struct ParamGroupEntry {
    std::string name;
    Tensor param;  // shared handle; steps mutate it in place
    double lr_mult = 1.0;
    bool decay_exempt = false;
};

std::vector<ParamGroupEntry> make_param_groups(
    const std::vector<std::pair<std::string, Tensor>>& named_params);
// Fine-tuning variant with layer-wise LR decay applied per group.
std::vector<ParamGroupEntry> make_param_groups_layer_decay(
    const std::vector<std::pair<std::string, Tensor>>& named_params, std::size_t depth,
    double decay);

struct OptimizerState {
    std::map<std::string, std::vector<float>> m;    // AdamW first moment
    std::map<std::string, std::vector<float>> v;    // AdamW second moment
    std::map<std::string, std::vector<float>> mom;  // LARS momentum buffer
    std::size_t step = 0;
};

// Bias-corrected AdamW with decoupled weight decay. Missing grads count as
// zero; non-finite grads raise with the parameter's name.
void adamw_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
                const OptimizerConfig& cfg, double lr_t);

// LARS: per-parameter trust ratio ||p|| / ||g + wd*p|| (1 when either norm is
// 0), momentum-updated gradient; exempt entries skip trust and decay.
void lars_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
               const OptimizerConfig& cfg, double lr_t);

void optimizer_step(std::vector<ParamGroupEntry>& params, OptimizerState& state,
                    const OptimizerConfig& cfg, double lr_t);

}  // namespace maelab
