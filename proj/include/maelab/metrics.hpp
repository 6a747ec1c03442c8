#pragma once

#include <optional>
#include <string>
#include <vector>

namespace maelab {

// Axis-aligned box in half-open pixel coordinates: [x, x+w) x [y, y+h).
struct Box {
    double x = 0, y = 0, w = 0, h = 0;
};

// |a intersect b| / |a union b| by area; symmetric, in [0,1].
double iou(const Box& a, const Box& b);

struct AucResult {
    double value = 0.0;
    bool defined = false;  // needs at least one positive and one negative
};

// Rank-based AUC with ties counted 0.5 (Mann-Whitney), sort-based.
AucResult auc(const std::vector<double>& scores, const std::vector<int>& labels);
// O(P*N) all-pairs twin used to cross-check the fast path.
AucResult auc_all_pairs(const std::vector<double>& scores, const std::vector<int>& labels);

struct AccSens {
    double accuracy = 0.0;
    double sensitivity = 0.0;
    bool sensitivity_defined = false;  // no samples of the target class
};
AccSens accuracy_sensitivity(const std::vector<int>& pred_class,
                             const std::vector<int>& true_class, int target_class);

// Fraction of cases with IoU strictly greater than the threshold; one IoU per
// ground-truth case. Throws on an empty list.
double average_precision(const std::vector<double>& ious, double threshold);

struct EvalReport {
    std::vector<double> per_class_auc;  // NaN where undefined
    std::vector<bool> auc_defined;
    double mean_auc = 0.0;                  // over defined classes only
    std::size_t undefined_auc_classes = 0;  // exclusion count
    double accuracy = 0.0;
    std::vector<double> per_class_sensitivity;
    std::vector<bool> sensitivity_defined;
    std::size_t n_samples = 0;

    std::string to_json() const;
    static std::string csv_header(std::size_t n_classes);
    std::string to_csv_row() const;
};

// Multi-label evaluation: scores/labels are [n_samples][n_classes]; accuracy
// and sensitivity follow the argmax rule over scores.
EvalReport evaluate_multilabel(const std::vector<std::vector<double>>& scores,
                               const std::vector<std::vector<int>>& labels);

}  // namespace maelab
