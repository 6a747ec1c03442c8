#include "maelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace maelab {

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

AucResult auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += y != 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return {0.0, false};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank-sum of positives with average ranks over score ties
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double p = static_cast<double>(n_pos), q = static_cast<double>(n_neg);
    return {(rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q), true};
}

AucResult auc_all_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auc_all_pairs: scores and labels differ in length");
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    if (pairs == 0) return {0.0, false};
    return {wins / static_cast<double>(pairs), true};
}

AccSens accuracy_sensitivity(const std::vector<int>& pred_class,
                             const std::vector<int>& true_class, int target_class) {
    if (pred_class.size() != true_class.size())
        throw std::invalid_argument("accuracy_sensitivity: length mismatch");
    if (pred_class.empty()) throw std::invalid_argument("accuracy_sensitivity: empty input");
    std::size_t correct = 0, tp = 0, fn = 0;
    for (std::size_t i = 0; i < pred_class.size(); ++i) {
        if (pred_class[i] == true_class[i]) ++correct;
        if (true_class[i] == target_class) {
            if (pred_class[i] == target_class)
                ++tp;
            else
                ++fn;
        }
    }
    AccSens out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(pred_class.size());
    if (tp + fn > 0) {
        out.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
        out.sensitivity_defined = true;
    }
    return out;
}

double average_precision(const std::vector<double>& ious, double threshold) {
    if (ious.empty()) throw std::invalid_argument("average_precision: empty IoU list");
    std::size_t tp = 0;
    for (double v : ious) tp += v > threshold;  // strictly greater
    return static_cast<double>(tp) / static_cast<double>(ious.size());
}

EvalReport evaluate_multilabel(const std::vector<std::vector<double>>& scores,
                               const std::vector<std::vector<int>>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("evaluate_multilabel: bad input sizes");
    const std::size_t n = scores.size(), k = scores[0].size();

    EvalReport r;
    r.n_samples = n;
    r.per_class_auc.assign(k, std::nan(""));
    r.auc_defined.assign(k, false);
    double auc_sum = 0.0;
    std::size_t auc_n = 0;
    std::vector<double> col_scores(n);
    std::vector<int> col_labels(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            col_scores[i] = scores[i][c];
            col_labels[i] = labels[i][c];
        }
        AucResult a = auc(col_scores, col_labels);
        r.auc_defined[c] = a.defined;
        if (a.defined) {
            r.per_class_auc[c] = a.value;
            auc_sum += a.value;
            ++auc_n;
        } else {
            ++r.undefined_auc_classes;
        }
    }
    r.mean_auc = auc_n > 0 ? auc_sum / static_cast<double>(auc_n) : std::nan("");

    // single-label view: argmax over scores vs argmax over labels
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        pred[i] = static_cast<int>(
            std::max_element(scores[i].begin(), scores[i].end()) - scores[i].begin());
        truth[i] = static_cast<int>(
            std::max_element(labels[i].begin(), labels[i].end()) - labels[i].begin());
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == truth[i];
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    r.per_class_sensitivity.assign(k, std::nan(""));
    r.sensitivity_defined.assign(k, false);
    for (std::size_t c = 0; c < k; ++c) {
        AccSens s = accuracy_sensitivity(pred, truth, static_cast<int>(c));
        if (s.sensitivity_defined) {
            r.per_class_sensitivity[c] = s.sensitivity;
            r.sensitivity_defined[c] = true;
        }
    }
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["n_samples"] = n_samples;
    j["mean_auc"] = std::isnan(mean_auc) ? nlohmann::json() : nlohmann::json(mean_auc);
    j["undefined_auc_classes"] = undefined_auc_classes;
    j["accuracy"] = accuracy;
    nlohmann::json aucs = nlohmann::json::array();
    for (std::size_t c = 0; c < per_class_auc.size(); ++c)
        aucs.push_back(auc_defined[c] ? nlohmann::json(per_class_auc[c]) : nlohmann::json());
    j["per_class_auc"] = aucs;
    nlohmann::json sens = nlohmann::json::array();
    for (std::size_t c = 0; c < per_class_sensitivity.size(); ++c)
        sens.push_back(sensitivity_defined[c] ? nlohmann::json(per_class_sensitivity[c])
                                              : nlohmann::json());
    j["per_class_sensitivity"] = sens;
    return j.dump(2);
}

std::string EvalReport::csv_header(std::size_t n_classes) {
    std::ostringstream os;
    os << "n_samples,mean_auc,accuracy";
    for (std::size_t c = 0; c < n_classes; ++c) os << ",auc_" << c;
    return os.str();
}

std::string EvalReport::to_csv_row() const {
    std::ostringstream os;
    os << n_samples << ',' << mean_auc << ',' << accuracy;
    for (std::size_t c = 0; c < per_class_auc.size(); ++c) {
        os << ',';
        if (auc_defined[c]) os << per_class_auc[c];
    }
    return os.str();
}

}  // namespace maelab
