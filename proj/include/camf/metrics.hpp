#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camf/matrix.hpp"

namespace camf {

struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<size_t> counts;  // row-major, rows = true class, cols = predicted

    size_t at(int truth, int pred) const { return counts[truth * num_classes + pred]; }
    size_t& at(int truth, int pred) { return counts[truth * num_classes + pred]; }
    size_t total() const;
    size_t trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool present = true;  // false when the class has no true samples
};

struct MacroMetrics {
    double accuracy = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double macro_precision = 0.0;
    std::vector<ClassMetrics> per_class;
    bool has_empty_class = false;
};

MacroMetrics macro_metrics(const ConfusionMatrix& cm);

struct RocCurve {
    int class_index = 0;
    std::vector<std::pair<double, double>> points;  // (FPR, TPR), (0,0) .. (1,1)
    double auc = 0.0;
    bool degenerate = false;  // all-positive or all-negative class
};

// One-vs-rest ROC per class from an [N, K] score matrix of probability rows.
std::vector<RocCurve> roc_ovr(const Matrix& scores, const std::vector<int>& labels);

std::vector<int> argmax_rows(const Matrix& scores);

struct EvalReport {
    MacroMetrics metrics;
    ConfusionMatrix cm;
    std::vector<RocCurve> roc;
    size_t parameter_count = 0;
    nlohmann::json config;  // run configuration snapshot
    uint64_t seed = 0;
    int fold = -1;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

EvalReport make_report(const Matrix& scores, const std::vector<int>& labels,
                       size_t parameter_count, nlohmann::json config_snapshot, uint64_t seed,
                       int fold);

// ---- file emission ----

void write_json(const std::string& path, const nlohmann::json& j);

// Raw ROC points, one row per (class, point).
void write_roc_csv(const std::string& path, const EvalReport& report);

// Penultimate-layer features for external projection tools; one row per
// sample: id, label, then the feature columns.
void write_features_csv(const std::string& path, const std::vector<std::string>& ids,
                        const std::vector<int>& labels, const Matrix& features);

struct AblationRow {
    std::string config_id;
    std::string modalities;
    bool cross_attention = true;
    double acc_mean = 0.0;
    double acc_std = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t parameter_count = 0;
};

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

}  // namespace camf
