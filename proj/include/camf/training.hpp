#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "camf/dataset.hpp"
#include "camf/metrics.hpp"
#include "camf/model.hpp"
#include "camf/preprocess.hpp"
#include "camf/tensor.hpp"

namespace camf {

struct TrainConfig {
    size_t batch_size = 32;
    size_t max_epochs = 500;
    double learning_rate = 1e-3;
    size_t plateau_patience = 5;
    double plateau_factor = 0.1;
    size_t early_stop_patience = 10;
    uint64_t seed = 7;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double min_improvement = 1e-9;  // strict improvement threshold on the monitored loss
    bool parallel_folds = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Mean over the batch of -log(prob of the true class), log input clamped at
// 1e-12, plus lambda * sum of squared weight-matrix entries (biases excluded).
Tensor cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels,
                          const ModelParams& params, double lambda);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    size_t step = 0;

    static AdamState init(const ModelParams& params);
};

// Bias-corrected Adam update; replaces each parameter tensor with a fresh leaf.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon);

// Walks a monitored-loss history (lower is better) reproducing the run: decay
// when `patience` epochs pass without improvement since the last improvement
// or decay; returns the learning rate after the final epoch.
double plateau_scheduler(const std::vector<double>& history, size_t patience, double factor,
                         double lr);

// True when the history reaches `patience` consecutive epochs without
// improvement; decays never reset this counter.
bool early_stop(const std::vector<double>& history, size_t patience);

struct EpochStats {
    double train_loss = 0.0;  // optimized objective (data term + L2)
    double train_accuracy = 0.0;
    double val_loss = 0.0;  // monitored metric: validation cross-entropy
    double val_accuracy = 0.0;
    double learning_rate = 0.0;
};

struct RunRecord {
    std::vector<EpochStats> epochs;
    std::string stop_reason;  // "max_epochs", "early_stop", "diverged", "no_epochs"
    size_t best_epoch = 0;    // 1-based; 0 when no epoch improved
    double wall_time_sec = 0.0;
    nlohmann::json config_snapshot;

    nlohmann::json to_json() const;
};

struct FitResult {
    ModelParams params;  // best-validation weights
    RunRecord record;
};

// Mini-batch training with per-epoch seeded shuffling, Adam, plateau decay,
// early stopping, and best-weights restoration. Inputs must already be
// preprocessed.
FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& val,
              const ModelConfig& model_cfg, const TrainConfig& train_cfg);

struct Evaluation {
    EvalReport report;
    Matrix scores;             // [N, K] probability rows
    Matrix penultimate;        // [N, classifier input width]
    std::vector<std::string> ids;
    std::vector<int> labels;
};

Evaluation evaluate(const std::vector<Sample>& samples, const ModelParams& params,
                    const ModelConfig& cfg, nlohmann::json config_snapshot, uint64_t seed,
                    int fold);

struct FoldResult {
    int fold = -1;
    Evaluation val_eval;
    Evaluation test_eval;
    RunRecord record;
    ModelParams params;
    PreprocessArtifacts preprocess;
    ResampleReport resample;
};

struct CvResult {
    std::vector<FoldResult> folds;
    SplitPlan plan;
    // across-fold aggregate of the held-out test metrics (mean, population std)
    double test_acc_mean = 0.0;
    double test_acc_std = 0.0;
    double test_recall_mean = 0.0;
    double test_f1_mean = 0.0;
    size_t parameter_count = 0;

    nlohmann::json aggregate_json() const;
};

// The full protocol: stratified train/test split, stratified k folds of the
// training side, per-fold preprocessing (fitted on fold-train only), optional
// ADASYN on fold-train, training, and evaluation on fold-validation plus the
// held-out test set.
CvResult run_cv(const Dataset& ds, int k, double train_ratio, const ModelConfig& model_cfg,
                const TrainConfig& train_cfg, const PreprocessConfig& pre_cfg, uint64_t seed);

struct AblationSpec {
    std::string id;
    ModalityMask modalities;
    bool cross_attention = true;
    std::string manifest;  // optional alternate dataset (semantic-variant rows)
};

// The seven standard rows: unimodal eye/ppg, the three bimodal+CA combinations,
// trimodal without cross attention, trimodal with cross attention.
std::vector<AblationSpec> default_ablation_rows();

struct AblationResult {
    std::vector<AblationRow> table;
    std::vector<CvResult> runs;
};

AblationResult ablation_suite(const Dataset& ds, const std::vector<AblationSpec>& rows, int k,
                              double train_ratio, const ModelConfig& base_cfg,
                              const TrainConfig& train_cfg, const PreprocessConfig& pre_cfg,
                              uint64_t seed);

}  // namespace camf
