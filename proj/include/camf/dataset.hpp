#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "camf/matrix.hpp"

namespace camf {

// One labeled multimodal window. Every block is a [T, D] sequence with T >= 1.
struct Sample {
    std::string id;
    int label = 0;
    Matrix eye;       // [T_e, D_e]
    Matrix ppg;       // [T_p, D_p]
    Matrix semantic;  // [T_s, D_s]
    std::string video_id;
};

struct Dataset {
    std::vector<std::string> class_names;
    size_t eye_dim = 0;
    size_t ppg_dim = 0;
    size_t semantic_dim = 0;
    std::vector<Sample> samples;  // ordered by id

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::vector<size_t> class_counts() const;
    const Sample& by_id(const std::string& id) const;
    Dataset subset(const std::vector<std::string>& ids) const;
};

struct FoldSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

struct SplitPlan {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::vector<FoldSplit> folds;
    uint64_t seed = 0;
};

// Reads manifest.json and every referenced modality CSV. Validates dims,
// finiteness, and labels; fails with the offending sample id and path.
Dataset load_dataset(const std::string& manifest_path);

// Stratified train/test split; per-class sizes within +-1 of ratio * count.
SplitPlan split_train_test(const Dataset& ds, double ratio, uint64_t seed);

// Stratified k-fold partition of train_ids; validation blocks are disjoint and
// cover train_ids, per-class counts within +-1 of count/k.
std::vector<FoldSplit> kfold(const Dataset& ds, const std::vector<std::string>& train_ids,
                             int k, uint64_t seed);

struct SynthSpec {
    int num_classes = 4;
    std::vector<size_t> class_counts;  // size K (use uniform() for balanced)
    size_t eye_dim = 8;
    size_t ppg_dim = 6;
    size_t semantic_dim = 32;
    size_t eye_len = 3;
    size_t ppg_len = 3;
    size_t semantic_len = 2;
    double separation = 3.0;  // class-mean scale s
    // Weight (in units of s) of a class-dependent cross-modal correlation: a
    // per-sample latent factor scales one class-specific pattern per modality.
    // Per-modality blocks stay Gaussian around the class mean; what changes is
    // the joint structure across modalities. 0 keeps modalities independent.
    double interaction = 0.0;
    bool semantic_informative = true;
    uint64_t seed = 7;
    std::vector<std::string> class_names;  // defaults: Table-style labels for K=4

    static SynthSpec uniform(int k, size_t per_class);
};

// Draws each modality as Gaussian noise around a class-dependent unit mean
// direction scaled by `separation` (semantic mean is class-independent when
// semantic_informative is false), writes manifest + CSVs + README under
// out_dir, and returns the dataset re-read from disk.
Dataset synthesize_dataset(const SynthSpec& spec, const std::string& out_dir);

}  // namespace camf
