#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "camf/dataset.hpp"
#include "camf/training.hpp"

namespace camf::cli {

// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;    // bad flags, bad config, missing inputs
inline constexpr int kRuntimeError = 2;  // failure after validation

struct RunConfig {
    std::string manifest;
    std::string out_dir = "runs";
    int kfolds = 5;
    double train_ratio = 0.8;
    uint64_t seed = 7;
    ModelConfig model;
    TrainConfig train;
    PreprocessConfig preprocess;
    std::vector<AblationSpec> ablation;  // empty unless the config names rows
    bool ablation_given = false;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    // Full validation before any computation: block invariants plus the
    // existence of every referenced path.
    void validate() const;
};

// Reads, applies dotted-path overrides, and resolves seed defaults.
// Overrides: "train.learning_rate=0.01", "modalities=em,ppg", "ca=false",
// "seed=9". Values parse as JSON scalars, falling back to strings.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& out_override, long seed_override);

nlohmann::json apply_overrides(nlohmann::json config, const std::vector<std::string>& overrides);

// FNV-1a over the canonical config dump; names the output directory.
std::string config_hash(const nlohmann::json& j);

int run_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& out,
              std::ostream& err);

int run_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_override, long seed_override, std::ostream& out,
              std::ostream& err);

int run_eval(const std::string& params_path, const std::string& manifest_path,
             const std::string& out_path, std::ostream& out, std::ostream& err);

int run_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& out_override, long seed_override, std::ostream& out,
               std::ostream& err);

int run_dump_features(const std::string& params_path, const std::string& manifest_path,
                      const std::string& out_path, std::ostream& out, std::ostream& err);

}  // namespace camf::cli
