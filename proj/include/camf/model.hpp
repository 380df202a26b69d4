#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "camf/dataset.hpp"
#include "camf/tensor.hpp"

namespace camf {

enum class Modality { Eye = 0, Ppg = 1, Semantic = 2 };

const char* modality_name(Modality m);

struct ModalityMask {
    bool eye = true;
    bool ppg = true;
    bool semantic = true;

    bool has(Modality m) const {
        switch (m) {
            case Modality::Eye: return eye;
            case Modality::Ppg: return ppg;
            default: return semantic;
        }
    }
    int count() const { return int(eye) + int(ppg) + int(semantic); }
    std::vector<Modality> selected() const;
    std::string str() const;  // e.g. "em+ppg+vsi"

    static ModalityMask parse(const std::vector<std::string>& names);
};

struct ModelConfig {
    size_t d_model = 64;      // encoder output width
    size_t heads = 8;         // attention heads H
    size_t key_dim = 128;     // per-head query/key width
    size_t value_dim = 64;    // per-head value width
    int num_classes = 4;
    size_t conv_filters = 16;
    size_t eye_dim = 8;       // input feature widths
    size_t ppg_dim = 6;
    size_t semantic_dim = 25;  // post-PCA width fed to the semantic encoder
    double l2 = 0.001;
    uint64_t init_seed = 7;
    ModalityMask modalities;
    bool cross_attention = true;

    void validate() const;
    size_t classifier_input_width() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// One ordered cross-attention pair: who queries whom.
struct PairSpec {
    Modality query;
    Modality kv;
    const char* name;
};

// The fixed stack order of the six directed pairs.
extern const std::array<PairSpec, 6> kPairOrder;

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool decay = false;  // participates in the L2 penalty
};

class ModelParams {
public:
    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    const Tensor& get(const std::string& name) const;
    void set(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    void add(std::string name, Tensor t, bool decay);
    size_t parameter_count() const;

    // Deep value copy, cut loose from any recorded graph.
    ModelParams snapshot() const;

    nlohmann::json to_json(const ModelConfig& cfg) const;
    static ModelParams from_json(const nlohmann::json& j, ModelConfig& cfg_out);

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Glorot-uniform weights, zero biases (LSTM forget-gate bias 1); deterministic
// under cfg.init_seed. Only parameters for the active modalities/pairs exist.
ModelParams init_params(const ModelConfig& cfg);

struct EncodedModalities {
    std::optional<Tensor> eye, ppg, semantic;  // each [T, d_model]
    const Tensor& get(Modality m) const;
};

// conv1d(k=1) + ReLU + LSTM for eye/ppg, LSTM for semantic; selected
// modalities only.
EncodedModalities encode(const Sample& s, const ModelParams& params, const ModelConfig& cfg);

// Multi-head cross attention: query_seq attends over kv_seq. `pair` names the
// parameter group ("es", "ps", ...).
Tensor mha(const Tensor& query_seq, const Tensor& kv_seq, const ModelParams& params,
           const ModelConfig& cfg, const std::string& pair);

// Mean over query time of the pair's attention output -> one d_model vector.
Tensor pair_weight(const Tensor& f_query, const Tensor& f_kv, const ModelParams& params,
                   const ModelConfig& cfg, const std::string& pair);

struct FusionOutput {
    Tensor stack;                         // [n_pairs, d_model], fixed pair order
    std::vector<std::string> pair_names;  // matching the stack rows
};

FusionOutput fuse(const EncodedModalities& enc, const ModelParams& params, const ModelConfig& cfg);

// mu/sigma pooling over the stack rows, then the two dense layers + softmax.
Tensor classify(const Tensor& stack, const ModelParams& params);

// Full pipeline respecting cfg.modalities and cfg.cross_attention. With cross
// attention off, time-mean-pooled encodings are concatenated; with a single
// modality its pooled encoding feeds the classifier directly. `penultimate`
// (optional) receives the classifier input vector.
Tensor forward(const Sample& s, const ModelParams& params, const ModelConfig& cfg,
               Tensor* penultimate = nullptr);

}  // namespace camf
