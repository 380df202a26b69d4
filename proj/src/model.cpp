#include "camf/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "camf/rng.hpp"

using nlohmann::json;

namespace camf {

const std::array<PairSpec, 6> kPairOrder = {{
    {Modality::Eye, Modality::Semantic, "es"},
    {Modality::Ppg, Modality::Semantic, "ps"},
    {Modality::Semantic, Modality::Eye, "se"},
    {Modality::Ppg, Modality::Eye, "pe"},
    {Modality::Semantic, Modality::Ppg, "sp"},
    {Modality::Eye, Modality::Ppg, "ep"},
}};

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Eye: return "em";
        case Modality::Ppg: return "ppg";
        default: return "vsi";
    }
}

std::vector<Modality> ModalityMask::selected() const {
    std::vector<Modality> out;
    if (eye) out.push_back(Modality::Eye);
    if (ppg) out.push_back(Modality::Ppg);
    if (semantic) out.push_back(Modality::Semantic);
    return out;
}

std::string ModalityMask::str() const {
    std::string out;
    for (Modality m : selected()) {
        if (!out.empty()) out += "+";
        out += modality_name(m);
    }
    return out.empty() ? "none" : out;
}

ModalityMask ModalityMask::parse(const std::vector<std::string>& names) {
    ModalityMask mask{false, false, false};
    for (const auto& n : names) {
        if (n == "em" || n == "eye") mask.eye = true;
        else if (n == "ppg") mask.ppg = true;
        else if (n == "vsi" || n == "semantic" || n == "sem") mask.semantic = true;
        else throw std::invalid_argument("unknown modality '" + n + "' (use em, ppg, vsi)");
    }
    return mask;
}

void ModelConfig::validate() const {
    if (d_model == 0 || heads == 0 || key_dim == 0 || value_dim == 0 || conv_filters == 0)
        throw std::invalid_argument("model config: widths and head count must be positive");
    if (num_classes < 2) throw std::invalid_argument("model config: need at least 2 classes");
    if (modalities.count() == 0)
        throw std::invalid_argument("model config: modality mask selects nothing");
    if (modalities.eye && eye_dim == 0)
        throw std::invalid_argument("model config: eye_dim must be positive");
    if (modalities.ppg && ppg_dim == 0)
        throw std::invalid_argument("model config: ppg_dim must be positive");
    if (modalities.semantic && semantic_dim == 0)
        throw std::invalid_argument("model config: semantic_dim must be positive");
    if (l2 < 0.0) throw std::invalid_argument("model config: l2 must be nonnegative");
}

size_t ModelConfig::classifier_input_width() const {
    const int n = modalities.count();
    if (n == 1) return d_model;
    if (cross_attention) return 2 * d_model;
    return static_cast<size_t>(n) * d_model;
}

json ModelConfig::to_json() const {
    std::vector<std::string> mods;
    for (Modality m : modalities.selected()) mods.push_back(modality_name(m));
    return {{"d_model", d_model},
            {"heads", heads},
            {"key_dim", key_dim},
            {"value_dim", value_dim},
            {"classes", num_classes},
            {"conv_filters", conv_filters},
            {"eye_dim", eye_dim},
            {"ppg_dim", ppg_dim},
            {"semantic_dim", semantic_dim},
            {"l2", l2},
            {"init_seed", init_seed},
            {"modalities", mods},
            {"cross_attention", cross_attention}};
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    cfg.d_model = j.value("d_model", cfg.d_model);
    cfg.heads = j.value("heads", cfg.heads);
    cfg.key_dim = j.value("key_dim", cfg.key_dim);
    cfg.value_dim = j.value("value_dim", cfg.value_dim);
    cfg.num_classes = j.value("classes", cfg.num_classes);
    cfg.conv_filters = j.value("conv_filters", cfg.conv_filters);
    cfg.eye_dim = j.value("eye_dim", cfg.eye_dim);
    cfg.ppg_dim = j.value("ppg_dim", cfg.ppg_dim);
    cfg.semantic_dim = j.value("semantic_dim", cfg.semantic_dim);
    cfg.l2 = j.value("l2", cfg.l2);
    cfg.init_seed = j.value("init_seed", cfg.init_seed);
    if (j.contains("modalities"))
        cfg.modalities = ModalityMask::parse(j["modalities"].get<std::vector<std::string>>());
    cfg.cross_attention = j.value("cross_attention", cfg.cross_attention);
    return cfg;
}

// ---- parameter registry ----

const Tensor& ModelParams::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("model params: missing '" + name + "'");
    return entries_[it->second].tensor;
}

void ModelParams::set(const std::string& name, Tensor t) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("model params: missing '" + name + "'");
    entries_[it->second].tensor = std::move(t);
}

void ModelParams::add(std::string name, Tensor t, bool decay) {
    if (index_.count(name)) throw std::runtime_error("model params: duplicate '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(t), decay});
}

size_t ModelParams::parameter_count() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

ModelParams ModelParams::snapshot() const {
    ModelParams out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.detach(true), e.decay);
    return out;
}

json ModelParams::to_json(const ModelConfig& cfg) const {
    json params = json::object();
    for (const auto& e : entries_)
        params[e.name] = {{"shape", e.tensor.shape()}, {"data", e.tensor.data()},
                          {"decay", e.decay}};
    return {{"schema", "camf-params/1"}, {"config", cfg.to_json()}, {"params", params}};
}

ModelParams ModelParams::from_json(const json& j, ModelConfig& cfg_out) {
    if (j.value("schema", "") != "camf-params/1")
        throw std::runtime_error("model params: unknown schema tag");
    cfg_out = ModelConfig::from_json(j.at("config"));
    ModelParams expected = init_params(cfg_out);
    const auto& params = j.at("params");
    size_t seen = 0;
    for (auto& e : expected.entries()) {
        if (!params.contains(e.name))
            throw std::runtime_error("model params: file is missing '" + e.name + "'");
        const auto& pj = params[e.name];
        auto shape = pj.at("shape").get<std::vector<size_t>>();
        auto data = pj.at("data").get<std::vector<double>>();
        if (shape != e.tensor.shape())
            throw std::runtime_error("model params: shape mismatch for '" + e.name + "'");
        e.tensor = Tensor(shape, std::move(data), true);
        ++seen;
    }
    if (seen != params.size())
        throw std::runtime_error("model params: file has extra parameters for this config");
    return expected;
}

// ---- initialization ----

namespace {

Tensor glorot(Rng& rng, size_t fan_in, size_t fan_out, std::vector<size_t> shape) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> data(n);
    for (auto& v : data) v = rng.uniform(-limit, limit);
    return Tensor(std::move(shape), std::move(data), true);
}

Tensor lstm_bias(size_t units) {
    std::vector<double> b(4 * units, 0.0);
    for (size_t u = units; u < 2 * units; ++u) b[u] = 1.0;  // forget gate opens at init
    return Tensor({4 * units}, std::move(b), true);
}

void add_lstm(ModelParams& p, Rng& rng, const std::string& prefix, size_t in_dim, size_t units) {
    p.add(prefix + ".W", glorot(rng, in_dim, 4 * units, {in_dim, 4 * units}), true);
    p.add(prefix + ".U", glorot(rng, units, 4 * units, {units, 4 * units}), true);
    p.add(prefix + ".b", lstm_bias(units), false);
}

bool pair_active(const PairSpec& spec, const ModalityMask& mask) {
    return mask.has(spec.query) && mask.has(spec.kv);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.init_seed, 0x1417ull));
    ModelParams p;
    const size_t U = cfg.d_model;

    if (cfg.modalities.eye) {
        p.add("enc.eye.conv.W", glorot(rng, cfg.eye_dim, cfg.conv_filters,
                                       {cfg.eye_dim, cfg.conv_filters}), true);
        p.add("enc.eye.conv.b", Tensor::zeros({cfg.conv_filters}, true), false);
        add_lstm(p, rng, "enc.eye.lstm", cfg.conv_filters, U);
    }
    if (cfg.modalities.ppg) {
        p.add("enc.ppg.conv.W", glorot(rng, cfg.ppg_dim, cfg.conv_filters,
                                       {cfg.ppg_dim, cfg.conv_filters}), true);
        p.add("enc.ppg.conv.b", Tensor::zeros({cfg.conv_filters}, true), false);
        add_lstm(p, rng, "enc.ppg.lstm", cfg.conv_filters, U);
    }
    if (cfg.modalities.semantic) add_lstm(p, rng, "enc.sem.lstm", cfg.semantic_dim, U);

    if (cfg.cross_attention && cfg.modalities.count() >= 2) {
        for (const auto& spec : kPairOrder) {
            if (!pair_active(spec, cfg.modalities)) continue;
            const std::string base = std::string("fuse.") + spec.name;
            for (size_t h = 0; h < cfg.heads; ++h) {
                const std::string hb = base + ".h" + std::to_string(h);
                p.add(hb + ".Wq", glorot(rng, U, cfg.key_dim, {U, cfg.key_dim}), true);
                p.add(hb + ".Wk", glorot(rng, U, cfg.key_dim, {U, cfg.key_dim}), true);
                p.add(hb + ".Wv", glorot(rng, U, cfg.value_dim, {U, cfg.value_dim}), true);
            }
            const size_t concat_width = cfg.heads * cfg.value_dim;
            p.add(base + ".out.W", glorot(rng, concat_width, U, {concat_width, U}), true);
            p.add(base + ".out.b", Tensor::zeros({U}, true), false);
        }
    }

    const size_t z = cfg.classifier_input_width();
    p.add("cls.fc1.W", glorot(rng, z, U, {z, U}), true);
    p.add("cls.fc1.b", Tensor::zeros({U}, true), false);
    p.add("cls.fc2.W", glorot(rng, U, static_cast<size_t>(cfg.num_classes),
                              {U, static_cast<size_t>(cfg.num_classes)}), true);
    p.add("cls.fc2.b", Tensor::zeros({static_cast<size_t>(cfg.num_classes)}, true), false);
    return p;
}

// ---- forward pieces ----

const Tensor& EncodedModalities::get(Modality m) const {
    const std::optional<Tensor>* t = nullptr;
    switch (m) {
        case Modality::Eye: t = &eye; break;
        case Modality::Ppg: t = &ppg; break;
        default: t = &semantic; break;
    }
    if (!t->has_value()) throw std::runtime_error("encoded modality not computed");
    return t->value();
}

namespace {

Tensor tensor_from(const Matrix& m) {
    return Tensor({m.rows, m.cols}, m.values);
}

void check_width(const Matrix& m, size_t want, const std::string& what, const std::string& id) {
    if (m.cols != want)
        throw std::invalid_argument("encode: sample '" + id + "' " + what + " width " +
                                    std::to_string(m.cols) + " != model width " +
                                    std::to_string(want));
}

}  // namespace

EncodedModalities encode(const Sample& s, const ModelParams& params, const ModelConfig& cfg) {
    EncodedModalities enc;
    const Tensor h0 = Tensor::zeros({cfg.d_model});
    const Tensor c0 = Tensor::zeros({cfg.d_model});
    if (cfg.modalities.eye) {
        check_width(s.eye, cfg.eye_dim, "eye", s.id);
        Tensor x = relu(conv1d_k1(tensor_from(s.eye), params.get("enc.eye.conv.W"),
                                  params.get("enc.eye.conv.b")));
        enc.eye = lstm_seq(x, params.get("enc.eye.lstm.W"), params.get("enc.eye.lstm.U"),
                           params.get("enc.eye.lstm.b"), h0, c0);
    }
    if (cfg.modalities.ppg) {
        check_width(s.ppg, cfg.ppg_dim, "ppg", s.id);
        Tensor x = relu(conv1d_k1(tensor_from(s.ppg), params.get("enc.ppg.conv.W"),
                                  params.get("enc.ppg.conv.b")));
        enc.ppg = lstm_seq(x, params.get("enc.ppg.lstm.W"), params.get("enc.ppg.lstm.U"),
                           params.get("enc.ppg.lstm.b"), h0, c0);
    }
    if (cfg.modalities.semantic) {
        check_width(s.semantic, cfg.semantic_dim, "semantic", s.id);
        enc.semantic = lstm_seq(tensor_from(s.semantic), params.get("enc.sem.lstm.W"),
                                params.get("enc.sem.lstm.U"), params.get("enc.sem.lstm.b"), h0, c0);
    }
    return enc;
}

Tensor mha(const Tensor& query_seq, const Tensor& kv_seq, const ModelParams& params,
           const ModelConfig& cfg, const std::string& pair) {
    if (query_seq.cols() != cfg.d_model || kv_seq.cols() != cfg.d_model)
        throw std::invalid_argument("mha: sequence width != d_model");
    const std::string base = "fuse." + pair;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.key_dim));
    std::vector<Tensor> heads;
    heads.reserve(cfg.heads);
    for (size_t h = 0; h < cfg.heads; ++h) {
        const std::string hb = base + ".h" + std::to_string(h);
        Tensor Q = matmul(query_seq, params.get(hb + ".Wq"));
        Tensor K = matmul(kv_seq, params.get(hb + ".Wk"));
        Tensor V = matmul(kv_seq, params.get(hb + ".Wv"));
        Tensor scores = scale(matmul_nt(Q, K), inv_sqrt_dk);
        heads.push_back(matmul(softmax(scores), V));
    }
    Tensor cat = cfg.heads == 1 ? heads[0] : concat_cols(heads);
    return dense(cat, params.get(base + ".out.W"), params.get(base + ".out.b"));
}

Tensor pair_weight(const Tensor& f_query, const Tensor& f_kv, const ModelParams& params,
                   const ModelConfig& cfg, const std::string& pair) {
    return mean_rows(mha(f_query, f_kv, params, cfg, pair));
}

FusionOutput fuse(const EncodedModalities& enc, const ModelParams& params,
                  const ModelConfig& cfg) {
    std::vector<Tensor> rows;
    FusionOutput out;
    for (const auto& spec : kPairOrder) {
        if (!pair_active(spec, cfg.modalities)) continue;
        rows.push_back(pair_weight(enc.get(spec.query), enc.get(spec.kv), params, cfg, spec.name));
        out.pair_names.emplace_back(spec.name);
    }
    if (rows.empty()) throw std::runtime_error("fuse: no active modality pairs");
    out.stack = stack_rows(rows);
    return out;
}

namespace {

// Two dense layers; softmax is the only classifier activation.
Tensor classifier_head(const Tensor& z, const ModelParams& params) {
    Tensor hidden = dense(z, params.get("cls.fc1.W"), params.get("cls.fc1.b"));
    Tensor logits = dense(hidden, params.get("cls.fc2.W"), params.get("cls.fc2.b"));
    return softmax(logits);
}

}  // namespace

Tensor classify(const Tensor& stack, const ModelParams& params) {
    auto [mu, sd] = reduce_mean_std(stack);
    return classifier_head(concat_vec({mu, sd}), params);
}

Tensor forward(const Sample& s, const ModelParams& params, const ModelConfig& cfg,
               Tensor* penultimate) {
    const int n = cfg.modalities.count();
    if (n == 0) throw std::invalid_argument("forward: empty modality mask");
    EncodedModalities enc = encode(s, params, cfg);

    Tensor z;
    if (n == 1) {
        z = mean_rows(enc.get(cfg.modalities.selected()[0]));
    } else if (cfg.cross_attention) {
        FusionOutput fused = fuse(enc, params, cfg);
        auto [mu, sd] = reduce_mean_std(fused.stack);
        z = concat_vec({mu, sd});
    } else {
        std::vector<Tensor> pooled;
        for (Modality m : cfg.modalities.selected()) pooled.push_back(mean_rows(enc.get(m)));
        z = concat_vec(pooled);
    }
    if (penultimate) *penultimate = z;
    return classifier_head(z, params);
}

}  // namespace camf
