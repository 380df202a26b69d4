#include "camf/cli.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "camf/metrics.hpp"
#include "camf/preprocess.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camf::cli {

namespace {

json read_json_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(std::string(what) + " not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string(what) + " is not valid JSON (" + path +
                                 "): " + e.what());
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t next = s.find(sep, pos);
        out.push_back(s.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

AblationSpec ablation_from_json(const json& j) {
    AblationSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.modalities = ModalityMask::parse(j.at("modalities").get<std::vector<std::string>>());
    spec.cross_attention = j.value("ca", true);
    spec.manifest = j.value("manifest", std::string());
    return spec;
}

json ablation_to_json(const AblationSpec& spec) {
    std::vector<std::string> mods;
    for (Modality m : spec.modalities.selected()) mods.push_back(modality_name(m));
    json j = {{"id", spec.id}, {"modalities", mods}, {"ca", spec.cross_attention}};
    if (!spec.manifest.empty()) j["manifest"] = spec.manifest;
    return j;
}

}  // namespace

json RunConfig::to_json() const {
    json j = {{"manifest", manifest},       {"out_dir", out_dir},
              {"kfolds", kfolds},           {"train_ratio", train_ratio},
              {"seed", seed},               {"model", model.to_json()},
              {"train", train.to_json()},   {"preprocess", preprocess.to_json()}};
    if (ablation_given) {
        json rows = json::array();
        for (const auto& a : ablation) rows.push_back(ablation_to_json(a));
        j["ablation"] = rows;
    }
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    cfg.manifest = j.value("manifest", std::string());
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.kfolds = j.value("kfolds", cfg.kfolds);
    cfg.train_ratio = j.value("train_ratio", cfg.train_ratio);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("model")) cfg.model = ModelConfig::from_json(j["model"]);
    if (j.contains("train")) cfg.train = TrainConfig::from_json(j["train"]);
    if (j.contains("preprocess")) cfg.preprocess = PreprocessConfig::from_json(j["preprocess"]);

    // top-level convenience switches mirror the model block
    if (j.contains("modalities"))
        cfg.model.modalities = ModalityMask::parse(j["modalities"].get<std::vector<std::string>>());
    if (j.contains("ca")) cfg.model.cross_attention = j["ca"].get<bool>();

    // the run seed is the default for block seeds the config leaves unset
    if (!j.contains("train") || !j["train"].contains("seed")) cfg.train.seed = cfg.seed;
    if (!j.contains("model") || !j["model"].contains("init_seed")) cfg.model.init_seed = cfg.seed;

    if (j.contains("ablation")) {
        cfg.ablation_given = true;
        for (const auto& row : j["ablation"]) cfg.ablation.push_back(ablation_from_json(row));
    }
    return cfg;
}

void RunConfig::validate() const {
    if (manifest.empty()) throw std::runtime_error("config: 'manifest' is required");
    if (!fs::exists(manifest)) throw std::runtime_error("config: manifest not found: " + manifest);
    if (kfolds < 2) throw std::runtime_error("config: kfolds must be >= 2");
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::runtime_error("config: train_ratio must be in (0,1)");
    model.validate();
    train.validate();
    for (const auto& row : ablation) {
        if (row.modalities.count() == 0)
            throw std::runtime_error("config: ablation row '" + row.id + "' selects no modality");
        if (!row.manifest.empty() && !fs::exists(row.manifest))
            throw std::runtime_error("config: ablation row '" + row.id +
                                     "' manifest not found: " + row.manifest);
    }
}

json apply_overrides(json config, const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("override '" + kv + "' is not key=value");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key.empty()) throw std::runtime_error("override '" + kv + "' has an empty key");

        json parsed;
        if (key == "modalities") {
            parsed = json::array();
            for (const auto& m : split(value, ',')) parsed.push_back(m);
        } else {
            parsed = json::parse(value, nullptr, false);
            if (parsed.is_discarded()) parsed = value;  // plain string
        }

        json* node = &config;
        auto parts = split(key, '.');
        for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
        (*node)[parts.back()] = parsed;
    }
    return config;
}

std::string config_hash(const json& j) {
    const std::string s = j.dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf, 12);
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                          const std::string& out_override, long seed_override) {
    json j = read_json_file(path, "config");
    j = apply_overrides(j, overrides);
    if (seed_override >= 0) {
        j["seed"] = static_cast<uint64_t>(seed_override);
        if (j.contains("train")) j["train"].erase("seed");
        if (j.contains("model")) j["model"].erase("init_seed");
    }
    RunConfig cfg = RunConfig::from_json(j);
    if (!out_override.empty()) cfg.out_dir = out_override;
    return cfg;
}

int run_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& out,
              std::ostream& err) {
    try {
        synthesize_dataset(spec, out_dir);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    out << (fs::path(out_dir) / "manifest.json").string() << "\n";
    return kOk;
}

namespace {

void write_fold_artifacts(const fs::path& dir, const FoldResult& fold, const ModelConfig& cfg) {
    fs::create_directories(dir);
    write_json((dir / "params.json").string(), fold.params.to_json(cfg));
    write_json((dir / "preprocess.json").string(), fold.preprocess.to_json());
    write_json((dir / "run_record.json").string(), fold.record.to_json());
    write_json((dir / "resample.json").string(), fold.resample.to_json());
    write_json((dir / "eval_val.json").string(), fold.val_eval.report.to_json());
    write_json((dir / "eval_test.json").string(), fold.test_eval.report.to_json());
    write_roc_csv((dir / "roc_test.csv").string(), fold.test_eval.report);
    write_features_csv((dir / "features_test.csv").string(), fold.test_eval.ids,
                       fold.test_eval.labels, fold.test_eval.penultimate);
}

// The model config actually used inside a fold (dims come from the fitted
// preprocessing layout).
ModelConfig fold_model_config(const RunConfig& cfg, const FoldResult& fold, int num_classes) {
    ModelConfig m = cfg.model;
    m.eye_dim = fold.preprocess.layout.eye_dim;
    m.ppg_dim = fold.preprocess.layout.ppg_dim;
    m.semantic_dim = fold.preprocess.layout.semantic_dim;
    m.num_classes = num_classes;
    m.init_seed = cfg.model.init_seed + static_cast<uint64_t>(fold.fold);
    return m;
}

}  // namespace

int run_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_override, long seed_override, std::ostream& out,
              std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_run_config(config_path, overrides, out_override, seed_override);
        cfg.validate();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    try {
        Dataset ds = load_dataset(cfg.manifest);
        CvResult cv = run_cv(ds, cfg.kfolds, cfg.train_ratio, cfg.model, cfg.train,
                             cfg.preprocess, cfg.seed);

        const json cfg_json = cfg.to_json();
        const fs::path run_dir = fs::path(cfg.out_dir) / ("train-" + config_hash(cfg_json));
        fs::create_directories(run_dir);
        write_json((run_dir / "config.json").string(), cfg_json);

        json fold_tests = json::array();
        json fold_vals = json::array();
        for (const auto& fold : cv.folds) {
            write_fold_artifacts(run_dir / ("fold" + std::to_string(fold.fold)), fold,
                                 fold_model_config(cfg, fold, ds.num_classes()));
            fold_tests.push_back(fold.test_eval.report.to_json());
            fold_vals.push_back(fold.val_eval.report.to_json());
        }
        json report = {{"schema", "camf-train-report/1"},
                       {"aggregate", cv.aggregate_json()},
                       {"fold_test_reports", fold_tests},
                       {"fold_val_reports", fold_vals}};
        write_json((run_dir / "report.json").string(), report);
        out << run_dir.string() << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

namespace {

struct LoadedModel {
    ModelConfig cfg;
    ModelParams params;
    PreprocessArtifacts preprocess;
};

LoadedModel load_model_artifacts(const std::string& params_path) {
    LoadedModel m;
    m.params = ModelParams::from_json(read_json_file(params_path, "params file"), m.cfg);
    const fs::path pre_path = fs::path(params_path).parent_path() / "preprocess.json";
    if (!fs::exists(pre_path))
        throw std::runtime_error("preprocess artifacts not found: " + pre_path.string() +
                                 " (expected next to the params file)");
    m.preprocess = PreprocessArtifacts::from_json(read_json_file(pre_path.string(), "preprocess file"));
    return m;
}

Evaluation evaluate_manifest(const LoadedModel& m, const std::string& manifest_path) {
    Dataset ds = load_dataset(manifest_path);
    std::vector<Sample> transformed;
    transformed.reserve(ds.samples.size());
    for (const auto& s : ds.samples) transformed.push_back(m.preprocess.transform(s));
    return evaluate(transformed, m.params, m.cfg,
                    {{"model", m.cfg.to_json()}, {"manifest", manifest_path}}, m.cfg.init_seed,
                    -1);
}

}  // namespace

int run_eval(const std::string& params_path, const std::string& manifest_path,
             const std::string& out_path, std::ostream& out, std::ostream& err) {
    LoadedModel m;
    try {
        m = load_model_artifacts(params_path);
        if (!fs::exists(manifest_path))
            throw std::runtime_error("manifest not found: " + manifest_path);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    try {
        Evaluation ev = evaluate_manifest(m, manifest_path);
        const json report = ev.report.to_json();
        if (out_path.empty()) {
            out << report.dump(2) << "\n";
        } else {
            write_json(out_path, report);
            out << out_path << "\n";
        }
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

int run_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& out_override, long seed_override, std::ostream& out,
               std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_run_config(config_path, overrides, out_override, seed_override);
        cfg.validate();
        if (cfg.ablation_given && cfg.ablation.empty())
            throw std::runtime_error("config: ablation list is empty, nothing to run");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    try {
        Dataset ds = load_dataset(cfg.manifest);
        const std::vector<AblationSpec> rows =
            cfg.ablation_given ? cfg.ablation : default_ablation_rows();
        AblationResult res = ablation_suite(ds, rows, cfg.kfolds, cfg.train_ratio, cfg.model,
                                            cfg.train, cfg.preprocess, cfg.seed);

        const json cfg_json = cfg.to_json();
        const fs::path run_dir = fs::path(cfg.out_dir) / ("ablate-" + config_hash(cfg_json));
        fs::create_directories(run_dir);
        write_json((run_dir / "config.json").string(), cfg_json);
        write_ablation_csv((run_dir / "ablation.csv").string(), res.table);

        json rows_j = json::array();
        for (size_t i = 0; i < res.table.size(); ++i) {
            const auto& r = res.table[i];
            rows_j.push_back({{"config_id", r.config_id},
                              {"modalities", r.modalities},
                              {"ca", r.cross_attention},
                              {"acc_mean", r.acc_mean},
                              {"acc_std", r.acc_std},
                              {"recall", r.recall},
                              {"f1", r.f1},
                              {"params", r.parameter_count},
                              {"aggregate", res.runs[i].aggregate_json()}});
        }
        write_json((run_dir / "ablation.json").string(),
                   {{"schema", "camf-ablation/1"}, {"rows", rows_j}});
        out << run_dir.string() << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

int run_dump_features(const std::string& params_path, const std::string& manifest_path,
                      const std::string& out_path, std::ostream& out, std::ostream& err) {
    LoadedModel m;
    try {
        m = load_model_artifacts(params_path);
        if (!fs::exists(manifest_path))
            throw std::runtime_error("manifest not found: " + manifest_path);
        if (out_path.empty()) throw std::runtime_error("--out is required for dump-features");
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    try {
        Evaluation ev = evaluate_manifest(m, manifest_path);
        write_features_csv(out_path, ev.ids, ev.labels, ev.penultimate);
        out << out_path << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

}  // namespace camf::cli
