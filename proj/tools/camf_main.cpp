#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "camf/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"camf: cross-attention multimodal fusion toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
    camf::SynthSpec spec;
    std::string synth_out = "synth_data";
    size_t per_class = 100;
    std::string imbalanced;
    bool uninformative = false;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--classes", spec.num_classes, "number of classes");
    synth->add_option("--per-class", per_class, "samples per class (balanced)");
    synth->add_option("--imbalanced", imbalanced, "comma-separated per-class counts");
    synth->add_option("--eye-dim", spec.eye_dim, "eye feature width");
    synth->add_option("--ppg-dim", spec.ppg_dim, "ppg feature width");
    synth->add_option("--sem-dim", spec.semantic_dim, "semantic feature width");
    synth->add_option("--eye-len", spec.eye_len, "eye sequence length");
    synth->add_option("--ppg-len", spec.ppg_len, "ppg sequence length");
    synth->add_option("--sem-len", spec.semantic_len, "semantic sequence length");
    synth->add_option("--separation", spec.separation, "class separation scale s");
    synth->add_flag("--semantic-uninformative", uninformative,
                    "draw semantic blocks with a class-independent mean");
    synth->add_option("--seed", spec.seed, "generator seed");

    // shared train/ablate options
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_override;
    long seed_override = -1;

    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON")->required();
        cmd->add_option("--override", overrides, "key=value (dotted paths into the config)");
        cmd->add_option("--out", out_override, "output directory (overrides config out_dir)");
        cmd->add_option("--seed", seed_override, "seed (overrides config seed)");
    };
    auto* train = app.add_subcommand("train", "run the cross-validation training protocol");
    add_config_opts(train);
    auto* ablate = app.add_subcommand("ablate", "run the ablation table");
    add_config_opts(ablate);

    // eval / dump-features
    std::string params_path, manifest_path, eval_out;
    auto add_eval_opts = [&](CLI::App* cmd) {
        cmd->add_option("--params", params_path, "serialized model params.json")->required();
        cmd->add_option("--manifest", manifest_path, "dataset manifest.json")->required();
        cmd->add_option("--out", eval_out, "output path");
    };
    auto* eval = app.add_subcommand("eval", "inference-only evaluation of saved parameters");
    add_eval_opts(eval);
    auto* dump = app.add_subcommand("dump-features", "write penultimate-layer features as CSV");
    add_eval_opts(dump);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : camf::cli::kUsageError;
    }

    if (synth->parsed()) {
        if (!imbalanced.empty()) {
            spec.class_counts.clear();
            size_t pos = 0;
            while (pos <= imbalanced.size()) {
                size_t next = imbalanced.find(',', pos);
                spec.class_counts.push_back(
                    std::stoul(imbalanced.substr(pos, next - pos)));
                if (next == std::string::npos) break;
                pos = next + 1;
            }
            spec.num_classes = static_cast<int>(spec.class_counts.size());
        } else {
            spec.class_counts.assign(spec.num_classes, per_class);
        }
        spec.semantic_informative = !uninformative;
        return camf::cli::run_synth(spec, synth_out, std::cout, std::cerr);
    }
    if (train->parsed())
        return camf::cli::run_train(config_path, overrides, out_override, seed_override,
                                    std::cout, std::cerr);
    if (ablate->parsed())
        return camf::cli::run_ablate(config_path, overrides, out_override, seed_override,
                                     std::cout, std::cerr);
    if (eval->parsed())
        return camf::cli::run_eval(params_path, manifest_path, eval_out, std::cout, std::cerr);
    if (dump->parsed())
        return camf::cli::run_dump_features(params_path, manifest_path, eval_out, std::cout,
                                            std::cerr);
    return camf::cli::kUsageError;
}
