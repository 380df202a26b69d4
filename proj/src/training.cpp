#include "camf/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "camf/rng.hpp"

using nlohmann::json;

namespace camf {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (plateau_patience < 1 || early_stop_patience < 1)
        throw std::invalid_argument("train config: patience values must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
        throw std::invalid_argument("train config: plateau_factor must be in (0,1)");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || epsilon <= 0.0)
        throw std::invalid_argument("train config: bad adam parameters");
}

json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"learning_rate", learning_rate},
            {"plateau_patience", plateau_patience},
            {"plateau_factor", plateau_factor},
            {"early_stop_patience", early_stop_patience},
            {"seed", seed},
            {"beta1", beta1},
            {"beta2", beta2},
            {"epsilon", epsilon},
            {"min_improvement", min_improvement},
            {"parallel_folds", parallel_folds}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.plateau_patience = j.value("plateau_patience", cfg.plateau_patience);
    cfg.plateau_factor = j.value("plateau_factor", cfg.plateau_factor);
    cfg.early_stop_patience = j.value("early_stop_patience", cfg.early_stop_patience);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.min_improvement = j.value("min_improvement", cfg.min_improvement);
    cfg.parallel_folds = j.value("parallel_folds", cfg.parallel_folds);
    return cfg;
}

Tensor cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels,
                          const ModelParams& params, double lambda) {
    Tensor picked = pick_per_row(probs, labels);
    Tensor loss = neg(mean_all(log_clamped(picked)));
    if (lambda > 0.0) {
        for (const auto& e : params.entries())
            if (e.decay) loss = add(loss, scale(sum(mul(e.tensor, e.tensor)), lambda));
    }
    return loss;
}

AdamState AdamState::init(const ModelParams& params) {
    AdamState s;
    for (const auto& e : params.entries()) {
        s.m.emplace_back(e.tensor.size(), 0.0);
        s.v.emplace_back(e.tensor.size(), 0.0);
    }
    return s;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               double beta1, double beta2, double epsilon) {
    auto& entries = params.entries();
    if (grads.size() != entries.size() || state.m.size() != entries.size())
        throw std::invalid_argument("adam_step: gradient/state count does not match parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < entries.size(); ++i) {
        if (grads[i].shape() != entries[i].tensor.shape())
            throw std::invalid_argument("adam_step: gradient shape mismatch for '" +
                                        entries[i].name + "'");
        const auto& g = grads[i].data();
        std::vector<double> data = entries[i].tensor.data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t n = 0; n < data.size(); ++n) {
            m[n] = beta1 * m[n] + (1.0 - beta1) * g[n];
            v[n] = beta2 * v[n] + (1.0 - beta2) * g[n] * g[n];
            const double mhat = m[n] / bc1;
            const double vhat = v[n] / bc2;
            data[n] -= lr * mhat / (std::sqrt(vhat) + epsilon);
        }
        entries[i].tensor = tensor_unchecked(entries[i].tensor.shape(), std::move(data), true);
    }
}

namespace {

// Stagnation bookkeeping for plateau decay and early stopping. An improvement
// must beat the best of the previous epochs by more than min_improvement. The
// first epoch sets the baseline: the plateau counter treats it as stagnant (a
// flat run of `patience` epochs decays), the early-stop counter does not (the
// stop clock starts after a best exists).
class ProtocolTracker {
public:
    ProtocolTracker(size_t plateau_patience, double factor, size_t stop_patience, double lr,
                    double min_improvement)
        : plateau_patience_(plateau_patience),
          factor_(factor),
          stop_patience_(stop_patience),
          lr_(lr),
          min_improvement_(min_improvement) {}

    void observe(double value) {
        const bool first = !has_best_;
        improved_ = has_best_ && value < best_ - min_improvement_;
        if (first) {
            has_best_ = true;
            best_ = value;
        } else if (improved_) {
            best_ = value;
        }
        if (improved_) {
            since_improve_ = 0;
            since_decay_ = 0;
        } else {
            if (!first) ++since_improve_;
            ++since_decay_;
        }
        stop_ = since_improve_ >= stop_patience_;
        if (since_decay_ >= plateau_patience_) {
            lr_ *= factor_;
            since_decay_ = 0;
        }
    }

    double lr() const { return lr_; }
    bool improved() const { return improved_; }
    bool should_stop() const { return stop_; }

private:
    size_t plateau_patience_;
    double factor_;
    size_t stop_patience_;
    double lr_;
    double min_improvement_;
    double best_ = std::numeric_limits<double>::infinity();
    bool has_best_ = false;
    size_t since_improve_ = 0;
    size_t since_decay_ = 0;
    bool improved_ = false;
    bool stop_ = false;
};

}  // namespace

double plateau_scheduler(const std::vector<double>& history, size_t patience, double factor,
                         double lr) {
    ProtocolTracker t(patience, factor, std::numeric_limits<size_t>::max(), lr, 1e-9);
    for (double v : history) t.observe(v);
    return t.lr();
}

bool early_stop(const std::vector<double>& history, size_t patience) {
    ProtocolTracker t(std::numeric_limits<size_t>::max(), 0.1, patience, 1.0, 1e-9);
    for (double v : history) {
        t.observe(v);
        if (t.should_stop()) return true;
    }
    return false;
}

json RunRecord::to_json() const {
    json epochs_j = json::array();
    for (const auto& e : epochs)
        epochs_j.push_back({{"train_loss", e.train_loss},
                            {"train_accuracy", e.train_accuracy},
                            {"val_loss", e.val_loss},
                            {"val_accuracy", e.val_accuracy},
                            {"learning_rate", e.learning_rate}});
    return {{"epochs", epochs_j},
            {"stop_reason", stop_reason},
            {"best_epoch", best_epoch},
            {"wall_time_sec", wall_time_sec},
            {"config", config_snapshot}};
}

namespace {

struct EvalPass {
    double loss = 0.0;  // mean cross-entropy, no L2
    double accuracy = 0.0;
};

EvalPass eval_pass(const std::vector<Sample>& samples, const ModelParams& params,
                   const ModelConfig& cfg) {
    NoGradScope ng;
    EvalPass out;
    size_t hits = 0;
    for (const auto& s : samples) {
        Tensor probs = forward(s, params, cfg);
        const double p = std::max(probs.at(s.label), 1e-12);
        out.loss -= std::log(p);
        size_t best = 0;
        for (size_t k = 1; k < probs.size(); ++k)
            if (probs.at(k) > probs.at(best)) best = k;
        hits += static_cast<int>(best) == s.label;
    }
    out.loss /= static_cast<double>(samples.size());
    out.accuracy = static_cast<double>(hits) / static_cast<double>(samples.size());
    return out;
}

}  // namespace

FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& val,
              const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
    model_cfg.validate();
    train_cfg.validate();
    if (train.empty()) throw std::invalid_argument("fit: empty training set");
    if (val.empty()) throw std::invalid_argument("fit: empty validation set");

    const auto t0 = std::chrono::steady_clock::now();
    FitResult result;
    result.params = init_params(model_cfg);
    result.record.config_snapshot = {{"model", model_cfg.to_json()},
                                     {"train", train_cfg.to_json()}};
    if (train_cfg.max_epochs == 0) {
        result.record.stop_reason = "no_epochs";
        return result;
    }

    AdamState adam = AdamState::init(result.params);
    ProtocolTracker tracker(train_cfg.plateau_patience, train_cfg.plateau_factor,
                            train_cfg.early_stop_patience, train_cfg.learning_rate,
                            train_cfg.min_improvement);
    ModelParams best = result.params.snapshot();
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (size_t epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(train_cfg.seed + epoch, 0x5EEDull));
        shuffle_rng.shuffle(order);
        const double lr = tracker.lr();

        double loss_sum = 0.0;
        bool diverged = false;
        for (size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            const size_t end = std::min(order.size(), start + train_cfg.batch_size);
            std::vector<Tensor> probs;
            std::vector<int> labels;
            probs.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                probs.push_back(forward(train[order[i]], result.params, model_cfg));
                labels.push_back(train[order[i]].label);
            }
            Tensor loss =
                cross_entropy_loss(stack_rows(probs), labels, result.params, model_cfg.l2);
            if (!std::isfinite(loss.value())) {
                diverged = true;
                break;
            }
            backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(result.params.entries().size());
            for (const auto& e : result.params.entries()) grads.push_back(e.tensor.grad());
            adam_step(result.params, grads, adam, lr, train_cfg.beta1, train_cfg.beta2,
                      train_cfg.epsilon);
            loss_sum += loss.value() * static_cast<double>(end - start);
        }
        if (diverged) {
            result.record.stop_reason = "diverged";
            break;
        }

        EvalPass train_eval = eval_pass(train, result.params, model_cfg);
        EvalPass val_eval = eval_pass(val, result.params, model_cfg);
        result.record.epochs.push_back({loss_sum / static_cast<double>(train.size()),
                                        train_eval.accuracy, val_eval.loss, val_eval.accuracy,
                                        lr});

        if (val_eval.loss < best_val) {
            best_val = val_eval.loss;
            best = result.params.snapshot();
            result.record.best_epoch = epoch;
        }
        tracker.observe(val_eval.loss);
        if (tracker.should_stop()) {
            result.record.stop_reason = "early_stop";
            break;
        }
    }
    if (result.record.stop_reason.empty()) result.record.stop_reason = "max_epochs";

    result.params = std::move(best);
    result.record.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

Evaluation evaluate(const std::vector<Sample>& samples, const ModelParams& params,
                    const ModelConfig& cfg, json config_snapshot, uint64_t seed, int fold) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
    NoGradScope ng;
    Evaluation ev;
    const size_t k = static_cast<size_t>(cfg.num_classes);
    ev.scores = Matrix(samples.size(), k);
    for (size_t i = 0; i < samples.size(); ++i) {
        Tensor pen;
        Tensor probs = forward(samples[i], params, cfg, &pen);
        if (i == 0) ev.penultimate = Matrix(samples.size(), pen.size());
        for (size_t j = 0; j < k; ++j) ev.scores.at(i, j) = probs.at(j);
        for (size_t j = 0; j < pen.size(); ++j) ev.penultimate.at(i, j) = pen.at(j);
        ev.ids.push_back(samples[i].id);
        ev.labels.push_back(samples[i].label);
    }
    ev.report = make_report(ev.scores, ev.labels, params.parameter_count(),
                            std::move(config_snapshot), seed, fold);
    return ev;
}

namespace {

std::vector<Sample> transform_all(const std::vector<Sample>& in,
                                  const PreprocessArtifacts& artifacts) {
    std::vector<Sample> out;
    out.reserve(in.size());
    for (const auto& s : in) out.push_back(artifacts.transform(s));
    return out;
}

FoldResult run_fold(const Dataset& ds, const FoldSplit& split,
                    const std::vector<std::string>& test_ids, int fold_index,
                    const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const PreprocessConfig& pre_cfg, uint64_t seed) {
    FoldResult fr;
    fr.fold = fold_index;

    const std::vector<Sample> raw_train = ds.subset(split.train_ids).samples;
    const std::vector<Sample> raw_val = ds.subset(split.val_ids).samples;
    const std::vector<Sample> raw_test = ds.subset(test_ids).samples;

    fr.preprocess = fit_preprocess(raw_train, pre_cfg);
    std::vector<Sample> train = transform_all(raw_train, fr.preprocess);
    const std::vector<Sample> val = transform_all(raw_val, fr.preprocess);
    const std::vector<Sample> test = transform_all(raw_test, fr.preprocess);

    if (pre_cfg.adasyn_enabled) {
        const FlattenLayout& layout = fr.preprocess.layout;
        Matrix flat(train.size(), layout.total());
        std::vector<int> labels(train.size());
        for (size_t i = 0; i < train.size(); ++i) {
            auto row = layout.flatten(train[i]);
            std::copy(row.begin(), row.end(), flat.values.begin() + i * flat.cols);
            labels[i] = train[i].label;
        }
        AdasynConfig acfg;
        acfg.k = pre_cfg.adasyn_k;
        acfg.beta = pre_cfg.adasyn_beta;
        acfg.seed = mix_seed(seed, 0xFA1Dull + fold_index);
        AdasynResult res = adasyn(flat, labels, ds.num_classes(), acfg);
        fr.resample = res.report;
        for (size_t i = train.size(); i < res.X.rows; ++i) {
            Sample syn;
            syn.id = "syn_f" + std::to_string(fold_index) + "_" + std::to_string(i);
            syn.label = res.y[i];
            syn.video_id = syn.id;
            layout.unflatten(res.X.row_ptr(i), syn);
            train.push_back(std::move(syn));
        }
    }

    ModelConfig cfg = model_cfg;
    cfg.eye_dim = fr.preprocess.layout.eye_dim;
    cfg.ppg_dim = fr.preprocess.layout.ppg_dim;
    cfg.semantic_dim = fr.preprocess.layout.semantic_dim;
    cfg.num_classes = ds.num_classes();
    cfg.init_seed = model_cfg.init_seed + static_cast<uint64_t>(fold_index);

    FitResult fitted = fit(train, val, cfg, train_cfg);
    fr.record = std::move(fitted.record);
    fr.params = std::move(fitted.params);

    json snapshot = {{"model", cfg.to_json()},
                     {"train", train_cfg.to_json()},
                     {"preprocess", pre_cfg.to_json()},
                     {"fold", fold_index}};
    fr.val_eval = evaluate(val, fr.params, cfg, snapshot, seed, fold_index);
    fr.test_eval = evaluate(test, fr.params, cfg, snapshot, seed, fold_index);
    return fr;
}

}  // namespace

json CvResult::aggregate_json() const {
    json fold_acc = json::array();
    for (const auto& f : folds) fold_acc.push_back(f.test_eval.report.metrics.accuracy);
    return {{"schema", "camf-aggregate/1"},
            {"folds", folds.size()},
            {"test_accuracy_mean", test_acc_mean},
            {"test_accuracy_std", test_acc_std},
            {"test_accuracy_per_fold", fold_acc},
            {"test_macro_recall_mean", test_recall_mean},
            {"test_macro_f1_mean", test_f1_mean},
            {"parameter_count", parameter_count}};
}

CvResult run_cv(const Dataset& ds, int k, double train_ratio, const ModelConfig& model_cfg,
                const TrainConfig& train_cfg, const PreprocessConfig& pre_cfg, uint64_t seed) {
    CvResult result;
    result.plan = split_train_test(ds, train_ratio, seed);
    result.plan.folds = kfold(ds, result.plan.train_ids, k, seed);

    const auto& folds = result.plan.folds;
    result.folds.resize(folds.size());
    if (train_cfg.parallel_folds && folds.size() > 1) {
        std::vector<std::future<FoldResult>> futures;
        for (size_t i = 0; i < folds.size(); ++i)
            futures.push_back(std::async(std::launch::async, [&, i] {
                return run_fold(ds, folds[i], result.plan.test_ids, static_cast<int>(i), model_cfg,
                                train_cfg, pre_cfg, seed);
            }));
        for (size_t i = 0; i < futures.size(); ++i) result.folds[i] = futures[i].get();
    } else {
        for (size_t i = 0; i < folds.size(); ++i)
            result.folds[i] = run_fold(ds, folds[i], result.plan.test_ids, static_cast<int>(i),
                                       model_cfg, train_cfg, pre_cfg, seed);
    }

    double mean = 0.0;
    for (const auto& f : result.folds) {
        mean += f.test_eval.report.metrics.accuracy;
        result.test_recall_mean += f.test_eval.report.metrics.macro_recall;
        result.test_f1_mean += f.test_eval.report.metrics.macro_f1;
    }
    const double n = static_cast<double>(result.folds.size());
    mean /= n;
    result.test_recall_mean /= n;
    result.test_f1_mean /= n;
    double var = 0.0;
    for (const auto& f : result.folds) {
        const double d = f.test_eval.report.metrics.accuracy - mean;
        var += d * d;
    }
    result.test_acc_mean = mean;
    result.test_acc_std = std::sqrt(var / n);
    result.parameter_count = result.folds.empty() ? 0 : result.folds[0].params.parameter_count();
    return result;
}

std::vector<AblationSpec> default_ablation_rows() {
    return {
        {"I", {true, false, false}, false, ""},
        {"II", {false, true, false}, false, ""},
        {"III", {true, true, false}, true, ""},
        {"IV", {false, true, true}, true, ""},
        {"V", {true, false, true}, true, ""},
        {"VI", {true, true, true}, false, ""},
        {"VII", {true, true, true}, true, ""},
    };
}

AblationResult ablation_suite(const Dataset& ds, const std::vector<AblationSpec>& rows, int k,
                              double train_ratio, const ModelConfig& base_cfg,
                              const TrainConfig& train_cfg, const PreprocessConfig& pre_cfg,
                              uint64_t seed) {
    if (rows.empty()) throw std::invalid_argument("ablation_suite: nothing to run");
    AblationResult result;
    for (const auto& row : rows) {
        ModelConfig cfg = base_cfg;
        cfg.modalities = row.modalities;
        cfg.cross_attention = row.cross_attention;
        Dataset alt;
        const Dataset* data = &ds;
        if (!row.manifest.empty()) {
            alt = load_dataset(row.manifest);
            data = &alt;
        }
        PreprocessConfig pc = pre_cfg;
        if (!row.modalities.semantic) pc.pca_dim = 0;  // no semantic path to reduce
        CvResult cv = run_cv(*data, k, train_ratio, cfg, train_cfg, pc, seed);
        AblationRow out;
        out.config_id = row.id;
        out.modalities = row.modalities.str();
        out.cross_attention = row.cross_attention;
        out.acc_mean = cv.test_acc_mean;
        out.acc_std = cv.test_acc_std;
        out.recall = cv.test_recall_mean;
        out.f1 = cv.test_f1_mean;
        out.parameter_count = cv.parameter_count;
        result.table.push_back(out);
        result.runs.push_back(std::move(cv));
    }
    return result;
}

}  // namespace camf
