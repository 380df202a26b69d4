#include "camf/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

using nlohmann::json;

namespace camf {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

size_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), size_t{0});
}

size_t ConfusionMatrix::trace() const {
    size_t t = 0;
    for (int c = 0; c < num_classes; ++c) t += at(c, c);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("confusion: " + std::to_string(preds.size()) +
                                    " predictions for " + std::to_string(labels.size()) +
                                    " labels");
    ConfusionMatrix cm;
    cm.num_classes = k;
    cm.counts.assign(static_cast<size_t>(k) * k, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k || preds[i] < 0 || preds[i] >= k)
            throw std::invalid_argument("confusion: class index out of range at sample " +
                                        std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    return cm;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
    const size_t total = cm.total();
    if (total == 0) throw std::invalid_argument("macro_metrics: empty confusion matrix");
    const int k = cm.num_classes;
    MacroMetrics m;
    m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    m.per_class.resize(k);
    for (int c = 0; c < k; ++c) {
        size_t row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        ClassMetrics& pc = m.per_class[c];
        pc.present = row > 0;
        if (!pc.present) m.has_empty_class = true;
        pc.recall = row > 0 ? static_cast<double>(cm.at(c, c)) / static_cast<double>(row) : 0.0;
        pc.precision = col > 0 ? static_cast<double>(cm.at(c, c)) / static_cast<double>(col) : 0.0;
        pc.f1 = (pc.precision + pc.recall) > 0.0
                    ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                    : 0.0;
        m.macro_recall += pc.recall / k;
        m.macro_precision += pc.precision / k;
        m.macro_f1 += pc.f1 / k;
    }
    return m;
}

std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> preds(scores.rows, 0);
    for (size_t i = 0; i < scores.rows; ++i) {
        size_t best = 0;
        for (size_t j = 1; j < scores.cols; ++j)
            if (scores.at(i, j) > scores.at(i, best)) best = j;
        preds[i] = static_cast<int>(best);
    }
    return preds;
}

std::vector<RocCurve> roc_ovr(const Matrix& scores, const std::vector<int>& labels) {
    if (labels.size() != scores.rows)
        throw std::invalid_argument("roc_ovr: label count does not match score rows");
    const int k = static_cast<int>(scores.cols);
    std::vector<RocCurve> curves;
    curves.reserve(k);
    for (int c = 0; c < k; ++c) {
        RocCurve curve;
        curve.class_index = c;
        size_t pos = 0;
        for (int l : labels) pos += l == c;
        const size_t neg = labels.size() - pos;
        if (pos == 0 || neg == 0) {
            curve.degenerate = true;
            curves.push_back(std::move(curve));
            continue;
        }
        std::vector<std::pair<double, int>> ranked(labels.size());
        for (size_t i = 0; i < labels.size(); ++i)
            ranked[i] = {scores.at(i, c), labels[i] == c ? 1 : 0};
        std::sort(ranked.begin(), ranked.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });

        curve.points.emplace_back(0.0, 0.0);
        size_t tp = 0, fp = 0, i = 0;
        double auc = 0.0;
        while (i < ranked.size()) {
            // advance over the whole tie block at this threshold
            const double threshold = ranked[i].first;
            while (i < ranked.size() && ranked[i].first == threshold) {
                tp += ranked[i].second;
                fp += 1 - ranked[i].second;
                ++i;
            }
            const double x = static_cast<double>(fp) / static_cast<double>(neg);
            const double y = static_cast<double>(tp) / static_cast<double>(pos);
            const auto& prev = curve.points.back();
            auc += (x - prev.first) * (y + prev.second) / 2.0;
            curve.points.emplace_back(x, y);
        }
        curve.auc = auc;
        curves.push_back(std::move(curve));
    }
    return curves;
}

json EvalReport::to_json() const {
    json per_class = json::array();
    for (const auto& pc : metrics.per_class)
        per_class.push_back({{"precision", pc.precision},
                             {"recall", pc.recall},
                             {"f1", pc.f1},
                             {"present", pc.present}});
    json cm_rows = json::array();
    for (int t = 0; t < cm.num_classes; ++t) {
        json row = json::array();
        for (int p = 0; p < cm.num_classes; ++p) row.push_back(cm.at(t, p));
        cm_rows.push_back(row);
    }
    json roc_j = json::array();
    for (const auto& r : roc) {
        json points = json::array();
        for (const auto& [x, y] : r.points) points.push_back({x, y});
        roc_j.push_back({{"class", r.class_index},
                         {"auc", r.degenerate ? json(nullptr) : json(r.auc)},
                         {"degenerate", r.degenerate},
                         {"points", points}});
    }
    return {{"schema", "camf-report/1"},
            {"accuracy", metrics.accuracy},
            {"macro_recall", metrics.macro_recall},
            {"macro_precision", metrics.macro_precision},
            {"macro_f1", metrics.macro_f1},
            {"has_empty_class", metrics.has_empty_class},
            {"per_class", per_class},
            {"confusion", cm_rows},
            {"roc", roc_j},
            {"parameter_count", parameter_count},
            {"config", config},
            {"seed", seed},
            {"fold", fold}};
}

EvalReport EvalReport::from_json(const json& j) {
    if (j.value("schema", "") != "camf-report/1")
        throw std::runtime_error("eval report: unknown schema tag");
    EvalReport r;
    r.metrics.accuracy = j.at("accuracy").get<double>();
    r.metrics.macro_recall = j.at("macro_recall").get<double>();
    r.metrics.macro_precision = j.at("macro_precision").get<double>();
    r.metrics.macro_f1 = j.at("macro_f1").get<double>();
    r.metrics.has_empty_class = j.at("has_empty_class").get<bool>();
    for (const auto& pc : j.at("per_class")) {
        ClassMetrics c;
        c.precision = pc.at("precision").get<double>();
        c.recall = pc.at("recall").get<double>();
        c.f1 = pc.at("f1").get<double>();
        c.present = pc.at("present").get<bool>();
        r.metrics.per_class.push_back(c);
    }
    const auto& cm_rows = j.at("confusion");
    r.cm.num_classes = static_cast<int>(cm_rows.size());
    for (const auto& row : cm_rows)
        for (const auto& v : row) r.cm.counts.push_back(v.get<size_t>());
    for (const auto& rj : j.at("roc")) {
        RocCurve c;
        c.class_index = rj.at("class").get<int>();
        c.degenerate = rj.at("degenerate").get<bool>();
        if (!rj.at("auc").is_null()) c.auc = rj["auc"].get<double>();
        for (const auto& pt : rj.at("points"))
            c.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
        r.roc.push_back(std::move(c));
    }
    r.parameter_count = j.at("parameter_count").get<size_t>();
    r.config = j.at("config");
    r.seed = j.at("seed").get<uint64_t>();
    r.fold = j.at("fold").get<int>();
    return r;
}

EvalReport make_report(const Matrix& scores, const std::vector<int>& labels,
                       size_t parameter_count, json config_snapshot, uint64_t seed, int fold) {
    EvalReport r;
    const int k = static_cast<int>(scores.cols);
    r.cm = confusion(argmax_rows(scores), labels, k);
    r.metrics = macro_metrics(r.cm);
    r.roc = roc_ovr(scores, labels);
    r.parameter_count = parameter_count;
    r.config = std::move(config_snapshot);
    r.seed = seed;
    r.fold = fold;
    return r;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_roc_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "class,fpr,tpr\n";
    for (const auto& curve : report.roc) {
        if (curve.degenerate) continue;
        for (const auto& [x, y] : curve.points)
            out << curve.class_index << "," << format_double(x) << "," << format_double(y) << "\n";
    }
}

void write_features_csv(const std::string& path, const std::vector<std::string>& ids,
                        const std::vector<int>& labels, const Matrix& features) {
    if (ids.size() != features.rows || labels.size() != features.rows)
        throw std::invalid_argument("write_features_csv: row count mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "id,label";
    for (size_t j = 0; j < features.cols; ++j) out << ",f" << j;
    out << "\n";
    for (size_t i = 0; i < features.rows; ++i) {
        out << ids[i] << "," << labels[i];
        for (size_t j = 0; j < features.cols; ++j) out << "," << format_double(features.at(i, j));
        out << "\n";
    }
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "config_id,modalities,ca,acc_mean,acc_std,recall,f1,params\n";
    for (const auto& r : rows) {
        out << r.config_id << "," << r.modalities << "," << (r.cross_attention ? "yes" : "no")
            << "," << format_double(r.acc_mean) << "," << format_double(r.acc_std) << ","
            << format_double(r.recall) << "," << format_double(r.f1) << "," << r.parameter_count
            << "\n";
    }
}

}  // namespace camf
