#include "camf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "camf/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camf {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_csv(const fs::path& path, const Matrix& m, char col_prefix) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (size_t c = 0; c < m.cols; ++c) out << (c ? "," : "") << col_prefix << c;
    out << "\n";
    for (size_t r = 0; r < m.rows; ++r) {
        for (size_t c = 0; c < m.cols; ++c)
            out << (c ? "," : "") << format_double(m.at(r, c));
        out << "\n";
    }
}

Matrix read_csv(const fs::path& path, const std::string& ctx) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(ctx + ": file not found: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(ctx + ": empty file: " + path.string());
    const size_t cols = static_cast<size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        size_t pos = 0, col = 0;
        while (true) {
            size_t next = line.find(',', pos);
            std::string_view tok(line.data() + pos,
                                 (next == std::string::npos ? line.size() : next) - pos);
            double v = 0.0;
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
                throw std::runtime_error(ctx + ": unparseable value '" + std::string(tok) +
                                         "' at row " + std::to_string(rows + 1) + " in " +
                                         path.string());
            if (!std::isfinite(v))
                throw std::runtime_error(ctx + ": non-finite value at row " +
                                         std::to_string(rows + 1) + ", col " +
                                         std::to_string(col) + " in " + path.string());
            values.push_back(v);
            ++col;
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (col != cols)
            throw std::runtime_error(ctx + ": row " + std::to_string(rows + 1) + " has " +
                                     std::to_string(col) + " values, header has " +
                                     std::to_string(cols) + " in " + path.string());
        ++rows;
    }
    if (rows == 0) throw std::runtime_error(ctx + ": no data rows in " + path.string());
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.values = std::move(values);
    return m;
}

void check_dim(const Matrix& m, size_t want, const std::string& ctx, const std::string& path) {
    if (m.cols != want)
        throw std::runtime_error(ctx + ": dim mismatch, manifest declares " + std::to_string(want) +
                                 " features but " + path + " has " + std::to_string(m.cols));
}

std::unordered_map<int, std::vector<std::string>> ids_by_class(
    const Dataset& ds, const std::vector<std::string>* restrict_to = nullptr) {
    std::set<std::string> keep;
    if (restrict_to) keep.insert(restrict_to->begin(), restrict_to->end());
    std::unordered_map<int, std::vector<std::string>> groups;
    for (const auto& s : ds.samples) {
        if (restrict_to && !keep.count(s.id)) continue;
        groups[s.label].push_back(s.id);
    }
    return groups;
}

}  // namespace

std::vector<size_t> Dataset::class_counts() const {
    std::vector<size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) ++counts[s.label];
    return counts;
}

const Sample& Dataset::by_id(const std::string& id) const {
    auto it = std::lower_bound(samples.begin(), samples.end(), id,
                               [](const Sample& s, const std::string& v) { return s.id < v; });
    if (it == samples.end() || it->id != id)
        throw std::runtime_error("dataset: unknown sample id '" + id + "'");
    return *it;
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
    Dataset out;
    out.class_names = class_names;
    out.eye_dim = eye_dim;
    out.ppg_dim = ppg_dim;
    out.semantic_dim = semantic_dim;
    std::set<std::string> keep(ids.begin(), ids.end());
    out.samples.reserve(keep.size());
    for (const auto& s : samples)
        if (keep.count(s.id)) out.samples.push_back(s);
    return out;
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("load_dataset: cannot open manifest " + manifest_path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: bad JSON in " + manifest_path + ": " + e.what());
    }
    const fs::path base = fs::path(manifest_path).parent_path();

    Dataset ds;
    try {
        ds.class_names = j.at("class_names").get<std::vector<std::string>>();
        const auto& dims = j.at("feature_dims");
        ds.eye_dim = dims.at("eye").get<size_t>();
        ds.ppg_dim = dims.at("ppg").get<size_t>();
        ds.semantic_dim = dims.at("semantic").get<size_t>();
    } catch (const json::exception& e) {
        throw std::runtime_error("load_dataset: manifest schema error: " + std::string(e.what()));
    }
    if (ds.class_names.size() < 2)
        throw std::runtime_error("load_dataset: need at least 2 classes, manifest has " +
                                 std::to_string(ds.class_names.size()));

    std::map<std::string, std::string> semantic_table =
        j.value("semantic_table", std::map<std::string, std::string>{});
    std::map<std::string, Matrix> semantic_cache;

    if (!j.contains("samples") || !j["samples"].is_array())
        throw std::runtime_error("load_dataset: manifest has no samples array");

    const int K = ds.num_classes();
    for (const auto& sj : j["samples"]) {
        Sample s;
        try {
            s.id = sj.at("id").get<std::string>();
            s.label = sj.at("label").get<int>();
            s.video_id = sj.at("semantic_ref").get<std::string>();
        } catch (const json::exception& e) {
            throw std::runtime_error("load_dataset: sample entry schema error: " +
                                     std::string(e.what()));
        }
        const std::string ctx = "load_dataset: sample '" + s.id + "'";
        if (s.label < 0 || s.label >= K)
            throw std::runtime_error(ctx + ": unknown label " + std::to_string(s.label) +
                                     " (have " + std::to_string(K) + " classes)");
        const std::string eye_path = sj.at("eye_path").get<std::string>();
        const std::string ppg_path = sj.at("ppg_path").get<std::string>();
        s.eye = read_csv(base / eye_path, ctx);
        check_dim(s.eye, ds.eye_dim, ctx, eye_path);
        s.ppg = read_csv(base / ppg_path, ctx);
        check_dim(s.ppg, ds.ppg_dim, ctx, ppg_path);

        auto ref = semantic_table.find(s.video_id);
        if (ref == semantic_table.end())
            throw std::runtime_error(ctx + ": semantic_ref '" + s.video_id +
                                     "' not in semantic_table");
        auto cached = semantic_cache.find(s.video_id);
        if (cached == semantic_cache.end()) {
            Matrix m = read_csv(base / ref->second, ctx);
            check_dim(m, ds.semantic_dim, ctx, ref->second);
            cached = semantic_cache.emplace(s.video_id, std::move(m)).first;
        }
        s.semantic = cached->second;
        ds.samples.push_back(std::move(s));
    }

    std::sort(ds.samples.begin(), ds.samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    for (size_t i = 1; i < ds.samples.size(); ++i)
        if (ds.samples[i].id == ds.samples[i - 1].id)
            throw std::runtime_error("load_dataset: duplicate sample id '" + ds.samples[i].id +
                                     "'");
    return ds;
}

SplitPlan split_train_test(const Dataset& ds, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split_train_test: ratio must be in (0,1), got " +
                                    std::to_string(ratio));
    auto groups = ids_by_class(ds);
    for (int c = 0; c < ds.num_classes(); ++c)
        if (!groups.count(c) || groups[c].empty())
            throw std::runtime_error("split_train_test: class '" + ds.class_names[c] +
                                     "' has no samples");
    SplitPlan plan;
    plan.seed = seed;
    Rng rng(mix_seed(seed, 0xA11CEull));
    for (int c = 0; c < ds.num_classes(); ++c) {
        auto ids = groups[c];
        rng.shuffle(ids);
        const size_t n_train =
            static_cast<size_t>(std::llround(ratio * static_cast<double>(ids.size())));
        for (size_t i = 0; i < ids.size(); ++i)
            (i < n_train ? plan.train_ids : plan.test_ids).push_back(ids[i]);
    }
    std::sort(plan.train_ids.begin(), plan.train_ids.end());
    std::sort(plan.test_ids.begin(), plan.test_ids.end());
    return plan;
}

std::vector<FoldSplit> kfold(const Dataset& ds, const std::vector<std::string>& train_ids, int k,
                             uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2, got " + std::to_string(k));
    auto groups = ids_by_class(ds, &train_ids);
    for (int c = 0; c < ds.num_classes(); ++c) {
        const size_t n = groups.count(c) ? groups[c].size() : 0;
        if (n < static_cast<size_t>(k))
            throw std::runtime_error("kfold: class '" + ds.class_names[c] + "' has " +
                                     std::to_string(n) + " training samples, need at least " +
                                     std::to_string(k));
    }
    Rng rng(mix_seed(seed, 0xF01D5ull));
    std::vector<FoldSplit> folds(k);
    for (int c = 0; c < ds.num_classes(); ++c) {
        auto ids = groups[c];
        rng.shuffle(ids);
        for (size_t i = 0; i < ids.size(); ++i) folds[i % k].val_ids.push_back(ids[i]);
    }
    for (auto& f : folds) {
        std::sort(f.val_ids.begin(), f.val_ids.end());
        std::set<std::string> val(f.val_ids.begin(), f.val_ids.end());
        for (const auto& id : train_ids)
            if (!val.count(id)) f.train_ids.push_back(id);
        std::sort(f.train_ids.begin(), f.train_ids.end());
    }
    return folds;
}

SynthSpec SynthSpec::uniform(int k, size_t per_class) {
    SynthSpec spec;
    spec.num_classes = k;
    spec.class_counts.assign(k, per_class);
    return spec;
}

Dataset synthesize_dataset(const SynthSpec& spec, const std::string& out_dir) {
    if (spec.num_classes < 2)
        throw std::invalid_argument("synthesize_dataset: need at least 2 classes");
    if (spec.class_counts.size() != static_cast<size_t>(spec.num_classes))
        throw std::invalid_argument("synthesize_dataset: class_counts size " +
                                    std::to_string(spec.class_counts.size()) + " != K " +
                                    std::to_string(spec.num_classes));
    for (size_t n : spec.class_counts)
        if (n == 0) throw std::invalid_argument("synthesize_dataset: empty class in class_counts");
    if (spec.eye_dim == 0 || spec.ppg_dim == 0 || spec.semantic_dim == 0 || spec.eye_len == 0 ||
        spec.ppg_len == 0 || spec.semantic_len == 0)
        throw std::invalid_argument("synthesize_dataset: dims and lengths must be positive");

    std::vector<std::string> names = spec.class_names;
    if (names.empty()) {
        if (spec.num_classes == 4)
            names = {"Interest", "Boredom", "Happiness", "Confusion"};
        else
            for (int c = 0; c < spec.num_classes; ++c) names.push_back("class" + std::to_string(c));
    }
    if (names.size() != static_cast<size_t>(spec.num_classes))
        throw std::invalid_argument("synthesize_dataset: class_names size mismatch");

    const fs::path root(out_dir);
    fs::create_directories(root / "data");
    fs::create_directories(root / "semantic");

    // Class mean patterns: one random unit direction in the whole T*D block
    // space per (class, modality), so the class signature varies over time.
    // When the semantic block is uninformative all classes share one pattern.
    auto unit_direction = [](Rng& r, size_t n) {
        std::vector<double> v(n);
        double norm = 0.0;
        for (auto& x : v) {
            x = r.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm > 0 ? norm : 1.0;
        return v;
    };
    Rng dir_rng(mix_seed(spec.seed, 0xD12Cull));
    std::vector<std::vector<double>> eye_mean, ppg_mean, sem_mean;
    for (int c = 0; c < spec.num_classes; ++c) {
        eye_mean.push_back(unit_direction(dir_rng, spec.eye_len * spec.eye_dim));
        ppg_mean.push_back(unit_direction(dir_rng, spec.ppg_len * spec.ppg_dim));
        sem_mean.push_back(unit_direction(dir_rng, spec.semantic_len * spec.semantic_dim));
    }
    if (!spec.semantic_informative)
        for (int c = 1; c < spec.num_classes; ++c) sem_mean[c] = sem_mean[0];

    // Correlation channel: one shared pattern per modality, scaled per sample
    // by a symmetric latent factor whose sign pairing across modalities is
    // class-specific. Within a modality the factor is symmetric noise; only
    // the joint (cross-modal) second moment carries the class.
    const std::vector<double> eye_link = unit_direction(dir_rng, spec.eye_len * spec.eye_dim);
    const std::vector<double> ppg_link = unit_direction(dir_rng, spec.ppg_len * spec.ppg_dim);
    const std::vector<double> sem_link =
        unit_direction(dir_rng, spec.semantic_len * spec.semantic_dim);
    auto link_sign = [&](int c, int modality) {
        // sign triples (+,+,+), (+,+,-), (+,-,+), (-,+,+), cycling beyond 4
        static const int table[4][3] = {{1, 1, 1}, {1, 1, -1}, {1, -1, 1}, {-1, 1, 1}};
        return static_cast<double>(table[c % 4][modality]);
    };

    auto draw_block = [&](Rng& r, size_t t_len, size_t d, const std::vector<double>& mean,
                          const std::vector<double>& link, double link_scale) {
        Matrix m(t_len, d);
        for (size_t t = 0; t < t_len; ++t)
            for (size_t i = 0; i < d; ++i)
                m.at(t, i) = spec.separation * mean[t * d + i] + link_scale * link[t * d + i] +
                             r.normal();
        return m;
    };

    json samples = json::array();
    json semantic_table = json::object();
    Rng data_rng(mix_seed(spec.seed, 0xDA7Aull));
    for (int c = 0; c < spec.num_classes; ++c) {
        for (size_t i = 0; i < spec.class_counts[c]; ++i) {
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "c%d_s%05zu", c, i);
            const std::string id(idbuf);
            const std::string video = "v_" + id;
            const double factor = spec.interaction > 0.0 ? data_rng.normal() : 0.0;
            const double amp = spec.separation * spec.interaction * factor;
            const double sem_amp = spec.semantic_informative ? amp * link_sign(c, 2) : 0.0;
            Matrix eye = draw_block(data_rng, spec.eye_len, spec.eye_dim, eye_mean[c], eye_link,
                                    amp * link_sign(c, 0));
            Matrix ppg = draw_block(data_rng, spec.ppg_len, spec.ppg_dim, ppg_mean[c], ppg_link,
                                    amp * link_sign(c, 1));
            Matrix sem = draw_block(data_rng, spec.semantic_len, spec.semantic_dim, sem_mean[c],
                                    sem_link, sem_amp);
            const std::string eye_path = "data/" + id + "_eye.csv";
            const std::string ppg_path = "data/" + id + "_ppg.csv";
            const std::string sem_path = "semantic/" + video + ".csv";
            write_csv(root / eye_path, eye, 'e');
            write_csv(root / ppg_path, ppg, 'p');
            write_csv(root / sem_path, sem, 's');
            semantic_table[video] = sem_path;
            samples.push_back({{"id", id},
                               {"label", c},
                               {"eye_path", eye_path},
                               {"ppg_path", ppg_path},
                               {"semantic_ref", video}});
        }
    }

    json manifest = {
        {"class_names", names},
        {"feature_dims",
         {{"eye", spec.eye_dim}, {"ppg", spec.ppg_dim}, {"semantic", spec.semantic_dim}}},
        {"semantic_table", semantic_table},
        {"samples", samples}};
    {
        std::ofstream out(root / "manifest.json");
        if (!out)
            throw std::runtime_error("synthesize_dataset: cannot write manifest under " + out_dir);
        out << manifest.dump(2) << "\n";
    }
    {
        std::ofstream out(root / "README.md");
        out << "# Synthetic multimodal dataset\n\n"
            << "Generated by `camf synth`. Gaussian class blobs per modality.\n\n"
            << "- classes: " << spec.num_classes << " (";
        for (int c = 0; c < spec.num_classes; ++c) out << (c ? ", " : "") << names[c];
        out << ")\n- counts per class: ";
        for (size_t i = 0; i < spec.class_counts.size(); ++i)
            out << (i ? ", " : "") << spec.class_counts[i];
        out << "\n- feature dims (eye, ppg, semantic): " << spec.eye_dim << ", " << spec.ppg_dim
            << ", " << spec.semantic_dim << "\n- sequence lengths: " << spec.eye_len << ", "
            << spec.ppg_len << ", " << spec.semantic_len
            << "\n- class separation s: " << format_double(spec.separation)
            << "\n- cross-modal interaction weight: " << format_double(spec.interaction)
            << "\n- semantic informative: " << (spec.semantic_informative ? "true" : "false")
            << "\n- seed: " << spec.seed << "\n";
    }
    return load_dataset((root / "manifest.json").string());
}

}  // namespace camf
