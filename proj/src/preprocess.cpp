#include "camf/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "camf/rng.hpp"

using nlohmann::json;

namespace camf {

namespace {

json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"values", m.values}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m;
    m.rows = j.at("rows").get<size_t>();
    m.cols = j.at("cols").get<size_t>();
    m.values = j.at("values").get<std::vector<double>>();
    if (m.values.size() != m.rows * m.cols)
        throw std::runtime_error("matrix json: value count does not match rows*cols");
    return m;
}

}  // namespace

// ---- Standardizer ----

Standardizer Standardizer::fit(const Matrix& X) {
    if (X.rows < 2)
        throw std::invalid_argument("standardizer: need at least 2 rows, got " +
                                    std::to_string(X.rows));
    Standardizer s;
    s.mean.assign(X.cols, 0.0);
    s.std_dev.assign(X.cols, 0.0);
    for (size_t j = 0; j < X.cols; ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < X.rows; ++i) acc += X.at(i, j);
        s.mean[j] = acc / static_cast<double>(X.rows);
        double m2 = 0.0;
        for (size_t i = 0; i < X.rows; ++i) {
            const double d = X.at(i, j) - s.mean[j];
            m2 += d * d;
        }
        s.std_dev[j] = std::max(std::sqrt(m2 / static_cast<double>(X.rows)), kStdFloor);
    }
    return s;
}

Matrix Standardizer::apply(const Matrix& X) const {
    if (X.cols != mean.size())
        throw std::invalid_argument("standardizer: fitted on " + std::to_string(mean.size()) +
                                    " columns, got " + std::to_string(X.cols));
    Matrix out(X.rows, X.cols);
    for (size_t i = 0; i < X.rows; ++i)
        for (size_t j = 0; j < X.cols; ++j)
            out.at(i, j) = (X.at(i, j) - mean[j]) / std_dev[j];
    return out;
}

json Standardizer::to_json() const { return {{"mean", mean}, {"std", std_dev}}; }

Standardizer Standardizer::from_json(const json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std_dev = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.std_dev.size())
        throw std::runtime_error("standardizer json: mean/std size mismatch");
    return s;
}

// ---- Jacobi eigendecomposition ----

void eig_sym_jacobi(const Matrix& A, std::vector<double>& eigenvalues, Matrix& eigenvectors_rows) {
    if (A.rows != A.cols) throw std::invalid_argument("eig_sym_jacobi: matrix not square");
    const size_t n = A.rows;
    Matrix a = A;
    Matrix v(n, n, 0.0);
    for (size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double scale = 1.0;
    for (double x : a.values) scale = std::max(scale, std::fabs(x));
    const double tol = 1e-12 * scale;

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p + 1 < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(a.at(p, q)));
        if (off <= tol) break;

        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) <= tol * 1e-3) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                a.at(p, p) -= t * apq;
                a.at(q, q) += t * apq;
                a.at(p, q) = 0.0;
                a.at(q, p) = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a.at(i, p);
                    const double aiq = a.at(i, q);
                    a.at(i, p) = aip - s * (aiq + tau * aip);
                    a.at(p, i) = a.at(i, p);
                    a.at(i, q) = aiq + s * (aip - tau * aiq);
                    a.at(q, i) = a.at(i, q);
                }
                for (size_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p);
                    const double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return a.at(i, i) > a.at(j, j); });
    eigenvalues.resize(n);
    eigenvectors_rows = Matrix(n, n);
    for (size_t r = 0; r < n; ++r) {
        eigenvalues[r] = a.at(order[r], order[r]);
        for (size_t i = 0; i < n; ++i) eigenvectors_rows.at(r, i) = v.at(i, order[r]);
    }
}

// ---- PCA ----

PcaModel fit_pca(const Matrix& X, size_t target_dim) {
    const size_t N = X.rows, D = X.cols;
    if (N < 2)
        throw std::invalid_argument("fit_pca: need at least 2 rows, got " + std::to_string(N));
    const size_t max_r = std::min(N - 1, D);
    if (target_dim < 1 || target_dim > max_r)
        throw std::invalid_argument("fit_pca: target dim " + std::to_string(target_dim) +
                                    " outside [1," + std::to_string(max_r) + "] for " +
                                    std::to_string(N) + "x" + std::to_string(D) + " input");

    PcaModel model;
    model.mean.assign(D, 0.0);
    for (size_t j = 0; j < D; ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < N; ++i) acc += X.at(i, j);
        model.mean[j] = acc / static_cast<double>(N);
    }
    // sample covariance of the centered data
    Matrix cov(D, D, 0.0);
    for (size_t i = 0; i < N; ++i) {
        for (size_t a = 0; a < D; ++a) {
            const double da = X.at(i, a) - model.mean[a];
            if (da == 0.0) continue;
            for (size_t b = a; b < D; ++b) cov.at(a, b) += da * (X.at(i, b) - model.mean[b]);
        }
    }
    for (size_t a = 0; a < D; ++a)
        for (size_t b = a; b < D; ++b) {
            cov.at(a, b) /= static_cast<double>(N - 1);
            cov.at(b, a) = cov.at(a, b);
        }

    std::vector<double> evals;
    Matrix evecs;
    eig_sym_jacobi(cov, evals, evecs);

    model.components = Matrix(target_dim, D);
    model.explained_variance.resize(target_dim);
    for (size_t r = 0; r < target_dim; ++r) {
        model.explained_variance[r] = std::max(evals[r], 0.0);
        size_t arg = 0;
        for (size_t j = 1; j < D; ++j)
            if (std::fabs(evecs.at(r, j)) > std::fabs(evecs.at(r, arg))) arg = j;
        const double flip = evecs.at(r, arg) < 0.0 ? -1.0 : 1.0;
        for (size_t j = 0; j < D; ++j) model.components.at(r, j) = flip * evecs.at(r, j);
    }
    return model;
}

Matrix PcaModel::apply(const Matrix& X) const {
    if (X.cols != input_dim())
        throw std::invalid_argument("pca apply: fitted on " + std::to_string(input_dim()) +
                                    " columns, got " + std::to_string(X.cols));
    const size_t R = target_dim();
    Matrix out(X.rows, R);
    for (size_t i = 0; i < X.rows; ++i)
        for (size_t r = 0; r < R; ++r) {
            double acc = 0.0;
            for (size_t j = 0; j < X.cols; ++j)
                acc += (X.at(i, j) - mean[j]) * components.at(r, j);
            out.at(i, r) = acc;
        }
    return out;
}

json PcaModel::to_json() const {
    return {{"mean", mean},
            {"components", matrix_to_json(components)},
            {"explained_variance", explained_variance}};
}

PcaModel PcaModel::from_json(const json& j) {
    PcaModel m;
    m.mean = j.at("mean").get<std::vector<double>>();
    m.components = matrix_from_json(j.at("components"));
    m.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    return m;
}

// ---- ADASYN ----

namespace {

double sq_dist(const double* a, const double* b, size_t d) {
    double acc = 0.0;
    for (size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

// k nearest candidates to row `self` (excluded), ties broken by index.
std::vector<size_t> knn(const Matrix& X, const std::vector<size_t>& candidates, size_t self,
                        size_t k) {
    std::vector<std::pair<double, size_t>> dists;
    dists.reserve(candidates.size());
    const double* q = X.row_ptr(self);
    for (size_t c : candidates) {
        if (c == self) continue;
        dists.emplace_back(sq_dist(q, X.row_ptr(c), X.cols), c);
    }
    k = std::min(k, dists.size());
    std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
    std::vector<size_t> out(k);
    for (size_t i = 0; i < k; ++i) out[i] = dists[i].second;
    return out;
}

}  // namespace

AdasynResult adasyn(const Matrix& X, const std::vector<int>& y, int num_classes,
                    const AdasynConfig& cfg) {
    const size_t N = X.rows;
    if (y.size() != N)
        throw std::invalid_argument("adasyn: " + std::to_string(y.size()) + " labels for " +
                                    std::to_string(N) + " rows");
    if (cfg.k < 1) throw std::invalid_argument("adasyn: k must be >= 1");
    if (cfg.beta < 0.0 || cfg.beta > 1.0)
        throw std::invalid_argument("adasyn: beta must be in [0,1], got " +
                                    std::to_string(cfg.beta));
    if (num_classes < 2) throw std::invalid_argument("adasyn: need at least 2 classes");
    if (X.cols < 1) throw std::invalid_argument("adasyn: need at least 1 feature");

    std::vector<size_t> counts(num_classes, 0);
    std::vector<std::vector<size_t>> members(num_classes);
    for (size_t i = 0; i < N; ++i) {
        if (y[i] < 0 || y[i] >= num_classes)
            throw std::invalid_argument("adasyn: label " + std::to_string(y[i]) + " out of range");
        ++counts[y[i]];
        members[y[i]].push_back(i);
    }
    const size_t n_maj = *std::max_element(counts.begin(), counts.end());

    AdasynResult result;
    result.X = X;
    result.y = y;
    result.report.before = counts;
    result.report.synthesized.assign(num_classes, 0);
    result.report.k = cfg.k;
    result.report.beta = cfg.beta;
    result.report.seed = cfg.seed;

    std::vector<size_t> all(N);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(mix_seed(cfg.seed, 0xADA51ull));

    for (int c = 0; c < num_classes; ++c) {
        const size_t n_c = counts[c];
        if (n_c == n_maj) continue;
        if (n_c == 0) {
            result.report.warnings.push_back("class " + std::to_string(c) +
                                             " has no samples; skipped");
            continue;
        }
        if (n_c < 2)
            throw std::invalid_argument("adasyn: minority class " + std::to_string(c) +
                                        " has fewer than 2 samples");
        const size_t G =
            static_cast<size_t>(std::llround(cfg.beta * static_cast<double>(n_maj - n_c)));
        if (G == 0) continue;

        // synthesis budget per minority point from the all-class neighborhood
        const size_t k_ratio = std::min(cfg.k, N - 1);
        std::vector<double> ratio(n_c, 0.0);
        double ratio_sum = 0.0;
        for (size_t m = 0; m < n_c; ++m) {
            auto nbrs = knn(X, all, members[c][m], k_ratio);
            size_t other = 0;
            for (size_t nb : nbrs)
                if (y[nb] != c) ++other;
            ratio[m] = static_cast<double>(other) / static_cast<double>(nbrs.size());
            ratio_sum += ratio[m];
        }
        if (ratio_sum <= 0.0) {
            result.report.warnings.push_back("class " + std::to_string(c) +
                                             ": no other-class neighbors; uniform allocation");
            ratio.assign(n_c, 1.0);
            ratio_sum = static_cast<double>(n_c);
        }

        // largest-remainder apportionment so the class gains exactly G rows
        std::vector<size_t> quota(n_c, 0);
        std::vector<std::pair<double, size_t>> remainders(n_c);
        size_t assigned = 0;
        for (size_t m = 0; m < n_c; ++m) {
            const double share = ratio[m] / ratio_sum * static_cast<double>(G);
            quota[m] = static_cast<size_t>(std::floor(share));
            assigned += quota[m];
            remainders[m] = {-(share - std::floor(share)), m};
        }
        std::sort(remainders.begin(), remainders.end());
        for (size_t i = 0; assigned < G; ++i, ++assigned) ++quota[remainders[i].second];

        size_t k_interp = cfg.k;
        if (k_interp > n_c - 1) {
            k_interp = n_c - 1;
            result.report.warnings.push_back("class " + std::to_string(c) + ": k clamped to " +
                                             std::to_string(k_interp) +
                                             " for interpolation (class too small)");
        }

        for (size_t m = 0; m < n_c; ++m) {
            if (quota[m] == 0) continue;
            auto same_class = knn(X, members[c], members[c][m], k_interp);
            const double* xi = X.row_ptr(members[c][m]);
            for (size_t g = 0; g < quota[m]; ++g) {
                const size_t z = same_class[rng.index(same_class.size())];
                const double lambda = rng.uniform();
                const double* xz = X.row_ptr(z);
                for (size_t d = 0; d < X.cols; ++d)
                    result.X.values.push_back(xi[d] + lambda * (xz[d] - xi[d]));
                result.y.push_back(c);
                ++result.X.rows;
                ++result.report.synthesized[c];
            }
        }
    }

    result.report.after = result.report.before;
    for (int c = 0; c < num_classes; ++c) result.report.after[c] += result.report.synthesized[c];
    return result;
}

json ResampleReport::to_json() const {
    return {{"before", before}, {"after", after}, {"synthesized", synthesized},
            {"k", k},           {"beta", beta},   {"seed", seed},
            {"warnings", warnings}};
}

// ---- flatten layout & artifacts ----

std::vector<double> FlattenLayout::flatten(const Sample& s) const {
    auto check = [&](const Matrix& m, size_t len, size_t dim, const char* name) {
        if (m.rows != len || m.cols != dim)
            throw std::invalid_argument("flatten: sample '" + s.id + "' " + name + " block is " +
                                        std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                        ", layout wants " + std::to_string(len) + "x" +
                                        std::to_string(dim));
    };
    check(s.eye, eye_len, eye_dim, "eye");
    check(s.ppg, ppg_len, ppg_dim, "ppg");
    check(s.semantic, semantic_len, semantic_dim, "semantic");
    std::vector<double> out;
    out.reserve(total());
    out.insert(out.end(), s.eye.values.begin(), s.eye.values.end());
    out.insert(out.end(), s.ppg.values.begin(), s.ppg.values.end());
    out.insert(out.end(), s.semantic.values.begin(), s.semantic.values.end());
    return out;
}

void FlattenLayout::unflatten(const double* row, Sample& out) const {
    out.eye = Matrix(eye_len, eye_dim);
    out.ppg = Matrix(ppg_len, ppg_dim);
    out.semantic = Matrix(semantic_len, semantic_dim);
    const size_t ne = eye_len * eye_dim, np = ppg_len * ppg_dim;
    const size_t ns = semantic_len * semantic_dim;
    std::copy(row, row + ne, out.eye.values.begin());
    std::copy(row + ne, row + ne + np, out.ppg.values.begin());
    std::copy(row + ne + np, row + ne + np + ns, out.semantic.values.begin());
}

json FlattenLayout::to_json() const {
    return {{"eye_len", eye_len},           {"eye_dim", eye_dim},
            {"ppg_len", ppg_len},           {"ppg_dim", ppg_dim},
            {"semantic_len", semantic_len}, {"semantic_dim", semantic_dim}};
}

FlattenLayout FlattenLayout::from_json(const json& j) {
    FlattenLayout l;
    l.eye_len = j.at("eye_len").get<size_t>();
    l.eye_dim = j.at("eye_dim").get<size_t>();
    l.ppg_len = j.at("ppg_len").get<size_t>();
    l.ppg_dim = j.at("ppg_dim").get<size_t>();
    l.semantic_len = j.at("semantic_len").get<size_t>();
    l.semantic_dim = j.at("semantic_dim").get<size_t>();
    return l;
}

Sample PreprocessArtifacts::transform(const Sample& s) const {
    Sample out = s;
    if (pca) out.semantic = pca->apply(s.semantic);
    if (!standardizer) return out;
    std::vector<double> flat = layout.flatten(out);
    Matrix one(1, flat.size());
    one.values = std::move(flat);
    Matrix scaled = standardizer->apply(one);
    layout.unflatten(scaled.row_ptr(0), out);
    return out;
}

json PreprocessArtifacts::to_json() const {
    json j = {{"schema", "camf-preprocess/1"}, {"layout", layout.to_json()}};
    j["pca"] = pca ? pca->to_json() : json(nullptr);
    j["standardizer"] = standardizer ? standardizer->to_json() : json(nullptr);
    return j;
}

PreprocessArtifacts PreprocessArtifacts::from_json(const json& j) {
    if (j.value("schema", "") != "camf-preprocess/1")
        throw std::runtime_error("preprocess artifacts: unknown schema tag");
    PreprocessArtifacts a;
    a.layout = FlattenLayout::from_json(j.at("layout"));
    if (!j.at("pca").is_null()) a.pca = PcaModel::from_json(j["pca"]);
    if (!j.at("standardizer").is_null())
        a.standardizer = Standardizer::from_json(j["standardizer"]);
    return a;
}

json PreprocessConfig::to_json() const {
    return {{"standardize", standardize},
            {"pca_dim", pca_dim},
            {"adasyn", {{"enabled", adasyn_enabled}, {"k", adasyn_k}, {"beta", adasyn_beta}}}};
}

PreprocessConfig PreprocessConfig::from_json(const json& j) {
    PreprocessConfig cfg;
    cfg.standardize = j.value("standardize", cfg.standardize);
    cfg.pca_dim = j.value("pca_dim", cfg.pca_dim);
    if (j.contains("adasyn")) {
        const auto& a = j["adasyn"];
        cfg.adasyn_enabled = a.value("enabled", cfg.adasyn_enabled);
        cfg.adasyn_k = a.value("k", cfg.adasyn_k);
        cfg.adasyn_beta = a.value("beta", cfg.adasyn_beta);
    }
    return cfg;
}

PreprocessArtifacts fit_preprocess(const std::vector<Sample>& train, const PreprocessConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("fit_preprocess: no training samples");
    FlattenLayout layout;
    layout.eye_len = train[0].eye.rows;
    layout.eye_dim = train[0].eye.cols;
    layout.ppg_len = train[0].ppg.rows;
    layout.ppg_dim = train[0].ppg.cols;
    layout.semantic_len = train[0].semantic.rows;
    layout.semantic_dim = train[0].semantic.cols;
    for (const auto& s : train) {
        if (s.eye.rows != layout.eye_len || s.eye.cols != layout.eye_dim ||
            s.ppg.rows != layout.ppg_len || s.ppg.cols != layout.ppg_dim ||
            s.semantic.rows != layout.semantic_len || s.semantic.cols != layout.semantic_dim)
            throw std::invalid_argument(
                "fit_preprocess: sample '" + s.id +
                "' has different block shapes; uniform sequence lengths are required");
    }

    PreprocessArtifacts artifacts;
    if (cfg.pca_dim > 0) {
        Matrix rows(train.size() * layout.semantic_len, layout.semantic_dim);
        size_t r = 0;
        for (const auto& s : train)
            for (size_t t = 0; t < layout.semantic_len; ++t, ++r)
                for (size_t d = 0; d < layout.semantic_dim; ++d)
                    rows.at(r, d) = s.semantic.at(t, d);
        artifacts.pca = fit_pca(rows, cfg.pca_dim);
        layout.semantic_dim = cfg.pca_dim;
    }
    artifacts.layout = layout;

    if (cfg.standardize) {
        Matrix flat(train.size(), layout.total());
        for (size_t i = 0; i < train.size(); ++i) {
            Sample s = train[i];
            if (artifacts.pca) s.semantic = artifacts.pca->apply(train[i].semantic);
            std::vector<double> row = layout.flatten(s);
            std::copy(row.begin(), row.end(), flat.values.begin() + i * layout.total());
        }
        artifacts.standardizer = Standardizer::fit(flat);
    }
    return artifacts;
}

}  // namespace camf
