#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "camf/preprocess.hpp"
#include "camf/rng.hpp"
#include "oracles.hpp"

using camf::AdasynConfig;
using camf::Matrix;
using camf::PcaModel;
using camf::Sample;
using camf::Standardizer;

namespace {

Matrix random_matrix(size_t r, size_t c, camf::Rng& rng, double lo = -2, double hi = 2) {
    Matrix m(r, c);
    for (auto& v : m.values) v = rng.uniform(lo, hi);
    return m;
}

oracle::Mat to_oracle(const Matrix& m) {
    oracle::Mat out(m.rows, oracle::Vec(m.cols));
    for (size_t i = 0; i < m.rows; ++i)
        for (size_t j = 0; j < m.cols; ++j) out[i][j] = m.at(i, j);
    return out;
}

}  // namespace

TEST_CASE("standardizer zeroes constant columns and normalizes the rest") {
    Matrix X(4, 2);
    for (size_t i = 0; i < 4; ++i) {
        X.at(i, 0) = 5.0;                       // constant
        X.at(i, 1) = static_cast<double>(i);    // varying
    }
    Standardizer s = Standardizer::fit(X);
    Matrix out = s.apply(X);
    for (size_t i = 0; i < 4; ++i) CHECK(out.at(i, 0) == 0.0);

    auto [mu, sd] = oracle::two_pass_mean_std(to_oracle(out));
    CHECK(std::fabs(mu[1]) < 1e-9);
    CHECK(std::fabs(sd[1] - 1.0) < 1e-9);

    CHECK_THROWS_AS(Standardizer::fit(Matrix(1, 3)), std::invalid_argument);
}

TEST_CASE("standardizer is idempotent on its own output") {
    camf::Rng rng(31);
    Matrix X = random_matrix(100, 5, rng);
    Standardizer s1 = Standardizer::fit(X);
    Matrix once = s1.apply(X);
    Standardizer s2 = Standardizer::fit(once);
    Matrix twice = s2.apply(once);
    for (size_t i = 0; i < once.values.size(); ++i)
        CHECK(std::fabs(once.values[i] - twice.values[i]) < 1e-9);

    auto [mu, sd] = oracle::two_pass_mean_std(to_oracle(once));
    for (size_t j = 0; j < 5; ++j) {
        CHECK(std::fabs(mu[j]) < 1e-9);
        CHECK(std::fabs(sd[j] - 1.0) < 1e-9);
    }
}

TEST_CASE("jacobi eigensolver agrees with the textbook oracle") {
    camf::Rng rng(32);
    for (int rep = 0; rep < 10; ++rep) {
        const size_t n = 3 + rng.index(6);
        Matrix A(n, n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i; j < n; ++j) A.at(i, j) = A.at(j, i) = rng.uniform(-1, 1);
        std::vector<double> evals;
        Matrix evecs;
        camf::eig_sym_jacobi(A, evals, evecs);

        auto [oe, ov] = oracle::eig_sym(to_oracle(A));
        for (size_t i = 0; i < n; ++i) CHECK(std::fabs(evals[i] - oe[i]) < 1e-10);

        // residual check: A v = lambda v
        for (size_t r = 0; r < n; ++r)
            for (size_t i = 0; i < n; ++i) {
                double av = 0.0;
                for (size_t j = 0; j < n; ++j) av += A.at(i, j) * evecs.at(r, j);
                CHECK(std::fabs(av - evals[r] * evecs.at(r, i)) < 1e-9);
            }
    }
}

TEST_CASE("pca on axis-aligned points") {
    Matrix X(4, 2);
    X.at(0, 0) = 1;
    X.at(1, 0) = -1;
    X.at(2, 0) = 2;
    X.at(3, 0) = -2;
    PcaModel m = camf::fit_pca(X, 2);
    CHECK(m.components.at(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::fabs(m.components.at(0, 1)) < 1e-10);
    CHECK(m.explained_variance[1] == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("pca with full rank preserves pairwise distances and reconstructs") {
    camf::Rng rng(33);
    Matrix X = random_matrix(20, 4, rng);
    PcaModel m = camf::fit_pca(X, 4);
    Matrix P = m.apply(X);
    for (size_t i = 0; i < X.rows; ++i)
        for (size_t j = i + 1; j < X.rows; ++j) {
            double dx = 0.0, dp = 0.0;
            for (size_t d = 0; d < 4; ++d) {
                dx += (X.at(i, d) - X.at(j, d)) * (X.at(i, d) - X.at(j, d));
                dp += (P.at(i, d) - P.at(j, d)) * (P.at(i, d) - P.at(j, d));
            }
            CHECK(std::fabs(std::sqrt(dx) - std::sqrt(dp)) < 1e-9);
        }
    // reconstruct: proj * components + mean
    for (size_t i = 0; i < X.rows; ++i)
        for (size_t d = 0; d < 4; ++d) {
            double rec = m.mean[d];
            for (size_t r = 0; r < 4; ++r) rec += P.at(i, r) * m.components.at(r, d);
            CHECK(std::fabs(rec - X.at(i, d)) < 1e-9);
        }
    // the training mean row projects to zero
    Matrix mean_row(1, 4);
    for (size_t d = 0; d < 4; ++d) mean_row.at(0, d) = m.mean[d];
    Matrix z = m.apply(mean_row);
    for (size_t r = 0; r < 4; ++r) CHECK(std::fabs(z.at(0, r)) < 1e-12);
}

TEST_CASE("pca components match an independent eigendecomposition oracle") {
    camf::Rng rng(34);
    Matrix X = random_matrix(50, 8, rng);
    PcaModel m = camf::fit_pca(X, 3);

    // oracle route: covariance then textbook Jacobi
    auto xo = to_oracle(X);
    oracle::Vec mean(8, 0.0);
    for (auto& row : xo)
        for (size_t j = 0; j < 8; ++j) mean[j] += row[j] / 50.0;
    oracle::Mat cov(8, oracle::Vec(8, 0.0));
    for (auto& row : xo)
        for (size_t a = 0; a < 8; ++a)
            for (size_t b = 0; b < 8; ++b)
                cov[a][b] += (row[a] - mean[a]) * (row[b] - mean[b]) / 49.0;
    auto [evals, evecs] = oracle::eig_sym(cov);

    for (size_t r = 0; r < 3; ++r) {
        CHECK(std::fabs(m.explained_variance[r] - evals[r]) < 1e-10);
        for (size_t j = 0; j < 8; ++j)
            CHECK(std::fabs(m.components.at(r, j) - evecs[r][j]) < 1e-8);
    }
}

TEST_CASE("pca invariants: orthonormal rows, ordered variances, bounded total") {
    camf::Rng rng(35);
    for (int rep = 0; rep < 5; ++rep) {
        Matrix X = random_matrix(30, 6, rng);
        PcaModel m = camf::fit_pca(X, 4);
        for (size_t a = 0; a < 4; ++a)
            for (size_t b = 0; b < 4; ++b) {
                double dot = 0.0;
                for (size_t j = 0; j < 6; ++j) dot += m.components.at(a, j) * m.components.at(b, j);
                CHECK(std::fabs(dot - (a == b ? 1.0 : 0.0)) <= 1e-8);
            }
        double total_ev = 0.0;
        for (size_t r = 0; r < 4; ++r) {
            total_ev += m.explained_variance[r];
            if (r) CHECK(m.explained_variance[r] <= m.explained_variance[r - 1] + 1e-12);
            CHECK(m.explained_variance[r] >= 0.0);
        }
        double total_var = 0.0;
        auto [mu, sd] = oracle::two_pass_mean_std(to_oracle(X));
        for (size_t j = 0; j < 6; ++j) total_var += sd[j] * sd[j] * 30.0 / 29.0;
        CHECK(total_ev <= total_var + 1e-8);
    }
    CHECK_THROWS_AS(camf::fit_pca(random_matrix(5, 8, rng), 5), std::invalid_argument);
    CHECK_THROWS_AS(camf::fit_pca(random_matrix(5, 8, rng), 0), std::invalid_argument);
}

TEST_CASE("pca serialization round-trips") {
    camf::Rng rng(36);
    Matrix X = random_matrix(12, 5, rng);
    PcaModel m = camf::fit_pca(X, 2);
    PcaModel m2 = PcaModel::from_json(m.to_json());
    CHECK(m2.components == m.components);
    CHECK(m2.mean == m.mean);
    CHECK(m2.explained_variance == m.explained_variance);
}

TEST_CASE("adasyn leaves balanced input untouched") {
    camf::Rng rng(37);
    Matrix X = random_matrix(20, 3, rng);
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) y.push_back(i % 2);
    auto res = camf::adasyn(X, y, 2, {});
    CHECK(res.X == X);
    CHECK(res.y == y);
    CHECK(res.report.synthesized == std::vector<size_t>{0, 0});
}

TEST_CASE("adasyn two-point minority interpolates on the segment") {
    // minority {a, b} with k=1: every synthetic point must lie on [a,b]
    Matrix X(8, 2);
    std::vector<int> y;
    camf::Rng rng(38);
    for (int i = 0; i < 6; ++i) {
        X.at(i, 0) = 5.0 + rng.uniform(-0.5, 0.5);
        X.at(i, 1) = 5.0 + rng.uniform(-0.5, 0.5);
        y.push_back(0);
    }
    const double ax = -1.0, ay = 0.5, bx = 1.5, by = -0.25;
    X.at(6, 0) = ax, X.at(6, 1) = ay;
    X.at(7, 0) = bx, X.at(7, 1) = by;
    y.push_back(1);
    y.push_back(1);

    AdasynConfig cfg;
    cfg.k = 1;
    auto res = camf::adasyn(X, y, 2, cfg);
    CHECK(res.report.after[1] == res.report.after[0]);
    REQUIRE(res.X.rows == 8 + res.report.synthesized[1]);
    for (size_t i = 8; i < res.X.rows; ++i) {
        const double px = res.X.at(i, 0), py = res.X.at(i, 1);
        const double denom = bx - ax;
        const double lambda = (px - ax) / denom;
        CHECK(lambda >= -1e-9);
        CHECK(lambda <= 1.0 + 1e-9);
        CHECK(std::fabs(ay + lambda * (by - ay) - py) < 1e-9);  // collinear
    }
}

TEST_CASE("adasyn synthetic rows are convex combinations of same-class originals") {
    camf::Rng rng(39);
    const size_t D = 3;
    Matrix X(30, D);
    std::vector<int> y;
    for (size_t i = 0; i < 30; ++i) {
        const int c = i < 18 ? 0 : (i < 26 ? 1 : 2);
        for (size_t d = 0; d < D; ++d) X.at(i, d) = rng.normal(c * 2.0, 1.0);
        y.push_back(c);
    }
    AdasynConfig cfg;
    cfg.k = 3;
    auto res = camf::adasyn(X, y, 3, cfg);

    // originals preserved verbatim, majority unchanged
    for (size_t i = 0; i < 30; ++i)
        for (size_t d = 0; d < D; ++d) CHECK(res.X.at(i, d) == X.at(i, d));
    CHECK(res.report.after[0] == 18);
    CHECK(res.report.after[1] == 18);
    CHECK(res.report.after[2] == 18);

    // exhaustive pair search for the segment property
    for (size_t s = 30; s < res.X.rows; ++s) {
        const int c = res.y[s];
        bool found = false;
        for (size_t i = 0; i < 30 && !found; ++i) {
            if (y[i] != c) continue;
            for (size_t j = 0; j < 30 && !found; ++j) {
                if (y[j] != c || i == j) continue;
                // solve lambda from the first coordinate with a gap
                double lambda = -1.0;
                bool ok = true;
                for (size_t d = 0; d < D && ok; ++d) {
                    const double den = X.at(j, d) - X.at(i, d);
                    const double num = res.X.at(s, d) - X.at(i, d);
                    if (std::fabs(den) > 1e-12) {
                        const double l = num / den;
                        if (lambda < 0.0)
                            lambda = l;
                        else
                            ok = std::fabs(l - lambda) < 1e-9;
                    } else {
                        ok = std::fabs(num) < 1e-9;
                    }
                }
                found = ok && lambda >= -1e-9 && lambda <= 1.0 + 1e-9;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("adasyn determinism, clamping, and errors") {
    camf::Rng rng(40);
    Matrix X(13, 2);
    std::vector<int> y;
    for (size_t i = 0; i < 13; ++i) {
        X.at(i, 0) = rng.normal();
        X.at(i, 1) = rng.normal();
        y.push_back(i < 10 ? 0 : 1);
    }
    AdasynConfig cfg;
    cfg.k = 5;  // minority has 3 samples -> clamped to 2 for interpolation
    auto r1 = camf::adasyn(X, y, 2, cfg);
    auto r2 = camf::adasyn(X, y, 2, cfg);
    CHECK(r1.X == r2.X);
    CHECK(r1.y == r2.y);
    REQUIRE(!r1.report.warnings.empty());
    CHECK(r1.report.warnings[0].find("clamped") != std::string::npos);
    CHECK(r1.report.after[1] == 10);

    cfg.seed = 99;
    auto r3 = camf::adasyn(X, y, 2, cfg);
    CHECK(r1.X != r3.X);

    std::vector<int> y_tiny = y;
    for (auto& v : y_tiny) v = 0;
    y_tiny[0] = 1;  // single-sample minority
    CHECK_THROWS_AS(camf::adasyn(X, y_tiny, 2, cfg), std::invalid_argument);
    CHECK_THROWS_AS(camf::adasyn(X, y, 2, AdasynConfig{0, 1.0, 7}), std::invalid_argument);
}

TEST_CASE("fit_preprocess pipelines pca and standardization") {
    camf::Rng rng(41);
    std::vector<Sample> train;
    for (int i = 0; i < 12; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.label = i % 2;
        s.eye = random_matrix(2, 3, rng);
        s.ppg = random_matrix(2, 2, rng);
        s.semantic = random_matrix(3, 6, rng);
        train.push_back(s);
    }
    camf::PreprocessConfig cfg;
    cfg.pca_dim = 4;
    auto artifacts = camf::fit_preprocess(train, cfg);
    REQUIRE(artifacts.pca.has_value());
    CHECK(artifacts.layout.semantic_dim == 4);
    CHECK(artifacts.layout.total() == 2 * 3 + 2 * 2 + 3 * 4);

    Sample t = artifacts.transform(train[0]);
    CHECK(t.semantic.cols == 4);
    CHECK(t.eye.rows == 2);

    // transformed training set standardizes to mean 0 / std 1 per flat column
    Matrix flat(train.size(), artifacts.layout.total());
    for (size_t i = 0; i < train.size(); ++i) {
        auto row = artifacts.layout.flatten(artifacts.transform(train[i]));
        std::copy(row.begin(), row.end(), flat.values.begin() + i * flat.cols);
    }
    auto [mu, sd] = oracle::two_pass_mean_std(to_oracle(flat));
    for (size_t j = 0; j < flat.cols; ++j) {
        CHECK(std::fabs(mu[j]) < 1e-9);
        CHECK(std::fabs(sd[j] - 1.0) < 1e-9);
    }

    // serialization round-trip preserves behaviour
    auto round = camf::PreprocessArtifacts::from_json(artifacts.to_json());
    Sample t2 = round.transform(train[0]);
    CHECK(t2.semantic == t.semantic);
    CHECK(t2.eye == t.eye);

    train[3].eye = random_matrix(4, 3, rng);  // ragged lengths rejected
    CHECK_THROWS_AS(camf::fit_preprocess(train, cfg), std::invalid_argument);
}
