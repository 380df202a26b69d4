#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "camf/dataset.hpp"
#include "camf/matrix.hpp"

namespace camf {

// Per-column z-scoring fitted on training rows. Near-constant columns have
// their std floored so they transform to zero.
struct Standardizer {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> std_dev;  // >= kStdFloor

    static Standardizer fit(const Matrix& X);
    Matrix apply(const Matrix& X) const;

    nlohmann::json to_json() const;
    static Standardizer from_json(const nlohmann::json& j);
};

// Principal components of the sample covariance, rows orthonormal, variances
// non-increasing. Sign convention: the largest-magnitude entry of each
// component is positive.
struct PcaModel {
    std::vector<double> mean;                 // D
    Matrix components;                        // R x D
    std::vector<double> explained_variance;   // R

    size_t input_dim() const { return components.cols; }
    size_t target_dim() const { return components.rows; }

    // (X - mean) * components^T
    Matrix apply(const Matrix& X) const;

    nlohmann::json to_json() const;
    static PcaModel from_json(const nlohmann::json& j);
};

PcaModel fit_pca(const Matrix& X, size_t target_dim);

// Symmetric eigendecomposition by cyclic Jacobi sweeps; eigenvalues descending,
// eigenvectors as rows. Exposed for reuse and testing against an independent
// oracle.
void eig_sym_jacobi(const Matrix& A, std::vector<double>& eigenvalues, Matrix& eigenvectors_rows);

struct AdasynConfig {
    size_t k = 5;
    double beta = 1.0;
    uint64_t seed = 7;
};

struct ResampleReport {
    std::vector<size_t> before;
    std::vector<size_t> after;
    std::vector<size_t> synthesized;
    size_t k = 0;
    double beta = 1.0;
    uint64_t seed = 0;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

struct AdasynResult {
    Matrix X;              // originals verbatim, then synthetic rows
    std::vector<int> y;
    ResampleReport report;
};

// Adaptive synthetic oversampling. Minority points receive synthesis budget
// proportional to the fraction of other-class points among their k nearest
// neighbors (all-class neighborhood); interpolation partners come from the k
// nearest same-class neighbors.
AdasynResult adasyn(const Matrix& X, const std::vector<int>& y, int num_classes,
                    const AdasynConfig& cfg);

// Row layout used to flatten one sample into a single feature vector:
// eye rows, then ppg rows, then semantic rows, each row-major in time order.
struct FlattenLayout {
    size_t eye_len = 0, eye_dim = 0;
    size_t ppg_len = 0, ppg_dim = 0;
    size_t semantic_len = 0, semantic_dim = 0;

    size_t total() const {
        return eye_len * eye_dim + ppg_len * ppg_dim + semantic_len * semantic_dim;
    }
    std::vector<double> flatten(const Sample& s) const;
    void unflatten(const double* row, Sample& out) const;

    nlohmann::json to_json() const;
    static FlattenLayout from_json(const nlohmann::json& j);
};

struct PreprocessConfig {
    bool standardize = true;
    size_t pca_dim = 25;  // 0 disables the semantic PCA step
    bool adasyn_enabled = true;
    size_t adasyn_k = 5;
    double adasyn_beta = 1.0;

    nlohmann::json to_json() const;
    static PreprocessConfig from_json(const nlohmann::json& j);
};

// Everything fitted on a training split, applied identically at train and
// inference time.
struct PreprocessArtifacts {
    std::optional<PcaModel> pca;            // semantic reduction
    std::optional<Standardizer> standardizer;  // over flattened vectors
    FlattenLayout layout;                   // post-PCA layout

    // PCA (if any) on the semantic block, then flatten + standardize + unflatten.
    Sample transform(const Sample& s) const;

    nlohmann::json to_json() const;
    static PreprocessArtifacts from_json(const nlohmann::json& j);
};

// Fits PCA and the standardizer on the given training samples. All samples
// must share sequence lengths per modality (required by the flat layout).
PreprocessArtifacts fit_preprocess(const std::vector<Sample>& train, const PreprocessConfig& cfg);

}  // namespace camf
