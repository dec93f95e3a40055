#pragma once

#include "facepool/common.hpp"
#include "facepool/encoder.hpp"
#include "facepool/learning.hpp"
#include "facepool/signature.hpp"
#include "facepool/stimuli.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace facepool {

struct TuningCurve {
    Vec angles_deg;
    Vec responses;
    int identity_id = -1;
    int unit_index = -1;
    std::string stage;
};

/// Orientation tuning of a single unit: response(theta) =
/// eta(<encode(render(face, theta)), unit>). The whitening transform, when
/// given, is applied to the encoded view first (ICA units live in whitened
/// space).
TuningCurve tuning_curve(const Vec& unit, const std::optional<WhiteningTransform>& whitening,
                         const FaceModel3D& face, const AngleGrid& grid, const Encoder& encoder,
                         Nonlinearity nl, const RenderOptions& render_opts = {});

/// Even-minus-odd energy fraction of a curve on a symmetric grid, in
/// [-1, 1]; 1 for perfectly mirror-symmetric curves, -1 for perfectly
/// antisymmetric ones, 1 for all-zero curves by convention.
double symmetry_index(const Vec& angles_deg, const Vec& responses);
double symmetry_index(const TuningCurve& curve);

enum class Parity { even, odd, mixed };

const char* parity_name(Parity p);

struct ParityResult {
    Parity parity = Parity::mixed;
    double residual = 0.0;  // min(|sv - v|, |sv + v|) / |v|
};

ParityResult parity_of_vector(const Vec& v, const FeatureReflection& sigma, double tol = 1e-6);

/// Exact Mann-Whitney statistic: fraction of (same, diff) score pairs with
/// score_same > score_diff, ties counted 1/2.
double roc_auc(const std::vector<double>& scores_same, const std::vector<double>& scores_diff);

struct AUCTable {
    std::vector<double> radii_deg;
    std::vector<double> auc_mean;
    std::vector<double> auc_std;
    int repetitions = 0;
};

struct PairMatchingOptions {
    int repetitions = 5;
    int n_template = 20;
    int n_test = 20;
    std::vector<double> radii_deg = {5, 15, 25, 35, 45, 55, 65, 75, 85, 95};
    int pairs_per_radius = 600;  // half same, half different
};

/// Same-different pair matching vs invariance radius. features_per_identity
/// holds the encoded orbit of every identity (columns ordered like
/// angles_deg). With empty bases the raw encoding is the representation
/// (baseline); otherwise the representation of a test image is its pooled
/// signature over the repetition's template bases. Scores are cosine
/// similarities of standardized representations.
AUCTable pair_matching_experiment(const std::vector<Mat>& features_per_identity,
                                  const std::vector<double>& angles_deg,
                                  const std::vector<LearnedBasis>& bases_per_identity,
                                  const SignatureSpec& spec, const PairMatchingOptions& opts,
                                  std::uint64_t seed);

struct SampleLabel {
    int identity_id = -1;
    double angle_deg = 0.0;
};

struct SimilarityMatrix {
    Mat values;
    std::vector<SampleLabel> labels;
    std::string stage;  // input | simple | pooled
};

double pearson(const Vec& a, const Vec& b);

SimilarityMatrix similarity_matrix(const std::vector<SampleLabel>& labels,
                                   const std::vector<Vec>& vectors, const std::string& stage);

struct SimilarityExperimentOptions {
    int repetitions = 10;
    int n_template = 20;
    int n_test = 20;
};

struct SimilarityExperimentResult {
    SimilarityMatrix input;
    SimilarityMatrix simple;
    SimilarityMatrix pooled;
};

/// Fig-style three-stage population similarity matrices (encoder output,
/// simple-cell responses, pooled signature), averaged over template/test
/// splits.
SimilarityExperimentResult similarity_experiment(const std::vector<Mat>& features_per_identity,
                                                 const std::vector<double>& angles_deg,
                                                 const std::vector<LearnedBasis>& bases_per_identity,
                                                 const SignatureSpec& spec,
                                                 const SimilarityExperimentOptions& opts,
                                                 std::uint64_t seed);

struct FieldSample {
    Vec w;
    Vec x;
    Vec x_trace;  // used by foldiak only
};

std::vector<FieldSample> random_field_samples(int count, int dim, std::uint64_t seed);

using FieldFn = std::function<Mat(const Mat& w, const Vec& x, const Vec& x_trace)>;

/// max over samples of |f(sigma w, x) - sigma f(w, sigma^-1 x)| /
/// (|f(w, sigma^-1 x)| + eps); near zero iff the rule's field commutes with
/// the reflection action up to the training-set permutation.
double equivariance_residual(const FieldFn& field, const FeatureReflection& sigma,
                             const std::vector<FieldSample>& samples);
double equivariance_residual(Rule rule, const FeatureReflection& sigma,
                             const std::vector<FieldSample>& samples);

/// Per-window relative range of signature components over a view orbit:
/// for each window of half-width window_deg centered on a grid angle,
/// max over components of (max - min) / mean within the window.
Vec invariance_profile(const Mat& signatures, const Vec& angles_deg, double window_deg);

/// |C sigma - sigma C|_F / |C|_F; zero when the covariance commutes with
/// the feature reflection.
double reflection_commutator(const Mat& C, const FeatureReflection& sigma);

/// Per-eigenvector relative gap min(lambda[i-1]-lambda[i],
/// lambda[i]-lambda[i+1]) / lambda[0] for a non-increasing spectrum;
/// eigenvalues past the end of the list are treated as zero.
std::vector<double> relative_eigengaps(const Vec& eigenvalues);

}  // namespace facepool
