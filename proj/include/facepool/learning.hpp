#pragma once

#include "facepool/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace facepool {

enum class Rule { hebb, oja, sanger, foldiak, ica };

const char* rule_name(Rule rule);
Rule rule_from_name(const std::string& name);

struct LearningSchedule {
    double alpha0 = 0.05;
    double tau = 1000.0;

    double rate(long step) const { return alpha0 / (1.0 + static_cast<double>(step) / tau); }
};

/// State of an online rule: r units learning in parallel on a d-dimensional
/// stream. The trace vector is only used by the Foldiak rule.
struct RuleState {
    Mat weights;  // r x d
    Rule rule = Rule::oja;
    long step_count = 0;
    LearningSchedule schedule;
    Vec trace;
    double trace_decay = 0.2;  // in (0,1]
    bool renormalize = false;  // post-step row renormalization (hebb/foldiak)

    int units() const { return static_cast<int>(weights.rows()); }
    int dim() const { return static_cast<int>(weights.cols()); }
};

RuleState make_rule_state(Rule rule, int units, int dim, std::uint64_t seed,
                          const LearningSchedule& schedule = {}, double trace_decay = 0.2,
                          bool renormalize = false);

// One online update per call; alpha comes from the state's schedule.
void hebb_step(RuleState& state, const Vec& x);
void oja_step(RuleState& state, const Vec& x);
void sanger_step(RuleState& state, const Vec& x);
void foldiak_step(RuleState& state, const Vec& x);
void ica_step(RuleState& state, const Vec& x_whitened);
void rule_step(RuleState& state, const Vec& x);

/// Instantaneous update direction f(w, x) of a rule, with unit step size and
/// no renormalization; the raw field used in the equivariance checks. For
/// foldiak, trace_input is the time-averaged past input (the trace is its
/// dot product with each row).
Mat vector_field(Rule rule, const Mat& weights, const Vec& x, const Vec* trace_input = nullptr);

struct WhiteningTransform {
    Vec mean;
    Mat matrix;  // d x d (rank-deficient directions mapped to zero)

    Vec apply(const Vec& x) const { return matrix * (x - mean); }
    Mat apply_columns(const Mat& X) const { return matrix * (X.colwise() - mean); }
};

struct CovariancePack {
    Mat C;  // d x d, uncentered second moment X X^T / n
    long n_samples = 0;
};

struct LearnedBasis {
    int identity_id = -1;
    Mat vectors;       // r x d
    std::string rule;  // "pca", "oja", "view_based", ...
    Vec eigenvalues;   // empty unless batch PCA
    std::optional<WhiteningTransform> whitening;  // present for ICA bases

    int units() const { return static_cast<int>(vectors.rows()); }
    int dim() const { return static_cast<int>(vectors.cols()); }
};

/// ZCA whitening fitted on the columns of X (mean-centered). Directions with
/// eigenvalue below rank_tolerance * lambda_max are dropped from the
/// transform. Returns the transform and the whitened dataset.
std::pair<WhiteningTransform, Mat> zca_whiten(const Mat& X, double rank_tolerance = 1e-10);

struct PcaResult {
    LearnedBasis basis;
    CovariancePack covariance;
};

/// Eigendecomposition of the uncentered second moment C = X X^T / n, sorted
/// by non-increasing eigenvalue with a deterministic sign convention (the
/// largest-magnitude entry of each eigenvector is positive). When d exceeds
/// the sample count the eigenpairs are computed through the n x n Gram
/// matrix; eigenpairs with eigenvalue below 1e-12 * lambda_max are omitted
/// (they are numerically zero).
PcaResult batch_pca(const Mat& X, bool with_covariance = true);

struct TrainOptions {
    int epochs = 200;
    LearningSchedule schedule;
    double trace_decay = 0.2;
    bool renormalize = true;  // applied to hebb/foldiak only
    double divergence_limit = 1e6;
    double whiten_rank_tolerance = 1e-10;
    long max_steps = 0;  // 0 = no cap
};

/// Runs the chosen rule over the orbit stream (columns of X). Presentation
/// order is shuffled per epoch, except for foldiak which consumes the
/// columns in their given (angular) order. ICA whitens internally and
/// stores the transform on the returned basis.
LearnedBasis train_basis(const Mat& X, Rule rule, int units, std::uint64_t seed,
                         const TrainOptions& opts = {});

nlohmann::json basis_to_json(const LearnedBasis& basis);
LearnedBasis basis_from_json(const nlohmann::json& j);

}  // namespace facepool
