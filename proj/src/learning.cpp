#include "facepool/learning.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace facepool {

const char* rule_name(Rule rule) {
    switch (rule) {
        case Rule::hebb: return "hebb";
        case Rule::oja: return "oja";
        case Rule::sanger: return "sanger";
        case Rule::foldiak: return "foldiak";
        case Rule::ica: return "ica";
    }
    return "?";
}

Rule rule_from_name(const std::string& name) {
    if (name == "hebb") return Rule::hebb;
    if (name == "oja") return Rule::oja;
    if (name == "sanger") return Rule::sanger;
    if (name == "foldiak") return Rule::foldiak;
    if (name == "ica") return Rule::ica;
    throw std::invalid_argument("unknown learning rule: " + name);
}

namespace {

void check_dims(const RuleState& state, const Vec& x) {
    if (x.size() != state.weights.cols())
        throw std::invalid_argument("rule step: input dimension does not match weights");
}

void check_finite(const RuleState& state) {
    if (!state.weights.allFinite()) {
        std::ostringstream msg;
        msg << rule_name(state.rule) << " diverged to non-finite weights at step "
            << state.step_count;
        throw NumericError(msg.str());
    }
}

void renormalize_rows(Mat& w) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double n = w.row(i).norm();
        if (n > 0.0) w.row(i) /= n;
    }
}

}  // namespace

RuleState make_rule_state(Rule rule, int units, int dim, std::uint64_t seed,
                          const LearningSchedule& schedule, double trace_decay,
                          bool renormalize) {
    if (units < 1 || dim < 1)
        throw std::invalid_argument("make_rule_state: units and dim must be >= 1");
    if (!(trace_decay > 0.0 && trace_decay <= 1.0))
        throw std::invalid_argument("make_rule_state: trace_decay must be in (0, 1]");
    RuleState state;
    state.rule = rule;
    state.schedule = schedule;
    state.trace_decay = trace_decay;
    state.renormalize = renormalize;
    state.weights.resize(units, dim);
    std::mt19937_64 rng(derive_seed(seed, "rule_init"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < state.weights.rows(); ++i)
        for (Eigen::Index j = 0; j < state.weights.cols(); ++j) state.weights(i, j) = gauss(rng);
    renormalize_rows(state.weights);
    state.trace = Vec::Zero(units);
    return state;
}

void hebb_step(RuleState& state, const Vec& x) {
    check_dims(state, x);
    const double alpha = state.schedule.rate(state.step_count);
    const Vec y = state.weights * x;
    state.weights.noalias() += alpha * y * x.transpose();
    if (state.renormalize) renormalize_rows(state.weights);
    ++state.step_count;
    check_finite(state);
}

void oja_step(RuleState& state, const Vec& x) {
    check_dims(state, x);
    const double alpha = state.schedule.rate(state.step_count);
    const Vec y = state.weights * x;
    // per row i: w += alpha * (x * y_i - y_i^2 * w)
    const Mat delta =
        alpha * (y * x.transpose() - y.array().square().matrix().asDiagonal() * state.weights);
    state.weights += delta;
    ++state.step_count;
    check_finite(state);
}

void sanger_step(RuleState& state, const Vec& x) {
    check_dims(state, x);
    const double alpha = state.schedule.rate(state.step_count);
    const Vec y = state.weights * x;
    // delta_i = alpha * y_i * (x - sum_{j<=i} y_j w_j), all from pre-step weights
    Mat delta(state.weights.rows(), state.weights.cols());
    Vec running = x;
    for (Eigen::Index i = 0; i < state.weights.rows(); ++i) {
        running -= y[i] * state.weights.row(i).transpose();
        delta.row(i) = alpha * y[i] * running.transpose();
    }
    state.weights += delta;
    ++state.step_count;
    check_finite(state);
}

void foldiak_step(RuleState& state, const Vec& x) {
    check_dims(state, x);
    const double alpha = state.schedule.rate(state.step_count);
    const Vec y = state.weights * x;
    state.trace = (1.0 - state.trace_decay) * state.trace + state.trace_decay * y;
    state.weights.noalias() += alpha * state.trace * x.transpose();
    if (state.renormalize) renormalize_rows(state.weights);
    ++state.step_count;
    check_finite(state);
}

void ica_step(RuleState& state, const Vec& x_whitened) {
    check_dims(state, x_whitened);
    const double alpha = state.schedule.rate(state.step_count);
    const Vec y = state.weights * x_whitened;
    const Mat delta =
        alpha * (y.array().cube().matrix() * x_whitened.transpose() - state.weights);
    state.weights += delta;
    renormalize_rows(state.weights);  // the raw field is not norm-stable
    ++state.step_count;
    check_finite(state);
}

void rule_step(RuleState& state, const Vec& x) {
    switch (state.rule) {
        case Rule::hebb: hebb_step(state, x); return;
        case Rule::oja: oja_step(state, x); return;
        case Rule::sanger: sanger_step(state, x); return;
        case Rule::foldiak: foldiak_step(state, x); return;
        case Rule::ica: ica_step(state, x); return;
    }
}

Mat vector_field(Rule rule, const Mat& weights, const Vec& x, const Vec* trace_input) {
    if (x.size() != weights.cols())
        throw std::invalid_argument("vector_field: input dimension does not match weights");
    const Vec y = weights * x;
    Mat f(weights.rows(), weights.cols());
    switch (rule) {
        case Rule::hebb:
            f = y * x.transpose();
            break;
        case Rule::oja:
            f = y * x.transpose() - y.array().square().matrix().asDiagonal() * weights;
            break;
        case Rule::sanger: {
            Vec deflated = x;
            for (Eigen::Index i = 0; i < weights.rows(); ++i) {
                deflated -= y[i] * weights.row(i).transpose();
                f.row(i) = y[i] * deflated.transpose();
            }
            break;
        }
        case Rule::foldiak: {
            if (trace_input == nullptr)
                throw std::invalid_argument("vector_field: foldiak requires a trace input");
            const Vec ybar = weights * (*trace_input);
            f = ybar * x.transpose();
            break;
        }
        case Rule::ica:
            f = y.array().cube().matrix() * x.transpose() - weights;
            break;
    }
    return f;
}

std::pair<WhiteningTransform, Mat> zca_whiten(const Mat& X, double rank_tolerance) {
    const Eigen::Index n = X.cols();
    if (n < 2) throw std::invalid_argument("zca_whiten: need at least 2 samples");

    WhiteningTransform t;
    t.mean = X.rowwise().mean();
    const Mat Xc = X.colwise() - t.mean;
    const Mat C = Xc * Xc.transpose() / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Mat> eig(C);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("zca_whiten: eigendecomposition failed");
    const Vec lambda = eig.eigenvalues();
    const double lmax = lambda.maxCoeff();
    if (!(lmax > 0.0)) throw DegenerateDataError("zca_whiten: all samples identical");

    Vec inv_sqrt = Vec::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (lambda[i] > rank_tolerance * lmax) inv_sqrt[i] = 1.0 / std::sqrt(lambda[i]);
    t.matrix = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    return {t, t.apply_columns(X)};
}

namespace {

void fix_sign(Mat& vectors) {
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        Eigen::Index arg = 0;
        vectors.row(i).cwiseAbs().maxCoeff(&arg);
        if (vectors(i, arg) < 0.0) vectors.row(i) = -vectors.row(i);
    }
}

}  // namespace

PcaResult batch_pca(const Mat& X, bool with_covariance) {
    const Eigen::Index d = X.rows();
    const Eigen::Index n = X.cols();
    if (n < 1) throw std::invalid_argument("batch_pca: need at least 1 sample");
    if (!X.allFinite()) throw std::invalid_argument("batch_pca: non-finite data");

    PcaResult out;
    out.basis.rule = "pca";
    out.covariance.n_samples = n;
    if (with_covariance) out.covariance.C = X * X.transpose() / static_cast<double>(n);

    if (d <= n) {
        const Mat C = with_covariance ? out.covariance.C
                                      : Mat(X * X.transpose() / static_cast<double>(n));
        Eigen::SelfAdjointEigenSolver<Mat> eig(C);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("batch_pca: eigendecomposition failed");
        Mat v(d, d);
        Vec l(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            v.row(i) = eig.eigenvectors().col(d - 1 - i).transpose();
            l[i] = eig.eigenvalues()[d - 1 - i];
        }
        out.basis.vectors = v;
        out.basis.eigenvalues = l;
    } else {
        // Gram trick: eigenpairs of X^T X / n give the nonzero spectrum.
        const Mat G = X.transpose() * X / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Mat> eig(G);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("batch_pca: eigendecomposition failed");
        const double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = n - 1; i >= 0; --i)
            if (eig.eigenvalues()[i] > 1e-12 * lmax) keep.push_back(i);
        Mat v(static_cast<Eigen::Index>(keep.size()), d);
        Vec l(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const double lam = eig.eigenvalues()[keep[k]];
            l[static_cast<Eigen::Index>(k)] = lam;
            v.row(static_cast<Eigen::Index>(k)) =
                (X * eig.eigenvectors().col(keep[k])).transpose() /
                std::sqrt(lam * static_cast<double>(n));
        }
        out.basis.vectors = v;
        out.basis.eigenvalues = l;
    }
    fix_sign(out.basis.vectors);
    return out;
}

LearnedBasis train_basis(const Mat& X, Rule rule, int units, std::uint64_t seed,
                         const TrainOptions& opts) {
    const Eigen::Index d = X.rows();
    const Eigen::Index n = X.cols();
    if (units < 1 || units > std::min(d, n))
        throw std::invalid_argument("train_basis: need 1 <= units <= min(dim, samples)");

    LearnedBasis basis;
    basis.rule = rule_name(rule);

    Mat data = X;
    const bool renorm = opts.renormalize && (rule == Rule::hebb || rule == Rule::foldiak);
    if (rule == Rule::ica) {
        auto [transform, whitened] = zca_whiten(X, opts.whiten_rank_tolerance);
        basis.whitening = std::move(transform);
        data = std::move(whitened);
    }

    RuleState state = make_rule_state(rule, units, static_cast<int>(d), seed, opts.schedule,
                                      opts.trace_decay, renorm);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    const long max_steps = opts.max_steps > 0 ? opts.max_steps
                                              : static_cast<long>(opts.epochs) * n;
    bool done = false;
    for (int epoch = 0; epoch < opts.epochs && !done; ++epoch) {
        if (rule != Rule::foldiak) {
            std::mt19937_64 rng(derive_seed(seed, "epoch_shuffle", static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (int idx : order) {
            rule_step(state, data.col(idx));
            if (state.weights.cwiseAbs().maxCoeff() > opts.divergence_limit) {
                std::ostringstream msg;
                msg << rule_name(rule) << " diverged (|w| > " << opts.divergence_limit
                    << ") at step " << state.step_count;
                throw NumericError(msg.str());
            }
            if (state.step_count >= max_steps) {
                done = true;
                break;
            }
        }
    }
    basis.vectors = state.weights;
    return basis;
}

nlohmann::json basis_to_json(const LearnedBasis& basis) {
    nlohmann::json j;
    j["identity_id"] = basis.identity_id;
    j["rule"] = basis.rule;
    j["units"] = basis.units();
    j["dim"] = basis.dim();
    std::vector<double> w(basis.vectors.size());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), basis.vectors.rows(), basis.vectors.cols()) = basis.vectors;
    j["weights"] = w;  // row-major
    if (basis.eigenvalues.size() > 0)
        j["eigenvalues"] = std::vector<double>(basis.eigenvalues.data(),
                                               basis.eigenvalues.data() + basis.eigenvalues.size());
    if (basis.whitening) {
        nlohmann::json jw;
        jw["mean"] = std::vector<double>(basis.whitening->mean.data(),
                                         basis.whitening->mean.data() + basis.whitening->mean.size());
        std::vector<double> m(basis.whitening->matrix.size());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            m.data(), basis.whitening->matrix.rows(), basis.whitening->matrix.cols()) =
            basis.whitening->matrix;
        jw["matrix"] = m;
        j["whitening"] = std::move(jw);
    }
    return j;
}

LearnedBasis basis_from_json(const nlohmann::json& j) {
    LearnedBasis basis;
    basis.identity_id = j.at("identity_id").get<int>();
    basis.rule = j.at("rule").get<std::string>();
    const int r = j.at("units").get<int>();
    const int d = j.at("dim").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != r * d)
        throw std::invalid_argument("basis_from_json: weight count does not match units*dim");
    basis.vectors.resize(r, d);
    basis.vectors = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                   Eigen::RowMajor>>(w.data(), r, d);
    if (j.contains("eigenvalues")) {
        const auto l = j.at("eigenvalues").get<std::vector<double>>();
        basis.eigenvalues = Eigen::Map<const Vec>(l.data(), static_cast<Eigen::Index>(l.size()));
    }
    if (j.contains("whitening")) {
        WhiteningTransform t;
        const auto mean = j.at("whitening").at("mean").get<std::vector<double>>();
        t.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        const auto m = j.at("whitening").at("matrix").get<std::vector<double>>();
        if (static_cast<int>(m.size()) != d * d)
            throw std::invalid_argument("basis_from_json: whitening matrix size mismatch");
        t.matrix.resize(d, d);
        t.matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(m.data(), d, d);
        basis.whitening = std::move(t);
    }
    return basis;
}

}  // namespace facepool
