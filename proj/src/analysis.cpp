#include "facepool/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace facepool {

namespace {

constexpr double kAngleTol = 1e-9;

// index of -theta for each theta; throws if the grid is not symmetric
std::vector<int> mirror_index(const Vec& angles) {
    std::vector<int> idx(angles.size(), -1);
    for (Eigen::Index i = 0; i < angles.size(); ++i) {
        for (Eigen::Index j = 0; j < angles.size(); ++j) {
            if (std::abs(angles[i] + angles[j]) < kAngleTol) {
                idx[i] = static_cast<int>(j);
                break;
            }
        }
        if (idx[i] < 0)
            throw std::invalid_argument("symmetry_index: angle grid is not symmetric about 0");
    }
    return idx;
}

}  // namespace

TuningCurve tuning_curve(const Vec& unit, const std::optional<WhiteningTransform>& whitening,
                         const FaceModel3D& face, const AngleGrid& grid, const Encoder& encoder,
                         Nonlinearity nl, const RenderOptions& render_opts) {
    const std::vector<double> angles = grid.angles();
    TuningCurve curve;
    curve.identity_id = face.identity_id;
    curve.angles_deg = Eigen::Map<const Vec>(angles.data(), static_cast<Eigen::Index>(angles.size()));
    curve.responses.resize(curve.angles_deg.size());
    for (Eigen::Index i = 0; i < curve.angles_deg.size(); ++i) {
        Vec feat = encoder.encode_values(render_view(face, curve.angles_deg[i], render_opts).pixels);
        if (whitening) feat = whitening->apply(feat);
        curve.responses[i] = apply_nonlinearity(nl, unit.dot(feat));
    }
    return curve;
}

double symmetry_index(const Vec& angles_deg, const Vec& responses) {
    if (angles_deg.size() != responses.size())
        throw std::invalid_argument("symmetry_index: angle/response length mismatch");
    if (!responses.allFinite())
        throw std::invalid_argument("symmetry_index: non-finite responses");
    const std::vector<int> mirror = mirror_index(angles_deg);
    double even_energy = 0.0, odd_energy = 0.0;
    for (Eigen::Index i = 0; i < responses.size(); ++i) {
        const double e = 0.5 * (responses[i] + responses[mirror[i]]);
        const double o = 0.5 * (responses[i] - responses[mirror[i]]);
        even_energy += e * e;
        odd_energy += o * o;
    }
    const double total = even_energy + odd_energy;
    if (total == 0.0) return 1.0;  // all-zero curve
    return (even_energy - odd_energy) / total;
}

double symmetry_index(const TuningCurve& curve) {
    return symmetry_index(curve.angles_deg, curve.responses);
}

const char* parity_name(Parity p) {
    switch (p) {
        case Parity::even: return "even";
        case Parity::odd: return "odd";
        case Parity::mixed: return "mixed";
    }
    return "?";
}

ParityResult parity_of_vector(const Vec& v, const FeatureReflection& sigma, double tol) {
    const double norm = v.norm();
    if (norm == 0.0) throw std::invalid_argument("parity_of_vector: zero vector");
    const Vec sv = sigma.apply(v);
    const double even_res = (sv - v).norm() / norm;
    const double odd_res = (sv + v).norm() / norm;
    ParityResult out;
    out.residual = std::min(even_res, odd_res);
    if (even_res <= tol)
        out.parity = Parity::even;
    else if (odd_res <= tol)
        out.parity = Parity::odd;
    else
        out.parity = Parity::mixed;
    return out;
}

double roc_auc(const std::vector<double>& scores_same, const std::vector<double>& scores_diff) {
    if (scores_same.empty() || scores_diff.empty())
        throw std::invalid_argument("roc_auc: score lists must be non-empty");
    double wins = 0.0;
    for (double s : scores_same) {
        for (double d : scores_diff) {
            if (s > d)
                wins += 1.0;
            else if (s == d)
                wins += 0.5;
        }
    }
    return wins / (static_cast<double>(scores_same.size()) * static_cast<double>(scores_diff.size()));
}

namespace {

double cosine(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

// Representation of one view under a model: either the raw feature vector or
// the pooled signature over the repetition's template bases.
struct Representer {
    const std::vector<LearnedBasis>* template_bases = nullptr;  // null = raw
    const SignatureSpec* spec = nullptr;

    Vec operator()(const Vec& features) const {
        if (template_bases == nullptr) return features;
        return signature(features, *template_bases, *spec).values;
    }
};

std::vector<int> split_identities(int n_total, int n_template, int n_test, std::mt19937_64& rng) {
    std::vector<int> ids(n_total);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    return ids;  // first n_template are templates, next n_test are tests
}

}  // namespace

AUCTable pair_matching_experiment(const std::vector<Mat>& features_per_identity,
                                  const std::vector<double>& angles_deg,
                                  const std::vector<LearnedBasis>& bases_per_identity,
                                  const SignatureSpec& spec, const PairMatchingOptions& opts,
                                  std::uint64_t seed) {
    const int n_ident = static_cast<int>(features_per_identity.size());
    if (opts.n_template + opts.n_test > n_ident)
        throw std::invalid_argument(
            "pair_matching_experiment: template and test sets exceed available identities");
    if (opts.n_template < 1 || opts.n_test < 2)
        throw std::invalid_argument("pair_matching_experiment: need >= 1 template and >= 2 test identities");
    if (!bases_per_identity.empty() && static_cast<int>(bases_per_identity.size()) != n_ident)
        throw std::invalid_argument("pair_matching_experiment: one basis per identity required");
    const int n_angles = static_cast<int>(angles_deg.size());

    AUCTable table;
    table.radii_deg = opts.radii_deg;
    table.repetitions = opts.repetitions;
    Mat auc(static_cast<Eigen::Index>(opts.radii_deg.size()), opts.repetitions);

    const bool use_signature = !bases_per_identity.empty();
    const int half = opts.pairs_per_radius / 2;

    for (int rep = 0; rep < opts.repetitions; ++rep) {
        std::mt19937_64 rng(derive_seed(seed, "pair_matching_rep", static_cast<std::uint64_t>(rep)));
        const std::vector<int> ids = split_identities(n_ident, opts.n_template, opts.n_test, rng);

        std::vector<LearnedBasis> template_bases;
        if (use_signature)
            for (int t = 0; t < opts.n_template; ++t)
                template_bases.push_back(bases_per_identity[ids[t]]);
        Representer represent{use_signature ? &template_bases : nullptr, &spec};

        // standardized representations of every test view, computed once
        std::vector<std::vector<Vec>> reps(opts.n_test);
        for (int t = 0; t < opts.n_test; ++t) {
            const Mat& feats = features_per_identity[ids[opts.n_template + t]];
            reps[t].resize(n_angles);
            for (int a = 0; a < n_angles; ++a)
                reps[t][a] = standardize(represent(feats.col(a)));
        }

        for (std::size_t ri = 0; ri < opts.radii_deg.size(); ++ri) {
            const double radius = opts.radii_deg[ri];
            std::vector<int> eligible;
            for (int a = 0; a < n_angles; ++a)
                if (std::abs(angles_deg[a]) <= radius + kAngleTol) eligible.push_back(a);
            if (eligible.size() < 2)
                throw std::invalid_argument("pair_matching_experiment: radius admits < 2 angles");

            std::uniform_int_distribution<int> pick_test(0, opts.n_test - 1);
            std::uniform_int_distribution<int> pick_angle(0, static_cast<int>(eligible.size()) - 1);

            // sampled without replacement while distinct pairs remain
            const long max_same = static_cast<long>(opts.n_test) *
                                  (static_cast<long>(eligible.size()) * (eligible.size() - 1) / 2);
            std::set<std::tuple<int, int, int>> seen_same;
            std::vector<double> same_scores, diff_scores;
            same_scores.reserve(half);
            diff_scores.reserve(half);

            while (static_cast<int>(same_scores.size()) < half) {
                const int t = pick_test(rng);
                int a = pick_angle(rng), b = pick_angle(rng);
                if (a == b) continue;
                if (a > b) std::swap(a, b);
                if (static_cast<long>(seen_same.size()) < max_same &&
                    !seen_same.insert({t, a, b}).second)
                    continue;
                same_scores.push_back(cosine(reps[t][eligible[a]], reps[t][eligible[b]]));
            }
            const long max_diff = static_cast<long>(opts.n_test) * (opts.n_test - 1) / 2 *
                                  static_cast<long>(eligible.size()) * eligible.size();
            std::set<std::tuple<int, int, int, int>> seen_diff;
            while (static_cast<int>(diff_scores.size()) < half) {
                int t1 = pick_test(rng), t2 = pick_test(rng);
                if (t1 == t2) continue;
                int a = pick_angle(rng), b = pick_angle(rng);
                if (t1 > t2) {
                    std::swap(t1, t2);
                    std::swap(a, b);
                }
                if (static_cast<long>(seen_diff.size()) < max_diff &&
                    !seen_diff.insert({t1, a, t2, b}).second)
                    continue;
                diff_scores.push_back(cosine(reps[t1][eligible[a]], reps[t2][eligible[b]]));
            }
            auc(static_cast<Eigen::Index>(ri), rep) = roc_auc(same_scores, diff_scores);
        }
    }

    for (Eigen::Index ri = 0; ri < auc.rows(); ++ri) {
        const double mean = auc.row(ri).mean();
        const double var = (auc.row(ri).array() - mean).square().sum() /
                           std::max(1, opts.repetitions - 1);
        table.auc_mean.push_back(mean);
        table.auc_std.push_back(std::sqrt(var));
    }
    return table;
}

double pearson(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: need >= 2 entries");
    const double ma = a.mean(), mb = b.mean();
    const Vec da = a.array() - ma;
    const Vec db = b.array() - mb;
    const double va = da.squaredNorm(), vb = db.squaredNorm();
    if (va == 0.0 || vb == 0.0)
        return std::numeric_limits<double>::quiet_NaN();  // undefined for constant vectors
    return da.dot(db) / std::sqrt(va * vb);
}

SimilarityMatrix similarity_matrix(const std::vector<SampleLabel>& labels,
                                   const std::vector<Vec>& vectors, const std::string& stage) {
    if (vectors.size() < 2)
        throw std::invalid_argument("similarity_matrix: need at least 2 vectors");
    if (labels.size() != vectors.size())
        throw std::invalid_argument("similarity_matrix: label/vector count mismatch");

    // rows ordered by (identity, angle)
    std::vector<std::size_t> order(vectors.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (labels[i].identity_id != labels[j].identity_id)
            return labels[i].identity_id < labels[j].identity_id;
        return labels[i].angle_deg < labels[j].angle_deg;
    });

    const Eigen::Index n = static_cast<Eigen::Index>(vectors.size());
    SimilarityMatrix out;
    out.stage = stage;
    out.values.resize(n, n);
    out.labels.resize(vectors.size());
    for (Eigen::Index i = 0; i < n; ++i) out.labels[i] = labels[order[i]];
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double r = pearson(vectors[order[i]], vectors[order[j]]);
            out.values(i, j) = r;
            out.values(j, i) = r;
        }
    }
    return out;
}

SimilarityExperimentResult similarity_experiment(const std::vector<Mat>& features_per_identity,
                                                 const std::vector<double>& angles_deg,
                                                 const std::vector<LearnedBasis>& bases_per_identity,
                                                 const SignatureSpec& spec,
                                                 const SimilarityExperimentOptions& opts,
                                                 std::uint64_t seed) {
    const int n_ident = static_cast<int>(features_per_identity.size());
    if (opts.n_template + opts.n_test > n_ident)
        throw std::invalid_argument("similarity_experiment: split exceeds available identities");
    const int n_angles = static_cast<int>(angles_deg.size());
    const Eigen::Index n = static_cast<Eigen::Index>(opts.n_test) * n_angles;

    SimilarityExperimentResult result;
    Mat acc_input = Mat::Zero(n, n), acc_simple = Mat::Zero(n, n), acc_pooled = Mat::Zero(n, n);

    std::vector<SampleLabel> labels(static_cast<std::size_t>(n));
    for (int rep = 0; rep < opts.repetitions; ++rep) {
        std::mt19937_64 rng(derive_seed(seed, "simmatrix_rep", static_cast<std::uint64_t>(rep)));
        const std::vector<int> ids = split_identities(n_ident, opts.n_template, opts.n_test, rng);
        std::vector<LearnedBasis> template_bases;
        for (int t = 0; t < opts.n_template; ++t)
            template_bases.push_back(bases_per_identity[ids[t]]);

        std::vector<Vec> v_input, v_simple, v_pooled;
        v_input.reserve(n);
        v_simple.reserve(n);
        v_pooled.reserve(n);
        std::size_t row = 0;
        for (int t = 0; t < opts.n_test; ++t) {
            const Mat& feats = features_per_identity[ids[opts.n_template + t]];
            for (int a = 0; a < n_angles; ++a, ++row) {
                // identity slot (not the sampled id) so matrices align across splits
                labels[row] = {t, angles_deg[a]};
                const Vec x = feats.col(a);
                const StageResponses stage = simple_responses(x, template_bases, spec);
                Eigen::Index total = 0;
                for (const Vec& r : stage.rows) total += r.size();
                Vec flat(total);
                Eigen::Index off = 0;
                for (const Vec& r : stage.rows) {
                    flat.segment(off, r.size()) = r;
                    off += r.size();
                }
                v_input.push_back(x);
                v_simple.push_back(std::move(flat));
                v_pooled.push_back(signature(x, template_bases, spec).values);
            }
        }
        acc_input += similarity_matrix(labels, v_input, "input").values;
        acc_simple += similarity_matrix(labels, v_simple, "simple").values;
        acc_pooled += similarity_matrix(labels, v_pooled, "pooled").values;
    }

    const double k = static_cast<double>(opts.repetitions);
    // labels are sorted identically every split, so reuse the last ordering
    std::stable_sort(labels.begin(), labels.end(), [](const SampleLabel& a, const SampleLabel& b) {
        if (a.identity_id != b.identity_id) return a.identity_id < b.identity_id;
        return a.angle_deg < b.angle_deg;
    });
    result.input = {acc_input / k, labels, "input"};
    result.simple = {acc_simple / k, labels, "simple"};
    result.pooled = {acc_pooled / k, labels, "pooled"};
    return result;
}

std::vector<FieldSample> random_field_samples(int count, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "field_samples"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<FieldSample> out(static_cast<std::size_t>(count));
    for (FieldSample& s : out) {
        s.w.resize(dim);
        s.x.resize(dim);
        s.x_trace.resize(dim);
        for (int i = 0; i < dim; ++i) {
            s.w[i] = gauss(rng);
            s.x[i] = gauss(rng);
            s.x_trace[i] = gauss(rng);
        }
    }
    return out;
}

double equivariance_residual(const FieldFn& field, const FeatureReflection& sigma,
                             const std::vector<FieldSample>& samples) {
    constexpr double kEps = 1e-12;
    double worst = 0.0;
    for (const FieldSample& s : samples) {
        const Mat w(s.w.transpose());
        const Mat sw(sigma.apply(s.w).transpose());
        // sigma is an involution, so sigma^-1 x = sigma x
        const Vec inv_x = sigma.apply(s.x);
        const Vec inv_trace = sigma.apply(s.x_trace);

        const Mat lhs = field(sw, s.x, s.x_trace);
        const Mat rhs_raw = field(w, inv_x, inv_trace);
        const Mat rhs = sigma.apply_to_rows(rhs_raw);
        const double res = (lhs - rhs).norm() / (rhs_raw.norm() + kEps);
        worst = std::max(worst, res);
    }
    return worst;
}

double equivariance_residual(Rule rule, const FeatureReflection& sigma,
                             const std::vector<FieldSample>& samples) {
    FieldFn field = [rule](const Mat& w, const Vec& x, const Vec& x_trace) {
        return vector_field(rule, w, x, rule == Rule::foldiak ? &x_trace : nullptr);
    };
    return equivariance_residual(field, sigma, samples);
}

double reflection_commutator(const Mat& C, const FeatureReflection& sigma) {
    if (C.rows() != C.cols() || C.rows() != sigma.dim())
        throw std::invalid_argument("reflection_commutator: dimension mismatch");
    const Eigen::Index d = C.rows();
    Mat c_sigma(d, d), sigma_c(d, d);
    for (Eigen::Index j = 0; j < d; ++j) c_sigma.col(j) = C.col(sigma.permutation[j]);
    for (Eigen::Index i = 0; i < d; ++i) sigma_c.row(i) = C.row(sigma.permutation[i]);
    const double denom = C.norm();
    if (denom == 0.0) return 0.0;
    return (c_sigma - sigma_c).norm() / denom;
}

std::vector<double> relative_eigengaps(const Vec& eigenvalues) {
    const Eigen::Index r = eigenvalues.size();
    std::vector<double> gaps(static_cast<std::size_t>(r), 0.0);
    if (r == 0) return gaps;
    const double lmax = std::abs(eigenvalues[0]);
    if (lmax == 0.0) return gaps;
    for (Eigen::Index i = 0; i < r; ++i) {
        const double above = i == 0 ? std::numeric_limits<double>::infinity()
                                    : eigenvalues[i - 1] - eigenvalues[i];
        const double below = i == r - 1 ? eigenvalues[i] : eigenvalues[i] - eigenvalues[i + 1];
        gaps[static_cast<std::size_t>(i)] = std::min(above, below) / lmax;
    }
    return gaps;
}

Vec invariance_profile(const Mat& signatures, const Vec& angles_deg, double window_deg) {
    if (signatures.cols() != angles_deg.size())
        throw std::invalid_argument("invariance_profile: one signature column per angle required");
    if (window_deg < 0.0) throw std::invalid_argument("invariance_profile: negative window");
    const double span = angles_deg.maxCoeff() - angles_deg.minCoeff();
    if (2.0 * window_deg > span + kAngleTol)
        throw std::invalid_argument("invariance_profile: window exceeds angle grid");

    // centered windows that fit entirely inside the grid
    std::vector<Eigen::Index> centers;
    for (Eigen::Index c = 0; c < angles_deg.size(); ++c)
        if (angles_deg[c] - window_deg >= angles_deg.minCoeff() - kAngleTol &&
            angles_deg[c] + window_deg <= angles_deg.maxCoeff() + kAngleTol)
            centers.push_back(c);

    Vec profile(static_cast<Eigen::Index>(centers.size()));
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < signatures.rows(); ++k) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index a = 0; a < angles_deg.size(); ++a) {
                if (std::abs(angles_deg[a] - angles_deg[centers[ci]]) <= window_deg + kAngleTol) {
                    const double v = signatures(k, a);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                    sum += v;
                    ++count;
                }
            }
            if (hi == lo) continue;  // constant component contributes 0
            const double mean = sum / count;
            const double denom = mean > 0.0 ? mean : std::abs(mean) + 1e-12;
            worst = std::max(worst, (hi - lo) / denom);
        }
        profile[static_cast<Eigen::Index>(ci)] = worst;
    }
    return profile;
}

}  // namespace facepool
