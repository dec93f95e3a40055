#include "facepool/signature.hpp"

#include <cmath>
#include <sstream>

namespace facepool {

const char* nonlinearity_name(Nonlinearity nl) {
    switch (nl) {
        case Nonlinearity::square: return "square";
        case Nonlinearity::abs_value: return "abs";
        case Nonlinearity::half_wave: return "half_wave";
    }
    return "?";
}

Nonlinearity nonlinearity_from_name(const std::string& name) {
    if (name == "square") return Nonlinearity::square;
    if (name == "abs") return Nonlinearity::abs_value;
    if (name == "half_wave") return Nonlinearity::half_wave;
    throw std::invalid_argument("unknown nonlinearity: " + name);
}

std::uint64_t SignatureSpec::fingerprint() const {
    std::ostringstream key;
    key << nonlinearity_name(nonlinearity) << ";"
        << (pooling == PoolingMode::mean ? "mean" : "sum") << ";" << normalize_input;
    return fnv1a64(key.str());
}

double apply_nonlinearity(Nonlinearity nl, double z) {
    switch (nl) {
        case Nonlinearity::square: return z * z;
        case Nonlinearity::abs_value: return std::abs(z);
        case Nonlinearity::half_wave: return z > 0.0 ? z : 0.0;
    }
    return z;
}

Vec standardize(const Vec& v) {
    if (v.size() == 0) return v;
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size());
    const double sd = std::sqrt(var);
    if (sd < 1e-300) return Vec::Zero(v.size());
    return (v.array() - mean).matrix() / sd;
}

StageResponses simple_responses(const Vec& x, const std::vector<LearnedBasis>& bases,
                                const SignatureSpec& spec) {
    const Vec input = spec.normalize_input ? standardize(x) : x;
    StageResponses out;
    out.rows.reserve(bases.size());
    for (const LearnedBasis& basis : bases) {
        if (basis.dim() != input.size())
            throw std::invalid_argument("simple_responses: feature dimension does not match basis");
        const Vec z = basis.whitening ? basis.whitening->apply(input) : input;
        Vec resp = basis.vectors * z;
        for (Eigen::Index i = 0; i < resp.size(); ++i)
            resp[i] = apply_nonlinearity(spec.nonlinearity, resp[i]);
        out.rows.push_back(std::move(resp));
    }
    return out;
}

Signature signature(const Vec& x, const std::vector<LearnedBasis>& bases,
                    const SignatureSpec& spec) {
    const StageResponses stage = simple_responses(x, bases, spec);
    Signature sig;
    sig.spec_fingerprint = spec.fingerprint();
    sig.values.resize(static_cast<Eigen::Index>(stage.rows.size()));
    for (std::size_t k = 0; k < stage.rows.size(); ++k) {
        const double total = stage.rows[k].sum();
        sig.values[static_cast<Eigen::Index>(k)] =
            spec.pooling == PoolingMode::sum
                ? total
                : total / static_cast<double>(stage.rows[k].size());
    }
    return sig;
}

LearnedBasis view_based_basis(const Mat& orbit_features) {
    if (orbit_features.cols() < 1)
        throw std::invalid_argument("view_based_basis: orbit must be non-empty");
    LearnedBasis basis;
    basis.rule = "view_based";
    basis.vectors = orbit_features.transpose();
    return basis;
}

}  // namespace facepool
