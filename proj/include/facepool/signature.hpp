#pragma once

#include "facepool/common.hpp"
#include "facepool/learning.hpp"

#include <cstdint>
#include <vector>

namespace facepool {

enum class Nonlinearity { square, abs_value, half_wave };
enum class PoolingMode { mean, sum };

const char* nonlinearity_name(Nonlinearity nl);
Nonlinearity nonlinearity_from_name(const std::string& name);

struct SignatureSpec {
    Nonlinearity nonlinearity = Nonlinearity::square;
    PoolingMode pooling = PoolingMode::mean;
    bool normalize_input = false;  // zero-mean/unit-std before dot products

    std::uint64_t fingerprint() const;
};

double apply_nonlinearity(Nonlinearity nl, double z);

/// Zero-mean, unit-standard-deviation rescaling. A constant vector maps to
/// zeros.
Vec standardize(const Vec& v);

/// Per-basis simple-cell responses eta(<x, w_i>); row k holds the responses
/// for basis k. Bases carrying a whitening transform (ICA) have it applied
/// to the input first.
struct StageResponses {
    std::vector<Vec> rows;
};

struct Signature {
    Vec values;  // one pooled entry per basis
    std::uint64_t spec_fingerprint = 0;
};

StageResponses simple_responses(const Vec& x, const std::vector<LearnedBasis>& bases,
                                const SignatureSpec& spec);

Signature signature(const Vec& x, const std::vector<LearnedBasis>& bases,
                    const SignatureSpec& spec);

/// Stored-view model: the templates are the encoded views verbatim
/// (columns of orbit_features become basis rows).
LearnedBasis view_based_basis(const Mat& orbit_features);

}  // namespace facepool
