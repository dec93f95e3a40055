#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace facepool {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when an online learning rule produces non-finite or unbounded
/// weights (pure Hebb without renormalization is expected to end up here).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when a dataset cannot support the requested operation,
/// e.g. whitening a set of identical samples.
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(std::string_view s);

/// Stable sub-seed derivation: one master seed, many named streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index);

std::string hex64(std::uint64_t v);

}  // namespace facepool
