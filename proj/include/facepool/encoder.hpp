#pragma once

#include "facepool/common.hpp"
#include "facepool/stimuli.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <vector>

namespace facepool {

enum class EncoderKind { raw, c1 };
enum class Rectifier { abs_value, half_wave };

/// Configuration of the feature front end. For kind == c1 the image is
/// convolved with a Gabor bank (one channel per wavelength x orientation,
/// symmetric boundary padding), rectified, and max-pooled over local
/// windows. The orientation set must be closed under phi -> pi - phi so
/// that image reflection acts on feature space as a pure permutation.
struct EncoderSpec {
    EncoderKind kind = EncoderKind::c1;
    int n_orientations = 4;
    std::vector<double> orientations;  // radians in [0, pi); empty = evenly spaced
    std::vector<double> wavelengths = {3.5, 4.6};
    int kernel_size = 9;  // odd
    double phase = 0.0;   // radians; 0 = even (cosine) Gabor
    int pool_window = 3;
    int pool_stride = 2;
    Rectifier rectifier = Rectifier::abs_value;

    /// Orientation bank actually used (explicit list, or evenly spaced).
    std::vector<double> effective_orientations() const;
};

struct FeatureVector {
    Vec values;
    std::uint64_t encoder_fingerprint = 0;
};

/// Feature-space image of the reflection group generator: a permutation
/// sigma with encode(reflect(img)) == sigma(encode(img)).
struct FeatureReflection {
    std::vector<int> permutation;

    Vec apply(const Vec& v) const;
    Mat apply_to_rows(const Mat& m) const;
    bool is_involution() const;
    int dim() const { return static_cast<int>(permutation.size()); }
};

class Encoder {
public:
    Encoder(const EncoderSpec& spec, int height, int width);

    FeatureVector encode(const ViewImage& img) const;
    Vec encode_values(const Mat& pixels) const;

    const FeatureReflection& reflection() const { return reflection_; }
    const EncoderSpec& spec() const { return spec_; }
    std::uint64_t fingerprint() const { return fingerprint_; }

    int dim() const { return dim_; }
    int height() const { return height_; }
    int width() const { return width_; }
    int pooled_rows() const { return pooled_rows_; }
    int pooled_cols() const { return pooled_cols_; }
    int n_channels() const { return static_cast<int>(kernels_.size()); }

private:
    EncoderSpec spec_;
    int height_ = 0;
    int width_ = 0;
    int dim_ = 0;
    int pooled_rows_ = 0;
    int pooled_cols_ = 0;
    std::vector<Mat> kernels_;          // channel = wavelength-major
    std::vector<int> mirror_channel_;   // channel index under reflection
    FeatureReflection reflection_;
    std::uint64_t fingerprint_ = 0;

    Mat convolve_same(const Mat& img, const Mat& kernel) const;
};

Encoder build_encoder(const EncoderSpec& spec, int height, int width);

/// sigma such that encode(reflect(img)) == sigma(encode(img)).
const FeatureReflection& feature_reflection(const Encoder& encoder);

/// Encoded orbit views as columns of a d x n matrix.
Mat encode_orbit(const OrbitSet& orbit, const Encoder& encoder);

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

}  // namespace facepool
