#include "facepool/encoder.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace facepool {

namespace {

constexpr double kGaborAspect = 0.3;        // gamma
constexpr double kGaborSigmaPerLambda = 0.8;
constexpr double kOrientTol = 1e-9;

double wrap_orientation(double phi) {
    phi = std::fmod(phi, M_PI);
    if (phi < 0.0) phi += M_PI;
    if (phi > M_PI - kOrientTol) phi = 0.0;
    return phi;
}

// Symmetric (edge-repeating) boundary index: ...cba|abc...|cba...
int pad_symmetric(int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
}

Mat gabor_kernel(int size, double lambda, double phi, double phase) {
    const int h = size / 2;
    const double sigma = kGaborSigmaPerLambda * lambda;
    const double c = std::cos(phi), s = std::sin(phi);
    Mat k(size, size);
    for (int r = 0; r < size; ++r) {
        const double v = static_cast<double>(h - r);  // up is +v
        for (int col = 0; col < size; ++col) {
            const double u = static_cast<double>(col - h);
            const double ur = u * c + v * s;
            const double vr = -u * s + v * c;
            const double envelope =
                std::exp(-(ur * ur + kGaborAspect * kGaborAspect * vr * vr) / (2.0 * sigma * sigma));
            k(r, col) = envelope * std::cos(2.0 * M_PI * ur / lambda + phase);
        }
    }
    k.array() -= k.mean();
    const double norm = k.norm();
    if (norm > 0.0) k /= norm;
    return k;
}

}  // namespace

std::vector<double> EncoderSpec::effective_orientations() const {
    if (!orientations.empty()) {
        std::vector<double> out;
        for (double phi : orientations) out.push_back(wrap_orientation(phi));
        std::sort(out.begin(), out.end());
        return out;
    }
    if (n_orientations < 1)
        throw std::invalid_argument("EncoderSpec: n_orientations must be >= 1");
    std::vector<double> out(n_orientations);
    for (int k = 0; k < n_orientations; ++k)
        out[k] = M_PI * static_cast<double>(k) / static_cast<double>(n_orientations);
    return out;
}

Vec FeatureReflection::apply(const Vec& v) const {
    if (v.size() != static_cast<Eigen::Index>(permutation.size()))
        throw std::invalid_argument("FeatureReflection: dimension mismatch");
    Vec out(v.size());
    for (std::size_t i = 0; i < permutation.size(); ++i) out[i] = v[permutation[i]];
    return out;
}

Mat FeatureReflection::apply_to_rows(const Mat& m) const {
    Mat out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        out.row(r) = apply(Vec(m.row(r).transpose())).transpose();
    return out;
}

bool FeatureReflection::is_involution() const {
    for (std::size_t i = 0; i < permutation.size(); ++i) {
        const int p = permutation[i];
        if (p < 0 || p >= static_cast<int>(permutation.size())) return false;
        if (permutation[p] != static_cast<int>(i)) return false;
    }
    return true;
}

Encoder::Encoder(const EncoderSpec& spec, int height, int width)
    : spec_(spec), height_(height), width_(width) {
    if (width_ % 2 == 0 || width_ < 1 || height_ < 1)
        throw std::invalid_argument("Encoder: image width must be odd and dims positive");

    if (spec_.kind == EncoderKind::raw) {
        dim_ = height_ * width_;
        reflection_.permutation.resize(dim_);
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c)
                reflection_.permutation[r * width_ + c] = r * width_ + (width_ - 1 - c);
    } else {
        if (spec_.kernel_size % 2 == 0 || spec_.kernel_size < 1)
            throw std::invalid_argument("Encoder: kernel_size must be odd");
        if (spec_.kernel_size > std::min(height_, width_))
            throw std::invalid_argument("Encoder: kernel_size exceeds image size");
        if (spec_.wavelengths.empty())
            throw std::invalid_argument("Encoder: wavelengths must be non-empty");
        for (double l : spec_.wavelengths)
            if (!(l > 0.0)) throw std::invalid_argument("Encoder: wavelengths must be > 0");
        if (spec_.pool_window < 1 || spec_.pool_stride < 1)
            throw std::invalid_argument("Encoder: pooling window and stride must be >= 1");
        if (spec_.pool_window > std::min(height_, width_))
            throw std::invalid_argument("Encoder: pooling window exceeds image size");
        if ((width_ - spec_.pool_window) % spec_.pool_stride != 0)
            throw std::invalid_argument(
                "Encoder: (width - pool_window) must be divisible by pool_stride so the "
                "pooling grid is mirror-symmetric");

        const std::vector<double> phis = spec_.effective_orientations();
        // Mirror closure of the orientation bank: phi pairs with pi - phi.
        std::vector<int> mirror_orient(phis.size(), -1);
        for (std::size_t a = 0; a < phis.size(); ++a) {
            const double target = wrap_orientation(M_PI - phis[a]);
            for (std::size_t b = 0; b < phis.size(); ++b) {
                if (std::abs(phis[b] - target) < kOrientTol) {
                    mirror_orient[a] = static_cast<int>(b);
                    break;
                }
            }
            if (mirror_orient[a] < 0) {
                std::ostringstream msg;
                msg << "Encoder: orientation bank not closed under mirroring; orientation "
                    << phis[a] << " rad has no partner at " << target << " rad";
                throw std::invalid_argument(msg.str());
            }
        }

        const bool even_phase = std::abs(std::sin(spec_.phase)) < 1e-9;
        const bool odd_phase = std::abs(std::cos(spec_.phase)) < 1e-9;
        if (!even_phase && !odd_phase)
            throw std::invalid_argument(
                "Encoder: phase must be a multiple of pi/2 for reflection to act as a "
                "permutation");
        bool has_self_paired = false;
        for (std::size_t a = 0; a < phis.size(); ++a)
            if (mirror_orient[a] == static_cast<int>(a)) has_self_paired = true;
        if (odd_phase && has_self_paired && spec_.rectifier != Rectifier::abs_value)
            throw std::invalid_argument(
                "Encoder: odd-phase filters at self-mirrored orientations require the abs "
                "rectifier");

        // Kernels for phi > pi/2 are built as exact horizontal flips of their
        // mirror partner, so the channel permutation is exact by construction.
        const int n_orient = static_cast<int>(phis.size());
        const int n_lambda = static_cast<int>(spec_.wavelengths.size());
        kernels_.resize(static_cast<std::size_t>(n_orient) * n_lambda);
        mirror_channel_.assign(kernels_.size(), -1);
        for (int l = 0; l < n_lambda; ++l) {
            for (int o = 0; o < n_orient; ++o) {
                const int ch = l * n_orient + o;
                const int mo = mirror_orient[o];
                mirror_channel_[ch] = l * n_orient + mo;
                if (mo >= o) {
                    kernels_[ch] = gabor_kernel(spec_.kernel_size, spec_.wavelengths[l], phis[o],
                                                spec_.phase);
                } else {
                    kernels_[ch] = kernels_[l * n_orient + mo].rowwise().reverse();
                }
            }
        }

        pooled_cols_ = (width_ - spec_.pool_window) / spec_.pool_stride + 1;
        pooled_rows_ = (height_ - spec_.pool_window) / spec_.pool_stride + 1;
        const int per_channel = pooled_rows_ * pooled_cols_;
        dim_ = static_cast<int>(kernels_.size()) * per_channel;

        reflection_.permutation.resize(dim_);
        for (std::size_t ch = 0; ch < kernels_.size(); ++ch) {
            const int mch = mirror_channel_[ch];
            for (int i = 0; i < pooled_rows_; ++i) {
                for (int j = 0; j < pooled_cols_; ++j) {
                    const int src = static_cast<int>(ch) * per_channel + i * pooled_cols_ + j;
                    const int dst = mch * per_channel + i * pooled_cols_ + (pooled_cols_ - 1 - j);
                    reflection_.permutation[src] = dst;
                }
            }
        }
    }

    std::ostringstream key;
    key << "kind=" << (spec_.kind == EncoderKind::raw ? "raw" : "c1") << ";H=" << height_
        << ";W=" << width_;
    if (spec_.kind == EncoderKind::c1) {
        key << ";phis=";
        for (double p : spec_.effective_orientations()) key << p << ",";
        key << ";lambdas=";
        for (double l : spec_.wavelengths) key << l << ",";
        key << ";k=" << spec_.kernel_size << ";phase=" << spec_.phase
            << ";pool=" << spec_.pool_window << "/" << spec_.pool_stride
            << ";rect=" << (spec_.rectifier == Rectifier::abs_value ? "abs" : "halfwave");
    }
    fingerprint_ = fnv1a64(key.str());
}

Mat Encoder::convolve_same(const Mat& img, const Mat& kernel) const {
    const int H = static_cast<int>(img.rows());
    const int W = static_cast<int>(img.cols());
    const int kh = static_cast<int>(kernel.rows()) / 2;
    Mat out(H, W);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double acc = 0.0;
            for (int dv = -kh; dv <= kh; ++dv) {
                const int rr = pad_symmetric(r + dv, H);
                for (int du = -kh; du <= kh; ++du) {
                    const int cc = pad_symmetric(c + du, W);
                    acc += img(rr, cc) * kernel(dv + kh, du + kh);
                }
            }
            out(r, c) = acc;
        }
    }
    return out;
}

Vec Encoder::encode_values(const Mat& pixels) const {
    if (pixels.rows() != height_ || pixels.cols() != width_)
        throw std::invalid_argument("Encoder: image dimensions do not match encoder");

    if (spec_.kind == EncoderKind::raw) {
        Vec out(dim_);
        for (int r = 0; r < height_; ++r)
            for (int c = 0; c < width_; ++c) out[r * width_ + c] = pixels(r, c);
        return out;
    }

    const int per_channel = pooled_rows_ * pooled_cols_;
    Vec out(dim_);
    for (std::size_t ch = 0; ch < kernels_.size(); ++ch) {
        Mat resp = convolve_same(pixels, kernels_[ch]);
        if (spec_.rectifier == Rectifier::abs_value)
            resp = resp.array().abs();
        else
            resp = resp.array().max(0.0);
        for (int i = 0; i < pooled_rows_; ++i) {
            const int r0 = i * spec_.pool_stride;
            for (int j = 0; j < pooled_cols_; ++j) {
                const int c0 = j * spec_.pool_stride;
                out[static_cast<int>(ch) * per_channel + i * pooled_cols_ + j] =
                    resp.block(r0, c0, spec_.pool_window, spec_.pool_window).maxCoeff();
            }
        }
    }
    return out;
}

FeatureVector Encoder::encode(const ViewImage& img) const {
    return FeatureVector{encode_values(img.pixels), fingerprint_};
}

Encoder build_encoder(const EncoderSpec& spec, int height, int width) {
    return Encoder(spec, height, width);
}

const FeatureReflection& feature_reflection(const Encoder& encoder) {
    return encoder.reflection();
}

Mat encode_orbit(const OrbitSet& orbit, const Encoder& encoder) {
    Mat out(encoder.dim(), static_cast<Eigen::Index>(orbit.views.size()));
    for (std::size_t i = 0; i < orbit.views.size(); ++i)
        out.col(static_cast<Eigen::Index>(i)) = encoder.encode_values(orbit.views[i].pixels);
    return out;
}

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec) {
    nlohmann::json j;
    j["kind"] = spec.kind == EncoderKind::raw ? "raw" : "c1";
    j["n_orientations"] = spec.n_orientations;
    if (!spec.orientations.empty()) j["orientations"] = spec.orientations;
    j["wavelengths"] = spec.wavelengths;
    j["kernel_size"] = spec.kernel_size;
    j["phase"] = spec.phase;
    j["pool_window"] = spec.pool_window;
    j["pool_stride"] = spec.pool_stride;
    j["rectifier"] = spec.rectifier == Rectifier::abs_value ? "abs" : "half_wave";
    return j;
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
    EncoderSpec spec;
    const std::string kind = j.value("kind", "c1");
    if (kind == "raw")
        spec.kind = EncoderKind::raw;
    else if (kind == "c1")
        spec.kind = EncoderKind::c1;
    else
        throw std::invalid_argument("encoder spec: kind must be 'raw' or 'c1'");
    spec.n_orientations = j.value("n_orientations", spec.n_orientations);
    if (j.contains("orientations")) spec.orientations = j.at("orientations").get<std::vector<double>>();
    if (j.contains("wavelengths")) spec.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    spec.kernel_size = j.value("kernel_size", spec.kernel_size);
    spec.phase = j.value("phase", spec.phase);
    spec.pool_window = j.value("pool_window", spec.pool_window);
    spec.pool_stride = j.value("pool_stride", spec.pool_stride);
    const std::string rect = j.value("rectifier", "abs");
    if (rect == "abs")
        spec.rectifier = Rectifier::abs_value;
    else if (rect == "half_wave")
        spec.rectifier = Rectifier::half_wave;
    else
        throw std::invalid_argument("encoder spec: rectifier must be 'abs' or 'half_wave'");
    return spec;
}

}  // namespace facepool
