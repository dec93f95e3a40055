#include "facepool/stimuli.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace facepool {

namespace {

bool mirror_match(const BlobFeature& a, const BlobFeature& b, double tol) {
    return std::abs(a.position.x() + b.position.x()) <= tol &&
           std::abs(a.position.y() - b.position.y()) <= tol &&
           std::abs(a.position.z() - b.position.z()) <= tol &&
           std::abs(a.amplitude - b.amplitude) <= tol &&
           std::abs(a.width - b.width) <= tol;
}

// Pairs each feature with its mirror partner; midline features pair with
// themselves. Unpaired features (asymmetric models) are returned as singles.
struct MirrorPairing {
    std::vector<std::pair<int, int>> pairs;  // i < j, exact mirror partners
    std::vector<int> selfs;                  // on the midline (or unmatched)
};

MirrorPairing pair_features(const FaceModel3D& model) {
    MirrorPairing out;
    const int n = static_cast<int>(model.features.size());
    std::vector<bool> used(n, false);
    for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        const BlobFeature& fi = model.features[i];
        if (fi.position.x() == 0.0) {
            out.selfs.push_back(i);
            used[i] = true;
            continue;
        }
        int partner = -1;
        for (int j = i + 1; j < n; ++j) {
            if (!used[j] && mirror_match(fi, model.features[j], 0.0)) {
                partner = j;
                break;
            }
        }
        used[i] = true;
        if (partner >= 0) {
            used[partner] = true;
            out.pairs.emplace_back(i, partner);
        } else {
            out.selfs.push_back(i);
        }
    }
    return out;
}

// sin/cos with exact odd/even symmetry in the argument's sign.
inline double sym_sin(double x) { return std::copysign(std::sin(std::abs(x)), x); }
inline double sym_cos(double x) { return std::cos(std::abs(x)); }

struct ProjectedFeature {
    double px = 0.0;     // image-plane horizontal
    double py = 0.0;     // image-plane vertical
    double amp = 0.0;    // amplitude after depth scaling
    double width = 0.0;  // blob sigma after projection scaling
};

ProjectedFeature project_feature(const BlobFeature& f, double c, double s,
                                 double max_radius, const RenderOptions& opts) {
    const double x = f.position.x();
    const double y = f.position.y();
    const double z = f.position.z();
    // Rotation about the vertical axis. The products are arranged so that the
    // mirrored feature at the negated angle produces bitwise-negated px and
    // bitwise-identical pz.
    const double px = x * c + z * s;
    const double pz = z * c - x * s;

    ProjectedFeature out;
    out.amp = f.amplitude;
    if (opts.depth_cue > 0.0 && max_radius > 0.0) {
        out.amp *= std::max(0.0, 1.0 + opts.depth_cue * (pz / max_radius));
    }
    if (opts.projection == Projection::perspective) {
        const double denom = std::max(opts.camera_distance - pz, 1e-6);
        const double scale = opts.camera_distance / denom;
        out.px = px * scale;
        out.py = y * scale;
        out.width = f.width * scale;
    } else {
        out.px = px;
        out.py = y;
        out.width = f.width;
    }
    return out;
}

inline double blob_at(const ProjectedFeature& f, double gx, double gy) {
    const double dx = gx - f.px;
    const double dy = gy - f.py;
    const double s2 = 2.0 * f.width * f.width;
    return f.amp * std::exp(-(dx * dx + dy * dy) / s2);
}

}  // namespace

bool is_bilaterally_symmetric(const FaceModel3D& model, double tol) {
    for (const BlobFeature& f : model.features) {
        if (f.position.x() == 0.0) continue;
        bool found = false;
        for (const BlobFeature& g : model.features) {
            if (mirror_match(f, g, tol)) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

std::size_t AngleGrid::count() const {
    if (step_deg <= 0.0 || min_deg > max_deg) return 0;
    return static_cast<std::size_t>(std::floor((max_deg - min_deg) / step_deg + 1e-9)) + 1;
}

bool AngleGrid::symmetric_about_zero() const {
    return count() > 0 && std::abs(min_deg + max_deg) <= 1e-9;
}

std::vector<double> AngleGrid::angles() const {
    const std::size_t n = count();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = min_deg + static_cast<double>(i) * step_deg;
    if (symmetric_about_zero()) {
        // Force exact negation pairs so the mirror identity is testable
        // bit-for-bit downstream.
        for (std::size_t i = 0; i < n / 2; ++i) out[n - 1 - i] = -out[i];
        if (n % 2 == 1) out[n / 2] = 0.0;
    }
    return out;
}

FaceModel3D generate_face(std::uint64_t seed, int n_features, double spread) {
    if (n_features < 4) throw std::invalid_argument("generate_face: n_features must be >= 4");
    if (!(spread > 0.0)) throw std::invalid_argument("generate_face: spread must be > 0");

    FaceModel3D model;
    model.seed = seed;
    model.identity_id = static_cast<int>(seed);
    std::mt19937_64 rng(derive_seed(seed, "face"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int n_midline = (n_features % 2 == 0) ? 2 : 1;
    const int n_pairs = (n_features - n_midline) / 2;

    auto amp = [&] { return 0.5 + 0.5 * unit(rng); };
    auto wid = [&] { return (0.08 + 0.10 * unit(rng)) * spread; };

    for (int i = 0; i < n_midline; ++i) {
        BlobFeature f;
        f.position = {0.0, (-0.7 + 1.2 * unit(rng)) * spread, (0.3 + 0.6 * unit(rng)) * spread};
        f.amplitude = amp();
        f.width = wid();
        model.features.push_back(f);
    }
    for (int i = 0; i < n_pairs; ++i) {
        BlobFeature f;
        f.position = {(0.15 + 0.5 * unit(rng)) * spread, (-0.6 + 1.3 * unit(rng)) * spread,
                      (0.2 + 0.6 * unit(rng)) * spread};
        f.amplitude = amp();
        f.width = wid();
        BlobFeature g = f;
        g.position.x() = -f.position.x();
        model.features.push_back(f);
        model.features.push_back(g);
    }
    return model;
}

ViewImage render_view(const FaceModel3D& model, double angle_deg, const RenderOptions& opts) {
    if (opts.width % 2 == 0)
        throw std::invalid_argument("render_view: image width must be odd");
    if (opts.height < 1 || opts.width < 1)
        throw std::invalid_argument("render_view: image dimensions must be positive");
    if (std::abs(angle_deg) > 180.0)
        throw std::invalid_argument("render_view: |angle_deg| must be <= 180");
    for (const BlobFeature& f : model.features)
        if (!(f.width > 0.0)) throw std::invalid_argument("render_view: feature widths must be > 0");

    const double rad = angle_deg * (M_PI / 180.0);
    const double c = sym_cos(rad);
    const double s = sym_sin(rad);

    double max_radius = 0.0;
    for (const BlobFeature& f : model.features)
        max_radius = std::max(max_radius, f.position.norm());

    std::vector<ProjectedFeature> proj(model.features.size());
    for (std::size_t i = 0; i < model.features.size(); ++i)
        proj[i] = project_feature(model.features[i], c, s, max_radius, opts);

    const MirrorPairing pairing = pair_features(model);

    const int H = opts.height;
    const int W = opts.width;
    const double pitch = 2.0 * opts.extent / static_cast<double>(W - 1);
    const double half_w = static_cast<double>(W - 1) / 2.0;
    const double half_h = static_cast<double>(H - 1) / 2.0;

    ViewImage img;
    img.angle_deg = angle_deg;
    img.identity_id = model.identity_id;
    img.pixels.resize(H, W);

    for (int r = 0; r < H; ++r) {
        const double gy = (half_h - static_cast<double>(r)) * pitch;
        for (int col = 0; col < W; ++col) {
            const double gx = (static_cast<double>(col) - half_w) * pitch;
            double raw = 0.0;
            // Mirror pairs are accumulated as a single commutative addition;
            // this is what makes render(theta) == reflect(render(-theta))
            // exact and not merely close.
            for (const auto& [i, j] : pairing.pairs) raw += blob_at(proj[i], gx, gy) + blob_at(proj[j], gx, gy);
            for (int i : pairing.selfs) raw += blob_at(proj[i], gx, gy);
            img.pixels(r, col) = 1.0 - std::exp(-raw);
        }
    }
    return img;
}

ViewImage render_view(const FaceModel3D& model, double angle_deg, int height, int width,
                      double depth_cue) {
    RenderOptions opts;
    opts.height = height;
    opts.width = width;
    opts.depth_cue = depth_cue;
    return render_view(model, angle_deg, opts);
}

OrbitSet build_orbit(const FaceModel3D& model, const AngleGrid& grid, const RenderOptions& opts) {
    if (grid.step_deg <= 0.0 || grid.min_deg > grid.max_deg || grid.count() == 0)
        throw std::invalid_argument("build_orbit: empty or invalid angle grid");

    OrbitSet orbit;
    orbit.identity_id = model.identity_id;
    orbit.grid = grid;
    orbit.reflection_closed = grid.symmetric_about_zero();
    for (double a : grid.angles()) orbit.views.push_back(render_view(model, a, opts));
    return orbit;
}

ViewImage reflect_image(const ViewImage& img) {
    if (img.width() % 2 == 0)
        throw std::invalid_argument("reflect_image: image width must be odd");
    ViewImage out = img;
    out.pixels = img.pixels.rowwise().reverse();
    out.angle_deg = -img.angle_deg;
    return out;
}

nlohmann::json orbit_to_json(const OrbitSet& orbit) {
    nlohmann::json j;
    j["identity_id"] = orbit.identity_id;
    j["angle_grid"] = {{"min_deg", orbit.grid.min_deg},
                       {"max_deg", orbit.grid.max_deg},
                       {"step_deg", orbit.grid.step_deg}};
    j["reflection_closed"] = orbit.reflection_closed;
    if (!orbit.views.empty()) {
        j["height"] = orbit.views.front().height();
        j["width"] = orbit.views.front().width();
    } else {
        j["height"] = 0;
        j["width"] = 0;
    }
    nlohmann::json views = nlohmann::json::array();
    for (const ViewImage& v : orbit.views) {
        nlohmann::json jv;
        jv["angle_deg"] = v.angle_deg;
        std::vector<double> px(v.pixels.size());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            px.data(), v.pixels.rows(), v.pixels.cols()) = v.pixels;
        jv["pixels"] = px;
        views.push_back(std::move(jv));
    }
    j["views"] = std::move(views);
    return j;
}

OrbitSet orbit_from_json(const nlohmann::json& j) {
    OrbitSet orbit;
    orbit.identity_id = j.at("identity_id").get<int>();
    orbit.grid.min_deg = j.at("angle_grid").at("min_deg").get<double>();
    orbit.grid.max_deg = j.at("angle_grid").at("max_deg").get<double>();
    orbit.grid.step_deg = j.at("angle_grid").at("step_deg").get<double>();
    orbit.reflection_closed = j.at("reflection_closed").get<bool>();
    const int H = j.at("height").get<int>();
    const int W = j.at("width").get<int>();
    for (const auto& jv : j.at("views")) {
        ViewImage v;
        v.identity_id = orbit.identity_id;
        v.angle_deg = jv.at("angle_deg").get<double>();
        const auto px = jv.at("pixels").get<std::vector<double>>();
        if (static_cast<int>(px.size()) != H * W)
            throw std::invalid_argument("orbit_from_json: pixel count does not match height*width");
        v.pixels.resize(H, W);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
            px.data(), H, W);
        v.pixels = m;
        orbit.views.push_back(std::move(v));
    }
    return orbit;
}

}  // namespace facepool
