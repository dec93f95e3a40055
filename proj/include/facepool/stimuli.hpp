#pragma once

#include "facepool/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <vector>

namespace facepool {

/// One isotropic Gaussian blob of the 3D face model. Positions are in model
/// units (the head roughly fills the unit ball), x is the horizontal axis,
/// y the vertical (rotation) axis, z points toward the viewer.
struct BlobFeature {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    double amplitude = 1.0;
    double width = 0.1;
};

/// Bilaterally symmetric blob face: every feature at (x,y,z) has a mirror
/// partner at (-x,y,z) with identical amplitude and width (midline features
/// are their own mirror).
struct FaceModel3D {
    int identity_id = 0;
    std::vector<BlobFeature> features;
    std::uint64_t seed = 0;
};

/// Exact-equality symmetry check (tol > 0 relaxes the position match).
bool is_bilaterally_symmetric(const FaceModel3D& model, double tol = 0.0);

struct ViewImage {
    Mat pixels;  // H x W, values in [0,1]
    double angle_deg = 0.0;
    int identity_id = 0;

    int height() const { return static_cast<int>(pixels.rows()); }
    int width() const { return static_cast<int>(pixels.cols()); }
};

struct AngleGrid {
    double min_deg = -95.0;
    double max_deg = 95.0;
    double step_deg = 5.0;

    std::size_t count() const;
    /// Grid angles in order. On grids symmetric about 0 the returned values
    /// satisfy angle[i] == -angle[n-1-i] exactly.
    std::vector<double> angles() const;
    bool symmetric_about_zero() const;
};

enum class Projection { orthographic, perspective };

struct RenderOptions {
    int height = 32;
    int width = 33;  // must be odd
    double depth_cue = 0.3;
    Projection projection = Projection::orthographic;
    double extent = 1.25;           // image half-width in model units
    double camera_distance = 4.0;   // perspective only
};

struct OrbitSet {
    std::vector<ViewImage> views;  // ordered by angle
    int identity_id = 0;
    AngleGrid grid;
    bool reflection_closed = false;
};

/// Procedurally generates a bilaterally symmetric face. Midline features sit
/// exactly on x = 0; the rest come in mirror pairs. Deterministic in seed.
FaceModel3D generate_face(std::uint64_t seed, int n_features, double spread);

/// Rotates the model about the vertical axis, projects, and renders each
/// feature as a Gaussian blob. With depth_cue > 0 nearer features are
/// brighter. For symmetric models, render(theta) is the exact pixel mirror
/// of render(-theta) under orthographic projection (the sum over each mirror
/// feature pair is formed as one commutative addition, so the identity holds
/// bit-for-bit).
ViewImage render_view(const FaceModel3D& model, double angle_deg,
                      const RenderOptions& opts = {});
ViewImage render_view(const FaceModel3D& model, double angle_deg, int height,
                      int width, double depth_cue);

OrbitSet build_orbit(const FaceModel3D& model, const AngleGrid& grid,
                     const RenderOptions& opts = {});

/// Horizontal flip about the central pixel column. Exact involution.
ViewImage reflect_image(const ViewImage& img);

nlohmann::json orbit_to_json(const OrbitSet& orbit);
OrbitSet orbit_from_json(const nlohmann::json& j);

}  // namespace facepool
