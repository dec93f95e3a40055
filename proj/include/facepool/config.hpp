#pragma once

#include "facepool/encoder.hpp"
#include "facepool/signature.hpp"
#include "facepool/stimuli.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>

namespace facepool {

/// Raised on malformed run configs; the message carries the JSON path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StimuliConfig {
    int n_identities = 10;
    int n_features = 12;
    double spread = 1.0;
    int height = 32;
    int width = 33;
    double depth_cue = 0.3;
    AngleGrid grid{-95.0, 95.0, 5.0};
    Projection projection = Projection::orthographic;

    RenderOptions render_options() const;
};

struct LearningConfig {
    std::string rule = "pca";  // pca | view_based | hebb | oja | sanger | foldiak | ica
    int n_components = 5;
    int epochs = 200;
    double alpha0 = 0.05;
    double tau = 1000.0;
    double trace_decay = 0.2;
    bool renormalize = true;
    double whiten_rank_tolerance = 1e-10;
};

struct AucExperimentConfig {
    int repetitions = 5;
    int n_template = 20;
    int n_test = 20;
    double radius_min_deg = 5.0;
    double radius_max_deg = 95.0;
    double radius_step_deg = 10.0;
    int pairs_per_radius = 600;

    std::vector<double> radii() const;
};

struct TuningExperimentConfig {
    int n_units = 5;
};

struct SimilarityExperimentConfig {
    int repetitions = 10;
    int n_template = 5;
    int n_test = 5;
};

struct ExperimentsConfig {
    std::string selection = "all";  // auc | tuning | simmatrix | verify | all
    AucExperimentConfig auc;
    TuningExperimentConfig tuning;
    SimilarityExperimentConfig simmatrix;
};

struct RunConfig {
    std::uint64_t master_seed = 0;
    std::string output_dir = "runs";
    StimuliConfig stimuli;
    EncoderSpec encoder;
    LearningConfig learning;
    SignatureSpec signature;
    ExperimentsConfig experiments;

    /// Strict parse: unknown keys are rejected with their JSON path.
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Hash of the canonical JSON form; names the run directory and is
    /// embedded in every artifact.
    std::string hash() const;

    void validate() const;
};

RunConfig load_config(const std::string& path);

}  // namespace facepool
