#include "facepool/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace facepool {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError(path + "/" + key + ": unknown key");
}

template <typename T>
T get_or(const json& j, const char* key, const T& fallback, const std::string& path) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "/" + key + ": wrong type");
    }
}

StimuliConfig parse_stimuli(const json& j) {
    const std::string path = "/stimuli";
    reject_unknown_keys(j, {"n_identities", "n_features", "spread", "height", "width", "depth_cue",
                            "angle_min_deg", "angle_max_deg", "angle_step_deg", "projection"},
                        path);
    StimuliConfig c;
    c.n_identities = get_or(j, "n_identities", c.n_identities, path);
    c.n_features = get_or(j, "n_features", c.n_features, path);
    c.spread = get_or(j, "spread", c.spread, path);
    c.height = get_or(j, "height", c.height, path);
    c.width = get_or(j, "width", c.width, path);
    c.depth_cue = get_or(j, "depth_cue", c.depth_cue, path);
    c.grid.min_deg = get_or(j, "angle_min_deg", c.grid.min_deg, path);
    c.grid.max_deg = get_or(j, "angle_max_deg", c.grid.max_deg, path);
    c.grid.step_deg = get_or(j, "angle_step_deg", c.grid.step_deg, path);
    const std::string proj = get_or<std::string>(j, "projection", "orthographic", path);
    if (proj == "orthographic")
        c.projection = Projection::orthographic;
    else if (proj == "perspective")
        c.projection = Projection::perspective;
    else
        throw ConfigError(path + "/projection: must be 'orthographic' or 'perspective'");
    return c;
}

EncoderSpec parse_encoder(const json& j) {
    const std::string path = "/encoder";
    reject_unknown_keys(j, {"kind", "n_orientations", "orientations_deg", "wavelengths",
                            "kernel_size", "phase_deg", "pool_window", "pool_stride", "rectifier"},
                        path);
    EncoderSpec spec;
    const std::string kind = get_or<std::string>(j, "kind", "c1", path);
    if (kind == "raw")
        spec.kind = EncoderKind::raw;
    else if (kind == "c1")
        spec.kind = EncoderKind::c1;
    else
        throw ConfigError(path + "/kind: must be 'raw' or 'c1'");
    spec.n_orientations = get_or(j, "n_orientations", spec.n_orientations, path);
    if (j.contains("orientations_deg")) {
        const auto deg = get_or<std::vector<double>>(j, "orientations_deg", {}, path);
        for (double d : deg) spec.orientations.push_back(d * M_PI / 180.0);
    }
    spec.wavelengths = get_or(j, "wavelengths", spec.wavelengths, path);
    spec.kernel_size = get_or(j, "kernel_size", spec.kernel_size, path);
    spec.phase = get_or(j, "phase_deg", 0.0, path) * M_PI / 180.0;
    spec.pool_window = get_or(j, "pool_window", spec.pool_window, path);
    spec.pool_stride = get_or(j, "pool_stride", spec.pool_stride, path);
    const std::string rect = get_or<std::string>(j, "rectifier", "abs", path);
    if (rect == "abs")
        spec.rectifier = Rectifier::abs_value;
    else if (rect == "half_wave")
        spec.rectifier = Rectifier::half_wave;
    else
        throw ConfigError(path + "/rectifier: must be 'abs' or 'half_wave'");
    return spec;
}

LearningConfig parse_learning(const json& j) {
    const std::string path = "/learning";
    reject_unknown_keys(j, {"rule", "n_components", "epochs", "alpha0", "tau", "trace_decay",
                            "renormalize", "whiten_rank_tolerance"},
                        path);
    LearningConfig c;
    c.rule = get_or<std::string>(j, "rule", c.rule, path);
    static const std::set<std::string> rules = {"pca",     "view_based", "hebb", "oja",
                                                "sanger",  "foldiak",    "ica"};
    if (!rules.count(c.rule)) throw ConfigError(path + "/rule: unknown rule '" + c.rule + "'");
    c.n_components = get_or(j, "n_components", c.n_components, path);
    c.epochs = get_or(j, "epochs", c.epochs, path);
    c.alpha0 = get_or(j, "alpha0", c.alpha0, path);
    c.tau = get_or(j, "tau", c.tau, path);
    c.trace_decay = get_or(j, "trace_decay", c.trace_decay, path);
    c.renormalize = get_or(j, "renormalize", c.renormalize, path);
    c.whiten_rank_tolerance = get_or(j, "whiten_rank_tolerance", c.whiten_rank_tolerance, path);
    return c;
}

SignatureSpec parse_signature(const json& j) {
    const std::string path = "/signature";
    reject_unknown_keys(j, {"nonlinearity", "pooling", "normalize_input"}, path);
    SignatureSpec spec;
    const std::string nl = get_or<std::string>(j, "nonlinearity", "square", path);
    try {
        spec.nonlinearity = nonlinearity_from_name(nl);
    } catch (const std::invalid_argument&) {
        throw ConfigError(path + "/nonlinearity: must be 'square', 'abs' or 'half_wave'");
    }
    const std::string pool = get_or<std::string>(j, "pooling", "mean", path);
    if (pool == "mean")
        spec.pooling = PoolingMode::mean;
    else if (pool == "sum")
        spec.pooling = PoolingMode::sum;
    else
        throw ConfigError(path + "/pooling: must be 'mean' or 'sum'");
    spec.normalize_input = get_or(j, "normalize_input", spec.normalize_input, path);
    return spec;
}

ExperimentsConfig parse_experiments(const json& j) {
    const std::string path = "/experiments";
    reject_unknown_keys(j, {"selection", "auc", "tuning", "simmatrix"}, path);
    ExperimentsConfig c;
    c.selection = get_or<std::string>(j, "selection", c.selection, path);
    static const std::set<std::string> selections = {"auc", "tuning", "simmatrix", "verify", "all"};
    if (!selections.count(c.selection))
        throw ConfigError(path + "/selection: must be one of auc|tuning|simmatrix|verify|all");
    if (j.contains("auc")) {
        const json& ja = j.at("auc");
        reject_unknown_keys(ja, {"repetitions", "n_template", "n_test", "radius_min_deg",
                                 "radius_max_deg", "radius_step_deg", "pairs_per_radius"},
                            path + "/auc");
        c.auc.repetitions = get_or(ja, "repetitions", c.auc.repetitions, path + "/auc");
        c.auc.n_template = get_or(ja, "n_template", c.auc.n_template, path + "/auc");
        c.auc.n_test = get_or(ja, "n_test", c.auc.n_test, path + "/auc");
        c.auc.radius_min_deg = get_or(ja, "radius_min_deg", c.auc.radius_min_deg, path + "/auc");
        c.auc.radius_max_deg = get_or(ja, "radius_max_deg", c.auc.radius_max_deg, path + "/auc");
        c.auc.radius_step_deg = get_or(ja, "radius_step_deg", c.auc.radius_step_deg, path + "/auc");
        c.auc.pairs_per_radius = get_or(ja, "pairs_per_radius", c.auc.pairs_per_radius, path + "/auc");
    }
    if (j.contains("tuning")) {
        const json& jt = j.at("tuning");
        reject_unknown_keys(jt, {"n_units"}, path + "/tuning");
        c.tuning.n_units = get_or(jt, "n_units", c.tuning.n_units, path + "/tuning");
    }
    if (j.contains("simmatrix")) {
        const json& js = j.at("simmatrix");
        reject_unknown_keys(js, {"repetitions", "n_template", "n_test"}, path + "/simmatrix");
        c.simmatrix.repetitions = get_or(js, "repetitions", c.simmatrix.repetitions, path + "/simmatrix");
        c.simmatrix.n_template = get_or(js, "n_template", c.simmatrix.n_template, path + "/simmatrix");
        c.simmatrix.n_test = get_or(js, "n_test", c.simmatrix.n_test, path + "/simmatrix");
    }
    return c;
}

}  // namespace

RenderOptions StimuliConfig::render_options() const {
    RenderOptions opts;
    opts.height = height;
    opts.width = width;
    opts.depth_cue = depth_cue;
    opts.projection = projection;
    return opts;
}

std::vector<double> AucExperimentConfig::radii() const {
    std::vector<double> out;
    for (double r = radius_min_deg; r <= radius_max_deg + 1e-9; r += radius_step_deg)
        out.push_back(r);
    return out;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    reject_unknown_keys(
        j, {"master_seed", "output_dir", "stimuli", "encoder", "learning", "signature", "experiments"},
        "");
    RunConfig c;
    c.master_seed = get_or<std::uint64_t>(j, "master_seed", c.master_seed, "");
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir, "");
    if (j.contains("stimuli")) c.stimuli = parse_stimuli(j.at("stimuli"));
    if (j.contains("encoder")) c.encoder = parse_encoder(j.at("encoder"));
    if (j.contains("learning")) c.learning = parse_learning(j.at("learning"));
    if (j.contains("signature")) c.signature = parse_signature(j.at("signature"));
    if (j.contains("experiments")) c.experiments = parse_experiments(j.at("experiments"));
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (stimuli.width % 2 == 0)
        throw ConfigError("/stimuli/width: must be odd so reflection is an exact pixel permutation");
    if (stimuli.height < 1 || stimuli.width < 1) throw ConfigError("/stimuli: dims must be positive");
    if (stimuli.n_identities < 1) throw ConfigError("/stimuli/n_identities: must be >= 1");
    if (stimuli.n_features < 4) throw ConfigError("/stimuli/n_features: must be >= 4");
    if (!(stimuli.spread > 0.0)) throw ConfigError("/stimuli/spread: must be > 0");
    if (stimuli.depth_cue < 0.0) throw ConfigError("/stimuli/depth_cue: must be >= 0");
    if (stimuli.grid.count() == 0) throw ConfigError("/stimuli: empty angle grid");
    if (learning.n_components < 1) throw ConfigError("/learning/n_components: must be >= 1");
    if (learning.epochs < 1) throw ConfigError("/learning/epochs: must be >= 1");
    if (!(learning.alpha0 > 0.0)) throw ConfigError("/learning/alpha0: must be > 0");
    if (!(learning.tau > 0.0)) throw ConfigError("/learning/tau: must be > 0");
    if (!(learning.trace_decay > 0.0 && learning.trace_decay <= 1.0))
        throw ConfigError("/learning/trace_decay: must be in (0, 1]");
    if (experiments.auc.pairs_per_radius < 2)
        throw ConfigError("/experiments/auc/pairs_per_radius: must be >= 2");
    if (experiments.auc.n_template + experiments.auc.n_test > stimuli.n_identities)
        throw ConfigError("/experiments/auc: template + test identities exceed n_identities");
    if (experiments.simmatrix.n_template + experiments.simmatrix.n_test > stimuli.n_identities)
        throw ConfigError("/experiments/simmatrix: template + test identities exceed n_identities");
    // encoder structural validation happens on construction; surface it here
    (void)Encoder(encoder, stimuli.height, stimuli.width);
}

nlohmann::json RunConfig::to_json() const {
    json j;
    j["master_seed"] = master_seed;
    j["output_dir"] = output_dir;
    j["stimuli"] = {{"n_identities", stimuli.n_identities},
                    {"n_features", stimuli.n_features},
                    {"spread", stimuli.spread},
                    {"height", stimuli.height},
                    {"width", stimuli.width},
                    {"depth_cue", stimuli.depth_cue},
                    {"angle_min_deg", stimuli.grid.min_deg},
                    {"angle_max_deg", stimuli.grid.max_deg},
                    {"angle_step_deg", stimuli.grid.step_deg},
                    {"projection", stimuli.projection == Projection::orthographic
                                       ? "orthographic"
                                       : "perspective"}};
    json je = encoder_spec_to_json(encoder);
    je.erase("phase");
    je["phase_deg"] = encoder.phase * 180.0 / M_PI;
    if (je.contains("orientations")) {
        std::vector<double> deg;
        for (double p : encoder.orientations) deg.push_back(p * 180.0 / M_PI);
        je.erase("orientations");
        je["orientations_deg"] = deg;
    }
    j["encoder"] = je;
    j["learning"] = {{"rule", learning.rule},
                     {"n_components", learning.n_components},
                     {"epochs", learning.epochs},
                     {"alpha0", learning.alpha0},
                     {"tau", learning.tau},
                     {"trace_decay", learning.trace_decay},
                     {"renormalize", learning.renormalize},
                     {"whiten_rank_tolerance", learning.whiten_rank_tolerance}};
    j["signature"] = {{"nonlinearity", nonlinearity_name(signature.nonlinearity)},
                      {"pooling", signature.pooling == PoolingMode::mean ? "mean" : "sum"},
                      {"normalize_input", signature.normalize_input}};
    j["experiments"] = {{"selection", experiments.selection},
                        {"auc",
                         {{"repetitions", experiments.auc.repetitions},
                          {"n_template", experiments.auc.n_template},
                          {"n_test", experiments.auc.n_test},
                          {"radius_min_deg", experiments.auc.radius_min_deg},
                          {"radius_max_deg", experiments.auc.radius_max_deg},
                          {"radius_step_deg", experiments.auc.radius_step_deg},
                          {"pairs_per_radius", experiments.auc.pairs_per_radius}}},
                        {"tuning", {{"n_units", experiments.tuning.n_units}}},
                        {"simmatrix",
                         {{"repetitions", experiments.simmatrix.repetitions},
                          {"n_template", experiments.simmatrix.n_template},
                          {"n_test", experiments.simmatrix.n_test}}}};
    return j;
}

std::string RunConfig::hash() const {
    // output_dir does not affect results; keep it out of the hash
    json j = to_json();
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return RunConfig::from_json(j);
}

}  // namespace facepool
