#include "facepool/runner.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace facepool {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exclusive ownership of a run directory for the lifetime of one command.
class DirLock {
public:
    explicit DirLock(const fs::path& root) : path_(root / ".lock") {
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (f == nullptr)
            throw std::runtime_error("run directory is locked by another process: " +
                                     root.string());
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

class Stopwatch {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing artifact: " + path.string());
    json j;
    in >> j;
    return j;
}

void check_artifact_hash(const json& j, const std::string& expected, const fs::path& path) {
    const std::string got = j.value("config_hash", "");
    if (got != expected)
        throw std::runtime_error("config hash mismatch in " + path.string() + " (expected " +
                                 expected + ", found " + got + ")");
}

std::string orbit_filename(int identity) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "orbit_%03d.json", identity);
    return buf;
}

std::string basis_filename(const std::string& rule, int identity) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.json", rule.c_str(), identity);
    return buf;
}

std::uint64_t face_seed(const RunConfig& config, int identity) {
    return derive_seed(config.master_seed, "stimuli", static_cast<std::uint64_t>(identity));
}

FaceModel3D make_face(const RunConfig& config, int identity) {
    FaceModel3D face =
        generate_face(face_seed(config, identity), config.stimuli.n_features, config.stimuli.spread);
    face.identity_id = identity;
    return face;
}

LearnedBasis train_identity_basis(const RunConfig& config, int identity, const Mat& features) {
    const LearningConfig& lc = config.learning;
    const Eigen::Index d = features.rows();
    const Eigen::Index n = features.cols();
    const int r = static_cast<int>(std::min<Eigen::Index>(lc.n_components, std::min(d, n)));

    LearnedBasis basis;
    if (lc.rule == "pca") {
        basis = batch_pca(features, /*with_covariance=*/false).basis;
        if (basis.units() > r) {
            basis.vectors = basis.vectors.topRows(r).eval();
            basis.eigenvalues = basis.eigenvalues.head(r).eval();
        }
    } else if (lc.rule == "view_based") {
        basis = view_based_basis(features);
    } else {
        TrainOptions opts;
        opts.epochs = lc.epochs;
        opts.schedule = {lc.alpha0, lc.tau};
        opts.trace_decay = lc.trace_decay;
        opts.renormalize = lc.renormalize;
        opts.whiten_rank_tolerance = lc.whiten_rank_tolerance;
        basis = train_basis(features, rule_from_name(lc.rule), r,
                            derive_seed(config.master_seed, "train", identity), opts);
    }
    basis.identity_id = identity;
    return basis;
}

void write_csv(const fs::path& path, const std::string& hash, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# config_hash=" << hash << "\n" << header << "\n";
    for (const std::string& r : rows) out << r << "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

bool PropertyReport::all_pass() const {
    for (const PropertyCheck& c : checks)
        if (!c.pass) return false;
    return true;
}

Runner::Runner(RunConfig config, const std::optional<std::string>& out_override,
               const std::optional<std::uint64_t>& seed_override)
    : config_(std::move(config)) {
    if (seed_override) config_.master_seed = *seed_override;
    if (out_override) config_.output_dir = *out_override;
    config_.validate();
    hash_ = config_.hash();
    paths_.root = fs::path(config_.output_dir) / hash_;
    paths_.stimuli = paths_.root / "stimuli";
    paths_.bases = paths_.root / "bases";
    paths_.results = paths_.root / "results";
    paths_.report = paths_.root / "report";
}

void Runner::ensure_dirs() {
    for (const fs::path& p : {paths_.root, paths_.stimuli, paths_.bases, paths_.results, paths_.report})
        fs::create_directories(p);
    const fs::path manifest = paths_.root / "manifest.json";
    if (!fs::exists(manifest)) {
        json j;
        j["config_hash"] = hash_;
        j["versions"] = {{"facepool", kVersion}};
        j["config"] = config_.to_json();
        j["artifacts"] = json::array();
        j["timings_ms"] = json::object();
        write_json_file(manifest, j);
    }
}

void Runner::record_artifact(const std::string& relative_path) {
    const fs::path manifest = paths_.root / "manifest.json";
    json j = read_json_file(manifest);
    auto& a = j["artifacts"];
    if (std::find(a.begin(), a.end(), json(relative_path)) == a.end()) a.push_back(relative_path);
    write_json_file(manifest, j);
}

void Runner::record_timing(const std::string& step, double ms) {
    const fs::path manifest = paths_.root / "manifest.json";
    json j = read_json_file(manifest);
    j["timings_ms"][step] = ms;
    write_json_file(manifest, j);
}

void Runner::record_check_summary(bool all_pass, int n_checks) {
    const fs::path manifest = paths_.root / "manifest.json";
    json j = read_json_file(manifest);
    j["property_checks"] = {{"all_pass", all_pass}, {"count", n_checks}};
    write_json_file(manifest, j);
}

int Runner::generate() {
    ensure_dirs();
    DirLock lock(paths_.root);
    Stopwatch timer;
    const RenderOptions opts = config_.stimuli.render_options();
    for (int k = 0; k < config_.stimuli.n_identities; ++k) {
        const FaceModel3D face = make_face(config_, k);
        const OrbitSet orbit = build_orbit(face, config_.stimuli.grid, opts);
        json j = orbit_to_json(orbit);
        j["config_hash"] = hash_;
        const std::string name = orbit_filename(k);
        write_json_file(paths_.stimuli / name, j);
        record_artifact("stimuli/" + name);
    }
    record_timing("generate", timer.ms());
    std::cout << "generate: wrote " << config_.stimuli.n_identities << " orbit files ("
              << config_.stimuli.grid.count() << " views each) to " << paths_.stimuli.string()
              << "\n";
    return 0;
}

int Runner::train() {
    ensure_dirs();
    DirLock lock(paths_.root);
    Stopwatch timer;
    const Encoder encoder(config_.encoder, config_.stimuli.height, config_.stimuli.width);
    for (int k = 0; k < config_.stimuli.n_identities; ++k) {
        const fs::path orbit_path = paths_.stimuli / orbit_filename(k);
        if (!fs::exists(orbit_path))
            throw std::runtime_error("cmd_train: missing stimulus artifact " + orbit_path.string() +
                                     " (run 'generate' first)");
        const json jo = read_json_file(orbit_path);
        check_artifact_hash(jo, hash_, orbit_path);
        const OrbitSet orbit = orbit_from_json(jo);
        const Mat features = encode_orbit(orbit, encoder);
        const LearnedBasis basis = train_identity_basis(config_, k, features);
        json jb = basis_to_json(basis);
        jb["config_hash"] = hash_;
        const std::string name = basis_filename(config_.learning.rule, k);
        write_json_file(paths_.bases / name, jb);
        record_artifact("bases/" + name);
    }
    record_timing("train", timer.ms());
    std::cout << "train: wrote " << config_.stimuli.n_identities << " " << config_.learning.rule
              << " basis files to " << paths_.bases.string() << "\n";
    return 0;
}

int Runner::evaluate() {
    ensure_dirs();
    DirLock lock(paths_.root);
    Stopwatch timer;
    const std::string& selection = config_.experiments.selection;
    const bool want_auc = selection == "auc" || selection == "all";
    const bool want_tuning = selection == "tuning" || selection == "all";
    const bool want_simmatrix = selection == "simmatrix" || selection == "all";
    if (!want_auc && !want_tuning && !want_simmatrix) {
        std::cout << "evaluate: nothing selected (selection=" << selection << ")\n";
        return 0;
    }

    const Encoder encoder(config_.encoder, config_.stimuli.height, config_.stimuli.width);
    const int n_ident = config_.stimuli.n_identities;

    std::vector<Mat> features(n_ident);
    std::vector<double> angles = config_.stimuli.grid.angles();
    for (int k = 0; k < n_ident; ++k) {
        const fs::path orbit_path = paths_.stimuli / orbit_filename(k);
        if (!fs::exists(orbit_path))
            throw std::runtime_error("cmd_evaluate: missing stimulus artifact " +
                                     orbit_path.string() + " (run 'generate' first)");
        const json jo = read_json_file(orbit_path);
        check_artifact_hash(jo, hash_, orbit_path);
        features[k] = encode_orbit(orbit_from_json(jo), encoder);
    }

    std::vector<LearnedBasis> rule_bases(n_ident);
    for (int k = 0; k < n_ident; ++k) {
        const fs::path basis_path = paths_.bases / basis_filename(config_.learning.rule, k);
        if (!fs::exists(basis_path))
            throw std::runtime_error("cmd_evaluate: missing basis artifact " + basis_path.string() +
                                     " (run 'train' first)");
        const json jb = read_json_file(basis_path);
        check_artifact_hash(jb, hash_, basis_path);
        rule_bases[k] = basis_from_json(jb);
    }

    if (want_auc) {
        PairMatchingOptions opts;
        opts.repetitions = config_.experiments.auc.repetitions;
        opts.n_template = config_.experiments.auc.n_template;
        opts.n_test = config_.experiments.auc.n_test;
        opts.radii_deg = config_.experiments.auc.radii();
        opts.pairs_per_radius = config_.experiments.auc.pairs_per_radius;
        const std::uint64_t seed = derive_seed(config_.master_seed, "auc");

        std::vector<std::pair<std::string, std::vector<LearnedBasis>>> models;
        models.emplace_back("raw", std::vector<LearnedBasis>{});
        std::vector<LearnedBasis> view_bases(n_ident);
        for (int k = 0; k < n_ident; ++k) {
            view_bases[k] = view_based_basis(features[k]);
            view_bases[k].identity_id = k;
        }
        models.emplace_back("view_based", std::move(view_bases));
        if (config_.learning.rule != "view_based")
            models.emplace_back(config_.learning.rule, rule_bases);

        json jall;
        jall["config_hash"] = hash_;
        for (const auto& [name, bases] : models) {
            const AUCTable table =
                pair_matching_experiment(features, angles, bases, config_.signature, opts, seed);
            std::vector<std::string> rows;
            for (std::size_t i = 0; i < table.radii_deg.size(); ++i)
                rows.push_back(name + "," + fmt(table.radii_deg[i]) + "," + fmt(table.auc_mean[i]) +
                               "," + fmt(table.auc_std[i]) + "," + std::to_string(table.repetitions));
            const std::string file = "auc_" + name + ".csv";
            write_csv(paths_.results / file, hash_, "model,radius_deg,auc_mean,auc_std,repetitions",
                      rows);
            record_artifact("results/" + file);
            jall["models"][name] = {{"radii_deg", table.radii_deg},
                                    {"auc_mean", table.auc_mean},
                                    {"auc_std", table.auc_std},
                                    {"repetitions", table.repetitions}};
        }
        write_json_file(paths_.results / "auc.json", jall);
        record_artifact("results/auc.json");
        std::cout << "evaluate: AUC tables for " << models.size() << " models ("
                  << opts.radii_deg.size() << " radii)\n";
    }

    if (want_tuning) {
        const LearnedBasis& basis = rule_bases[0];
        const int n_units = std::min(config_.experiments.tuning.n_units, basis.units());
        std::vector<std::string> rows;
        json jsum;
        jsum["config_hash"] = hash_;
        for (int u = 0; u < n_units; ++u) {
            Vec responses(static_cast<Eigen::Index>(angles.size()));
            for (std::size_t a = 0; a < angles.size(); ++a) {
                Vec x = features[0].col(static_cast<Eigen::Index>(a));
                if (basis.whitening) x = basis.whitening->apply(x);
                responses[static_cast<Eigen::Index>(a)] = apply_nonlinearity(
                    config_.signature.nonlinearity, basis.vectors.row(u).dot(x));
            }
            const Vec angle_vec =
                Eigen::Map<const Vec>(angles.data(), static_cast<Eigen::Index>(angles.size()));
            jsum["symmetry_index"][std::to_string(u)] = symmetry_index(angle_vec, responses);
            for (std::size_t a = 0; a < angles.size(); ++a)
                rows.push_back("0," + std::to_string(u) + "," + fmt(angles[a]) + "," +
                               fmt(responses[static_cast<Eigen::Index>(a)]));
        }
        write_csv(paths_.results / "tuning.csv", hash_, "identity,unit,angle_deg,response", rows);
        record_artifact("results/tuning.csv");
        write_json_file(paths_.results / "tuning_summary.json", jsum);
        record_artifact("results/tuning_summary.json");
        std::cout << "evaluate: tuning curves for " << n_units << " units\n";
    }

    if (want_simmatrix) {
        SimilarityExperimentOptions opts;
        opts.repetitions = config_.experiments.simmatrix.repetitions;
        opts.n_template = config_.experiments.simmatrix.n_template;
        opts.n_test = config_.experiments.simmatrix.n_test;
        const SimilarityExperimentResult result =
            similarity_experiment(features, angles, rule_bases, config_.signature, opts,
                                  derive_seed(config_.master_seed, "simmatrix"));
        for (const SimilarityMatrix* m : {&result.input, &result.simple, &result.pooled}) {
            std::vector<std::string> rows;
            for (Eigen::Index i = 0; i < m->values.rows(); ++i)
                for (Eigen::Index j = 0; j < m->values.cols(); ++j)
                    rows.push_back(std::to_string(m->labels[i].identity_id) + "," +
                                   fmt(m->labels[i].angle_deg) + "," +
                                   std::to_string(m->labels[j].identity_id) + "," +
                                   fmt(m->labels[j].angle_deg) + "," + fmt(m->values(i, j)));
            const std::string file = "simmatrix_" + m->stage + ".csv";
            write_csv(paths_.results / file, hash_,
                      "identity_i,angle_i,identity_j,angle_j,correlation", rows);
            record_artifact("results/" + file);
        }
        std::cout << "evaluate: similarity matrices at 3 stages\n";
    }

    record_timing("evaluate", timer.ms());
    return 0;
}

int Runner::verify() {
    ensure_dirs();
    DirLock lock(paths_.root);
    Stopwatch timer;
    const PropertyReport report = run_property_suite();

    json j;
    j["config_hash"] = hash_;
    json checks = json::array();
    for (const PropertyCheck& c : report.checks) {
        checks.push_back({{"name", c.name},
                          {"residual", c.residual},
                          {"threshold", c.threshold},
                          {"pass", c.pass},
                          {"negative_control", c.exceeds},
                          {"note", c.note}});
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  residual=" << c.residual
                  << (c.exceeds ? " > " : " <= ") << c.threshold
                  << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
    }
    j["checks"] = std::move(checks);
    j["all_pass"] = report.all_pass();
    write_json_file(paths_.report / "property_report.json", j);
    record_artifact("report/property_report.json");
    record_timing("verify", timer.ms());
    record_check_summary(report.all_pass(), static_cast<int>(report.checks.size()));

    if (!report.all_pass()) {
        for (const PropertyCheck& c : report.checks)
            if (!c.pass) {
                std::cerr << "verify failed: " << c.name << "\n";
                break;
            }
        return 1;
    }
    std::cout << "verify: all " << report.checks.size() << " checks passed\n";
    return 0;
}

int Runner::run_all() {
    if (int rc = generate(); rc != 0) return rc;
    if (int rc = train(); rc != 0) return rc;
    if (int rc = evaluate(); rc != 0) return rc;
    return verify();
}

}  // namespace facepool
