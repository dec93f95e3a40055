#pragma once

#include "facepool/analysis.hpp"
#include "facepool/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace facepool {

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path stimuli;
    std::filesystem::path bases;
    std::filesystem::path results;
    std::filesystem::path report;
};

struct PropertyCheck {
    std::string name;
    double residual = 0.0;
    double threshold = 0.0;
    bool pass = false;
    bool exceeds = false;  // negative controls: pass iff residual > threshold
    std::string note;
};

struct PropertyReport {
    std::vector<PropertyCheck> checks;
    bool all_pass() const;
};

/// Config-driven experiment driver. One run directory
/// (<out>/<config-hash>/) per config; a lock file guards it against
/// concurrent runs.
class Runner {
public:
    Runner(RunConfig config, const std::optional<std::string>& out_override = std::nullopt,
           const std::optional<std::uint64_t>& seed_override = std::nullopt);

    int generate();
    int train();
    int evaluate();
    int verify();
    int run_all();

    const RunPaths& paths() const { return paths_; }
    const RunConfig& config() const { return config_; }
    const std::string& config_hash() const { return hash_; }

    /// The full invariant suite on freshly generated desk-scale fixtures.
    PropertyReport run_property_suite() const;

private:
    RunConfig config_;
    std::string hash_;
    RunPaths paths_;

    void ensure_dirs();
    void record_artifact(const std::string& relative_path);
    void record_timing(const std::string& step, double ms);
    void record_check_summary(bool all_pass, int n_checks);
};

}  // namespace facepool
