#include "facepool/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

int dispatch(const std::string& command, const std::string& config_path,
             const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
    facepool::RunConfig config = facepool::load_config(config_path);
    facepool::Runner runner(config, out, seed);
    if (command == "generate") return runner.generate();
    if (command == "train") return runner.train();
    if (command == "evaluate") return runner.evaluate();
    if (command == "verify") return runner.verify();
    if (command == "all") return runner.run_all();
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facepool: view-tolerant face signatures from Hebbian-family learning rules"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;

    for (const char* name : {"generate", "train", "evaluate", "verify", "all"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run config JSON file")->required();
        sub->add_option("--seed", seed, "override master_seed");
        sub->add_option("--out", out, "override output directory");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return dispatch(app.get_subcommands().front()->get_name(), config_path, seed, out);
    } catch (const facepool::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
