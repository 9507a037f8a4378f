// earlyrec command-line driver.
#include "earlyrec/error.hpp"
#include "earlyrec/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Early recognition training toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> overrides;

    for (const auto& name : earlyrec::subcommands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "run seed, overrides the config");
        sub->add_option("--out", out, "run directory, overrides the config");
        sub->add_option("--override", overrides, "key.path=value, repeatable");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kValidationError;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        std::optional<std::filesystem::path> out_path;
        if (out) {
            out_path = *out;
        }
        const auto cfg = earlyrec::load_run_config(config_path, overrides, seed, out_path);
        return earlyrec::run_subcommand(name, cfg);
    } catch (const earlyrec::NumericalError& e) {
        std::cerr << "earlyrec " << name << ": numerical failure: " << e.what() << '\n';
        return kRuntimeError;
    } catch (const earlyrec::ConfigError& e) {
        std::cerr << "earlyrec " << name << ": config error: " << e.what() << '\n';
        return kValidationError;
    } catch (const earlyrec::MissingArtifact& e) {
        std::cerr << "earlyrec " << name << ": " << e.what() << '\n';
        return kValidationError;
    } catch (const earlyrec::ParseError& e) {
        std::cerr << "earlyrec " << name << ": " << e.what() << '\n';
        return kValidationError;
    } catch (const earlyrec::FormatError& e) {
        std::cerr << "earlyrec " << name << ": " << e.what() << '\n';
        return kValidationError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "earlyrec " << name << ": invalid input: " << e.what() << '\n';
        return kValidationError;
    } catch (const std::exception& e) {
        std::cerr << "earlyrec " << name << ": " << e.what() << '\n';
        return kRuntimeError;
    }
}
