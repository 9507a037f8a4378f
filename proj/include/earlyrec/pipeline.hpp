#pragma once

#include "earlyrec/encoder.hpp"
#include "earlyrec/evaluator.hpp"
#include "earlyrec/synth.hpp"
#include "earlyrec/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace earlyrec {

/// A configuration key is unknown, mistyped or out of range. The message names the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A stage's upstream artifact does not exist. The message names the missing file.
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AblationGrid {
    std::vector<Delta> deltas{DeltaFraction{0.2}, DeltaSteps{10}};
    std::vector<double> lambdas{10.0, 100.0};
    std::vector<FutureLossKind> losses{FutureLossKind::smooth_l1};
    /// Truncated-training comparison: fine-tune and train on the first k steps only.
    std::vector<int> train_prefix_steps;
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::filesystem::path out = "run";
    std::optional<std::filesystem::path> dataset_path;
    GeneratorSpec generator;
    std::vector<int> per_class_counts;
    EncoderTrainConfig encoder;
    TrainConfig teacher = TrainConfig::teacher_defaults();
    TrainConfig student = TrainConfig::student_defaults();
    std::string evaluate_model = "student";
    std::vector<int> checkpoints; // empty: default grid
    int num_checkpoints = 7;
    AblationGrid ablate;
    int gradcheck_instances = 20;

    /// Effective configuration (after overrides) as JSON; hashed into every manifest.
    nlohmann::json effective;
};

/// Applies `key.path=value` overrides (value parsed as JSON, else taken as a string),
/// then `seed` and `out` if given. Throws ConfigError naming the offending key.
RunConfig parse_run_config(nlohmann::json raw, const std::vector<std::string>& overrides = {},
                           std::optional<std::uint64_t> seed = std::nullopt,
                           std::optional<std::filesystem::path> out = std::nullopt);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                          std::optional<std::uint64_t> seed = std::nullopt,
                          std::optional<std::filesystem::path> out = std::nullopt);

/// FNV-1a 64-bit, hex encoded.
std::string fnv1a_hex(std::string_view bytes);
std::string file_checksum(const std::filesystem::path& path);
std::string config_hash(const RunConfig& cfg);

/// Run-directory layout.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path dataset() const { return root / "dataset.jsonl"; }
    std::filesystem::path encoder() const { return root / "encoder.json"; }
    std::filesystem::path teacher() const { return root / "teacher.json"; }
    std::filesystem::path student() const { return root / "student.json"; }
    std::filesystem::path manifest(const std::string& stage) const {
        return root / ("manifest_" + stage + ".json");
    }
};

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"generate", "finetune-encoder", "train-teacher", "train-fsp",
                                                "evaluate", "gradcheck", "ablate"};
    return names;
}

/// Runs one stage. Returns the process exit code (0 success, 2 numerical failure);
/// validation problems propagate as exceptions.
int run_subcommand(const std::string& name, const RunConfig& cfg);

} // namespace earlyrec
