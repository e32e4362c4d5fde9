#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "promptforge/dataset.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/trainer.hpp"

namespace promptforge {

struct ExperimentConfig {
    /// "synthetic" or a directory in the load_directory layout.
    std::string data = "synthetic";
    std::size_t classes = 8;
    std::size_t per_class = 64;
    std::uint64_t data_seed = 2024;
    std::uint64_t encoder_seed = 0;

    std::vector<std::string> methods{"coop", "cocoop", "mlp_pl+mlp_ft", "full"};
    std::vector<std::uint64_t> seeds{1, 2, 3};

    std::size_t epochs = 10;
    double base_lr = 0.002;
    double lambda = 0.2;
    double tau = 0.01;
    std::size_t shots = 16;
    std::size_t batch_size = 8;
    std::size_t context_length = 4;
    std::string metanet_init = "uniform";

    /// Report directory; empty means no files are written.
    std::string output = "results";
    bool checkpoints = true;

    void validate() const;
    TrainConfig train_config(const std::string& method, std::uint64_t seed) const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Flat key=value text; '#' starts a comment. Unknown keys, duplicate keys
/// and malformed values raise ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key, one per line, in a form parse_config reads back exactly.
std::string config_to_text(const ExperimentConfig& cfg);

Dataset load_dataset(const ExperimentConfig& cfg);

struct CellResult {
    std::string method;
    std::uint64_t seed = 0;
    EvalReport report;
    double train_acc = 0.0;
    double first_loss = 0.0;
    double final_loss = 0.0;
};

struct MethodSummary {
    std::string method;
    double base_acc = 0.0;
    double new_acc = 0.0;
    double hos = 0.0;
    double discrimination = 0.0;
    double train_acc = 0.0;
};

struct ExperimentResult {
    std::vector<CellResult> cells;        // method-major, seeds in config order
    std::vector<MethodSummary> averaged;  // one per method, config order
    const MethodSummary& summary(const std::string& method) const;
};

using ProgressFn = std::function<void(const CellResult&)>;

/// Trains and evaluates every method x seed cell. When cfg.output is set,
/// writes per_seed.csv, summary.csv, summary.md, config.txt and (if
/// enabled) one checkpoint per cell.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});

std::string per_seed_csv(const ExperimentResult& result);
std::string summary_csv(const ExperimentResult& result);
/// Markdown report: echoed config in a fenced block, then a
/// Method | Base | New | Hos | Distance table of seed averages.
std::string summary_markdown(const ExperimentConfig& cfg, const ExperimentResult& result);
/// Recovers the config echoed by summary_markdown.
ExperimentConfig config_from_markdown(std::string_view markdown);

}  // namespace promptforge
