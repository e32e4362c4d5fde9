#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "promptforge/dataset.hpp"
#include "promptforge/errors.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/experiment.hpp"
#include "promptforge/text_format.hpp"
#include "promptforge/trainer.hpp"

using namespace promptforge;

namespace {

std::string extra_or(const Checkpoint& ckpt, const std::string& key) {
    const auto it = ckpt.extra.find(key);
    if (it == ckpt.extra.end()) {
        throw ConfigError("checkpoint does not record '" + key + "'; pass --data explicitly");
    }
    return it->second;
}

// An explicit --data wins; otherwise the source recorded at training time.
Dataset dataset_for(const Checkpoint& ckpt, const std::string& data) {
    ExperimentConfig cfg;
    cfg.data = data.empty() ? extra_or(ckpt, "data") : data;
    if (cfg.data == "synthetic") {
        cfg.classes = parse_size(extra_or(ckpt, "classes"), "classes");
        cfg.per_class = parse_size(extra_or(ckpt, "per_class"), "per_class");
        cfg.data_seed = parse_u64(extra_or(ckpt, "data_seed"), "data_seed");
    }
    return load_dataset(cfg);
}

int gen_data(std::size_t classes, std::size_t per_class, std::uint64_t seed, const std::string& out) {
    const Dataset ds = generate_synthetic(classes, per_class, seed);
    write_directory(ds, out);
    std::cout << "wrote " << ds.samples.size() << " images in " << ds.num_classes() << " classes to " << out << "\n";
    return 0;
}

int run(const std::string& config_path, bool quiet) {
    const ExperimentConfig cfg = load_config(config_path);
    ProgressFn progress;
    if (!quiet) {
        progress = [](const CellResult& c) {
            std::cerr << c.method << " seed " << c.seed << ": base " << format_fixed(c.report.base_acc, 2) << " new "
                      << format_fixed(c.report.new_acc, 2) << " hos " << format_fixed(c.report.hos, 2) << " train "
                      << format_fixed(c.train_acc, 2) << "\n";
        };
    }
    const ExperimentResult result = run_experiment(cfg, progress);
    std::cout << summary_markdown(cfg, result);
    return 0;
}

int eval(const std::string& checkpoint, const std::string& data, const std::string& which) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Dataset ds = dataset_for(ckpt, data);
    const SplitSpec split = SplitSpec::halves(ds.num_classes());
    const EncoderWeights encoders = EncoderWeights::generate(ckpt.state.encoder_seed);
    const ClassGroup group = which == "base" ? ClassGroup::Base : ClassGroup::New;
    const GroupAccuracy acc = evaluate_group(ckpt.state, ds, split, group, encoders);
    std::cout << "class,accuracy\n";
    for (const auto& [name, value] : acc.per_class) std::cout << name << "," << format_double(value) << "\n";
    std::cout << "overall," << format_double(acc.accuracy) << "\n";
    return 0;
}

int heatmap(const std::string& checkpoint, const std::string& data, std::size_t image, std::size_t class_id,
            const std::string& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const Dataset ds = dataset_for(ckpt, data);
    if (image >= ds.samples.size()) {
        throw IndexError("image " + std::to_string(image) + " out of range for " +
                         std::to_string(ds.samples.size()) + " images");
    }
    const EncoderWeights encoders = EncoderWeights::generate(ckpt.state.encoder_seed);
    const MethodModel model(encoders, ckpt.state.config.resolved_method(), ckpt.state.params, ds.class_names);
    const auto result = model.forward(encode_image(ds.samples[image].image, encoders));
    if (!result.attention || result.attention->a_t.rank() != 2) {
        throw EvaluationError("method " + model.spec().name() + " has no image-to-text attention");
    }
    export_heatmap(*result.attention, image, class_id, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt tuning experiments on frozen toy encoders"};
    app.require_subcommand(1);

    std::size_t classes = 8, per_class = 64;
    std::uint64_t seed = 0;
    std::string out;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as class directories of P6 images");
    gen->add_option("--classes", classes, "Number of classes (2..16)")->capture_default_str();
    gen->add_option("--per-class", per_class, "Images per class")->capture_default_str();
    gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", out, "Output directory")->required();

    std::string config_path;
    bool quiet = false;
    auto* run_cmd = app.add_subcommand("run", "Train and evaluate every method and seed of a config");
    run_cmd->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_flag("--quiet", quiet, "No per-cell progress on stderr");

    std::string checkpoint, data, which = "base";
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the base or new classes");
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data, "Dataset directory or 'synthetic' (default: recorded in the checkpoint)");
    eval_cmd->add_option("--split", which, "Class group")->check(CLI::IsMember({"base", "new"}))->capture_default_str();

    std::size_t image = 0, class_id = 0;
    auto* heat = app.add_subcommand("heatmap", "Export one row of the image-to-text attention as a graymap");
    heat->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    heat->add_option("--data", data, "Dataset directory or 'synthetic' (default: recorded in the checkpoint)");
    heat->add_option("--image", image, "Image index in the dataset")->required();
    heat->add_option("--class", class_id, "Class index in the dataset")->required();
    heat->add_option("--out", out, "Output .pgm path (a .csv twin is written alongside)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return gen_data(classes, per_class, seed, out);
        if (*run_cmd) return run(config_path, quiet);
        if (*eval_cmd) return eval(checkpoint, data, which);
        if (*heat) return heatmap(checkpoint, data, image, class_id, out);
    } catch (const std::exception& e) {
        std::cerr << "promptforge: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
