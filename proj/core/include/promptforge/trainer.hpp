#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "promptforge/dataset.hpp"
#include "promptforge/encoders.hpp"
#include "promptforge/prompt_engine.hpp"

namespace promptforge {

struct TrainConfig {
    std::size_t epochs = 10;
    double base_lr = 0.002;
    double lambda = 0.2;
    double tau = 0.01;
    std::size_t shots = 16;
    std::uint64_t seed = 1;
    MethodSpec method = MethodSpec::parse("full");
    std::size_t batch_size = 8;
    std::size_t context_length = 4;
    MetaNetInit metanet_init = MetaNetInit::Uniform;

    /// method with this config's lambda and tau.
    MethodSpec resolved_method() const;
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

std::string metanet_init_name(MetaNetInit init);
MetaNetInit parse_metanet_init(std::string_view name);

struct SplitSpec {
    std::vector<std::size_t> base_classes;
    std::vector<std::size_t> new_classes;

    /// First ceil(M/2) classes are base, the rest new.
    static SplitSpec halves(std::size_t num_classes);
    /// Disjoint, covering 0..M-1, sizes within one of each other.
    void validate(std::size_t num_classes) const;
};

/// Dataset indices, `shots` per base class, grouped by class in split order.
struct FewShotSample {
    std::vector<std::size_t> indices;
};

/// Draws without replacement; throws DataError naming a class that has
/// fewer than `shots` images.
FewShotSample sample_few_shot(const Dataset& ds, const SplitSpec& split, std::size_t shots, std::uint64_t seed);

/// -log(probs[label]) with the log floor. Throws IndexError for a bad label.
Tensor contrastive_loss(const Tensor& probs, std::size_t label);

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double lr_at(std::size_t step, std::size_t total_steps, double base_lr);

struct TrainedState {
    TrainConfig config;
    std::uint64_t encoder_seed = 0;
    std::vector<std::string> base_class_names;
    std::vector<std::string> new_class_names;
    LearnableParams params;
    std::vector<double> epoch_losses;
    FewShotSample sample;
};

/// Features of every dataset image, in dataset order.
std::vector<ImageFeatures> encode_dataset(const Dataset& ds, const EncoderWeights& encoders);

/// Few-shot SGD over the base classes. `features` may be null, in which
/// case images are encoded on demand.
TrainedState train(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg,
                   const EncoderWeights& encoders, const std::vector<ImageFeatures>* features = nullptr);

/// Text header (config echo plus `extra` key=value pairs) followed by the
/// learnable tensors as shape-prefixed little-endian f64.
void save_checkpoint(const TrainedState& state, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& extra = {});
struct Checkpoint {
    TrainedState state;
    std::map<std::string, std::string> extra;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace promptforge
