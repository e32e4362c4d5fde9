#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "promptforge/dataset.hpp"
#include "promptforge/encoders.hpp"
#include "promptforge/prompt_engine.hpp"
#include "promptforge/trainer.hpp"

namespace promptforge {

enum class ClassGroup { Base, New };

/// 2ab / (a + b), or 0 when a + b == 0.
double harmonic_mean(double base, double novel);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct GroupAccuracy {
    double accuracy = 0.0;  // percent
    std::map<std::string, double> per_class;
};

/// Top-1 accuracy of `state` on every image of the chosen class group, with
/// the softmax over that group only. Throws EvaluationError when the
/// dataset's base class names differ from those the state was trained on.
GroupAccuracy evaluate_group(const TrainedState& state, const Dataset& ds, const SplitSpec& split, ClassGroup which,
                             const EncoderWeights& encoders, const std::vector<ImageFeatures>* features = nullptr);
double evaluate(const TrainedState& state, const Dataset& ds, const SplitSpec& split, ClassGroup which,
                const EncoderWeights& encoders, const std::vector<ImageFeatures>* features = nullptr);

/// Accuracy over the given dataset indices, classifying among `classes`.
double accuracy_on(const TrainedState& state, const Dataset& ds, const std::vector<std::size_t>& indices,
                   const std::vector<std::size_t>& classes, const EncoderWeights& encoders,
                   const std::vector<ImageFeatures>* features = nullptr);

/// Mean over images of the mean over negative classes of
/// 1 - cos(g[label], g[neg]), with g the method's final per-class
/// embeddings for that image, over all dataset classes.
double discrimination_distance(const TrainedState& state, const Dataset& ds, const EncoderWeights& encoders,
                               const std::vector<ImageFeatures>* features = nullptr);
/// Same measure on precomputed per-image embeddings.
double discrimination_distance(const std::vector<TextEmbedding>& per_image, const std::vector<std::size_t>& labels);

struct EvalReport {
    double base_acc = 0.0;
    double new_acc = 0.0;
    double hos = 0.0;
    std::map<std::string, double> per_class_acc;
    double discrimination = 0.0;
};

EvalReport evaluate_all(const TrainedState& state, const Dataset& ds, const SplitSpec& split,
                        const EncoderWeights& encoders, const std::vector<ImageFeatures>* features = nullptr);

struct Heatmap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major, max-normalised to [0, 1]
};

/// Row `class_id` of A^t on the patch grid, max-normalised. A row whose
/// maximum is not positive is shifted by its minimum first.
Heatmap attention_heatmap(const AttentionRecord& rec, std::size_t class_id);
/// Writes `path` as a P2 graymap (maxval 255) and `path` with a .csv
/// extension holding the normalised values.
void export_heatmap(const AttentionRecord& rec, std::size_t image_id, std::size_t class_id,
                    const std::filesystem::path& path);
Heatmap read_heatmap_csv(const std::filesystem::path& path);

}  // namespace promptforge
