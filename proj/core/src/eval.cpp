#include "promptforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "promptforge/errors.hpp"
#include "promptforge/text_format.hpp"

namespace promptforge {

namespace {

std::vector<std::string> names_of(const Dataset& ds, const std::vector<std::size_t>& classes) {
    std::vector<std::string> out;
    for (auto c : classes) out.push_back(ds.class_names.at(c));
    return out;
}

void check_compatible(const TrainedState& state, const Dataset& ds, const SplitSpec& split,
                      const EncoderWeights& encoders) {
    split.validate(ds.num_classes());
    if (names_of(ds, split.base_classes) != state.base_class_names) {
        throw EvaluationError("dataset base classes {" + join(names_of(ds, split.base_classes), ", ") +
                              "} differ from the trained classes {" + join(state.base_class_names, ", ") + "}");
    }
    if (encoders.seed != state.encoder_seed) {
        throw EvaluationError("state was trained against encoder seed " + std::to_string(state.encoder_seed));
    }
}

ImageFeatures feature_of(const Dataset& ds, std::size_t idx, const EncoderWeights& encoders,
                         const std::vector<ImageFeatures>* features) {
    return features ? (*features)[idx] : encode_image(ds.samples[idx].image, encoders);
}

struct Tally {
    std::size_t correct = 0;
    std::size_t total = 0;
};

std::vector<Tally> tally(const TrainedState& state, const Dataset& ds, const std::vector<std::size_t>& indices,
                         const std::vector<std::size_t>& classes, const EncoderWeights& encoders,
                         const std::vector<ImageFeatures>* features) {
    const MethodModel model(encoders, state.config.resolved_method(), state.params, names_of(ds, classes));
    const TextEmbedding g = model.static_text();
    std::vector<Tally> per_class(classes.size());
    for (auto idx : indices) {
        const auto label = ds.samples[idx].label;
        const auto pos = std::find(classes.begin(), classes.end(), label);
        if (pos == classes.end()) throw EvaluationError("image label outside the evaluated class group");
        const auto local = static_cast<std::size_t>(pos - classes.begin());
        const auto out = model.forward(feature_of(ds, idx, encoders, features), g);
        per_class[local].total += 1;
        if (argmax(out.logits.data()) == local) per_class[local].correct += 1;
    }
    return per_class;
}

double percent(std::size_t correct, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

double harmonic_mean(double base, double novel) {
    if (base + novel == 0.0) return 0.0;
    return 2.0 * base * novel / (base + novel);
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw DimensionError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

GroupAccuracy evaluate_group(const TrainedState& state, const Dataset& ds, const SplitSpec& split, ClassGroup which,
                             const EncoderWeights& encoders, const std::vector<ImageFeatures>* features) {
    check_compatible(state, ds, split, encoders);
    const auto& classes = which == ClassGroup::Base ? split.base_classes : split.new_classes;
    if (classes.empty()) throw EvaluationError("empty class group");
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (std::find(classes.begin(), classes.end(), ds.samples[i].label) != classes.end()) indices.push_back(i);
    }
    const auto per_class = tally(state, ds, indices, classes, encoders, features);
    GroupAccuracy out;
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        out.per_class[ds.class_names[classes[i]]] = percent(per_class[i].correct, per_class[i].total);
        correct += per_class[i].correct;
        total += per_class[i].total;
    }
    out.accuracy = percent(correct, total);
    return out;
}

double evaluate(const TrainedState& state, const Dataset& ds, const SplitSpec& split, ClassGroup which,
                const EncoderWeights& encoders, const std::vector<ImageFeatures>* features) {
    return evaluate_group(state, ds, split, which, encoders, features).accuracy;
}

double accuracy_on(const TrainedState& state, const Dataset& ds, const std::vector<std::size_t>& indices,
                   const std::vector<std::size_t>& classes, const EncoderWeights& encoders,
                   const std::vector<ImageFeatures>* features) {
    std::size_t correct = 0, total = 0;
    for (const auto& t : tally(state, ds, indices, classes, encoders, features)) {
        correct += t.correct;
        total += t.total;
    }
    return percent(correct, total);
}

double discrimination_distance(const std::vector<TextEmbedding>& per_image, const std::vector<std::size_t>& labels) {
    if (per_image.size() != labels.size()) throw DimensionError("one label per embedding set required");
    if (per_image.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < per_image.size(); ++n) {
        const Tensor& g = per_image[n].per_class;
        const std::size_t m = g.rows();
        if (m < 2) throw EvaluationError("discrimination needs at least two classes");
        const auto cos = row_cosines(row(g, labels[n]), g);
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != labels[n]) acc += 1.0 - cos.at(j);
        }
        total += acc / static_cast<double>(m - 1);
    }
    return total / static_cast<double>(per_image.size());
}

double discrimination_distance(const TrainedState& state, const Dataset& ds, const EncoderWeights& encoders,
                               const std::vector<ImageFeatures>* features) {
    if (encoders.seed != state.encoder_seed) {
        throw EvaluationError("state was trained against encoder seed " + std::to_string(state.encoder_seed));
    }
    const MethodModel model(encoders, state.config.resolved_method(), state.params, ds.class_names);
    const TextEmbedding g = model.static_text();
    std::vector<TextEmbedding> per_image;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        per_image.push_back(model.forward(feature_of(ds, i, encoders, features), g).final_text);
        labels.push_back(ds.samples[i].label);
    }
    return discrimination_distance(per_image, labels);
}

EvalReport evaluate_all(const TrainedState& state, const Dataset& ds, const SplitSpec& split,
                        const EncoderWeights& encoders, const std::vector<ImageFeatures>* features) {
    EvalReport r;
    const auto base = evaluate_group(state, ds, split, ClassGroup::Base, encoders, features);
    const auto novel = evaluate_group(state, ds, split, ClassGroup::New, encoders, features);
    r.base_acc = base.accuracy;
    r.new_acc = novel.accuracy;
    r.hos = harmonic_mean(r.base_acc, r.new_acc);
    r.per_class_acc = base.per_class;
    r.per_class_acc.insert(novel.per_class.begin(), novel.per_class.end());
    r.discrimination = discrimination_distance(state, ds, encoders, features);
    return r;
}

Heatmap attention_heatmap(const AttentionRecord& rec, std::size_t class_id) {
    if (rec.a_t.rank() != 2) throw EvaluationError("attention record has no image-to-text map");
    if (class_id >= rec.a_t.rows()) {
        throw IndexError("class " + std::to_string(class_id) + " out of range for " +
                         std::to_string(rec.a_t.rows()) + " classes");
    }
    const std::size_t n = rec.a_t.cols();
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (side * side != n) throw DimensionError("patch count " + std::to_string(n) + " is not a square grid");
    Heatmap h;
    h.rows = h.cols = side;
    const auto values = row(rec.a_t, class_id).values();
    const double lo = std::min(0.0, *std::min_element(values.begin(), values.end()));
    double hi = 0.0;
    for (double v : values) hi = std::max(hi, v - lo);
    for (double v : values) h.values.push_back(hi > 0.0 ? (v - lo) / hi : 0.0);
    return h;
}

void export_heatmap(const AttentionRecord& rec, std::size_t image_id, std::size_t class_id,
                    const std::filesystem::path& path) {
    const Heatmap h = attention_heatmap(rec, class_id);
    std::ofstream pgm(path);
    if (!pgm) throw IoError("cannot write " + path.string());
    pgm << "P2\n# image " << image_id << " class " << class_id;
    if (class_id < rec.class_names.size()) pgm << " (" << rec.class_names[class_id] << ")";
    pgm << "\n" << h.cols << " " << h.rows << "\n255\n";
    for (std::size_t r = 0; r < h.rows; ++r) {
        for (std::size_t c = 0; c < h.cols; ++c) {
            pgm << (c ? " " : "") << std::lround(255.0 * h.values[r * h.cols + c]);
        }
        pgm << "\n";
    }
    if (!pgm) throw IoError("write failed for " + path.string());

    auto csv_path = path;
    csv_path.replace_extension(".csv");
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    for (std::size_t r = 0; r < h.rows; ++r) {
        for (std::size_t c = 0; c < h.cols; ++c) csv << (c ? "," : "") << format_double(h.values[r * h.cols + c]);
        csv << "\n";
    }
    if (!csv) throw IoError("write failed for " + csv_path.string());
}

Heatmap read_heatmap_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    Heatmap h;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (h.rows == 0) h.cols = cells.size();
        if (cells.size() != h.cols) throw FormatError("ragged heatmap CSV " + path.string());
        for (const auto& cell : cells) h.values.push_back(parse_double(cell, "heatmap cell"));
        ++h.rows;
    }
    return h;
}

}  // namespace promptforge
