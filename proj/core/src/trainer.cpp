#include "promptforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "promptforge/binary_io.hpp"
#include "promptforge/errors.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/text_format.hpp"

namespace promptforge {

namespace {

constexpr std::uint64_t kSampleStream = 0x5a4d504cULL;
constexpr std::uint64_t kShuffleStream = 0x53485546ULL;
constexpr const char* kCheckpointMagic = "PROMPTFORGE-CHECKPOINT 1";

Tensor sgd_step(const Tensor& p, double lr) {
    std::vector<double> v = p.values();
    const auto g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    return Tensor::from(p.shape(), std::move(v), true);
}

LearnableParams apply_sgd(const LearnableParams& p, double lr) {
    LearnableParams out;
    if (p.context.rank() == 2) out.context = sgd_step(p.context, lr);
    auto step_net = [&](const MetaNet& n) {
        return MetaNet{sgd_step(n.w1, lr), sgd_step(n.b1, lr), sgd_step(n.w2, lr), sgd_step(n.b2, lr)};
    };
    if (p.prompt_net) out.prompt_net = step_net(*p.prompt_net);
    if (p.feature_net) out.feature_net = step_net(*p.feature_net);
    return out;
}

std::vector<std::string> names_of(const Dataset& ds, const std::vector<std::size_t>& classes) {
    std::vector<std::string> out;
    for (auto c : classes) out.push_back(ds.class_names.at(c));
    return out;
}

}  // namespace

MethodSpec TrainConfig::resolved_method() const {
    MethodSpec m = method;
    m.lambda = lambda;
    m.tau = tau;
    return m;
}

void TrainConfig::validate() const {
    resolved_method().validate();
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ParameterError("base_lr must be positive");
    if (shots == 0) throw ParameterError("shots must be positive");
    if (batch_size == 0) throw ParameterError("batch_size must be positive");
}

std::string metanet_init_name(MetaNetInit init) { return init == MetaNetInit::Uniform ? "uniform" : "normal"; }

MetaNetInit parse_metanet_init(std::string_view name) {
    if (name == "uniform") return MetaNetInit::Uniform;
    if (name == "normal") return MetaNetInit::Normal;
    throw ConfigError("metanet_init must be uniform or normal, got '" + std::string(name) + "'");
}

SplitSpec SplitSpec::halves(std::size_t num_classes) {
    SplitSpec s;
    const std::size_t base = (num_classes + 1) / 2;
    for (std::size_t c = 0; c < num_classes; ++c) (c < base ? s.base_classes : s.new_classes).push_back(c);
    return s;
}

void SplitSpec::validate(std::size_t num_classes) const {
    std::set<std::size_t> seen;
    for (const auto* group : {&base_classes, &new_classes}) {
        for (auto c : *group) {
            if (c >= num_classes) throw DataError("split names class " + std::to_string(c) + " out of range");
            if (!seen.insert(c).second) throw DataError("class " + std::to_string(c) + " appears twice in split");
        }
    }
    if (seen.size() != num_classes) throw DataError("split does not cover every class");
    const auto a = base_classes.size(), b = new_classes.size();
    if ((a > b ? a - b : b - a) > 1) throw DataError("base and new groups differ in size by more than one");
}

FewShotSample sample_few_shot(const Dataset& ds, const SplitSpec& split, std::size_t shots, std::uint64_t seed) {
    Rng rng(mix64(seed ^ kSampleStream));
    FewShotSample out;
    for (auto c : split.base_classes) {
        auto pool = ds.indices_of(c);
        if (pool.size() < shots) {
            throw DataError("class '" + ds.class_names.at(c) + "' has " + std::to_string(pool.size()) +
                            " images, " + std::to_string(shots) + " shots needed");
        }
        // partial Fisher-Yates: the first `shots` slots become the sample
        for (std::size_t i = 0; i < shots; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<long>(shots));
        std::sort(chosen.begin(), chosen.end());
        out.indices.insert(out.indices.end(), chosen.begin(), chosen.end());
    }
    return out;
}

Tensor contrastive_loss(const Tensor& probs, std::size_t label) {
    if (probs.rank() != 1) throw RankError("contrastive_loss expects a probability vector");
    if (label >= probs.size()) {
        throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                         " classes");
    }
    return scale(log(element(probs, label)), -1.0);
}

double lr_at(std::size_t step, std::size_t total_steps, double base_lr) {
    if (total_steps == 0) throw ParameterError("total_steps must be positive");
    if (step >= total_steps) throw ParameterError("step beyond schedule");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<ImageFeatures> encode_dataset(const Dataset& ds, const EncoderWeights& encoders) {
    std::vector<ImageFeatures> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.push_back(encode_image(s.image, encoders));
    return out;
}

TrainedState train(const Dataset& ds, const SplitSpec& split, const TrainConfig& cfg, const EncoderWeights& encoders,
                   const std::vector<ImageFeatures>* features) {
    cfg.validate();
    ds.validate();
    split.validate(ds.num_classes());
    if (features && features->size() != ds.samples.size()) throw DataError("feature cache does not match dataset");
    const MethodSpec spec = cfg.resolved_method();

    TrainedState state;
    state.config = cfg;
    state.config.method = spec;
    state.encoder_seed = encoders.seed;
    state.base_class_names = names_of(ds, split.base_classes);
    state.new_class_names = names_of(ds, split.new_classes);
    state.sample = sample_few_shot(ds, split, cfg.shots, cfg.seed);
    state.params = init_params(spec, cfg.context_length, encoders.dim(), cfg.seed, cfg.metanet_init);

    std::vector<std::size_t> remap(ds.num_classes(), 0);
    for (std::size_t i = 0; i < split.base_classes.size(); ++i) remap[split.base_classes[i]] = i;

    auto feature = [&](std::size_t idx) {
        return features ? (*features)[idx] : encode_image(ds.samples[idx].image, encoders);
    };

    MethodModel model(encoders, spec, state.params, state.base_class_names);
    std::vector<std::size_t> order = state.sample.indices;
    const std::size_t n = order.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;
    Rng shuffle_rng(mix64(cfg.seed ^ kShuffleStream));
    const bool trainable = !state.params.tensors().empty();
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const TextEmbedding g = model.static_text();
            std::vector<Tensor> losses;
            for (std::size_t b = start; b < end; ++b) {
                const auto idx = order[b];
                const auto out = model.forward(feature(idx), g);
                losses.push_back(contrastive_loss(out.probs, remap[ds.samples[idx].label]));
            }
            Tensor total = losses.front();
            for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
            const Tensor loss = scale(total, 1.0 / static_cast<double>(losses.size()));
            epoch_loss += total.item();
            if (!std::isfinite(loss.item())) throw DataError("non-finite loss at step " + std::to_string(step));
            if (trainable) {
                backward(loss);
                state.params = apply_sgd(state.params, lr_at(step, total_steps, cfg.base_lr));
                model = MethodModel(encoders, spec, state.params, state.base_class_names);
            }
            ++step;
        }
        state.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    return state;
}

void save_checkpoint(const TrainedState& state, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& extra) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const auto& c = state.config;
    out << kCheckpointMagic << "\n";
    out << "method=" << c.method.name() << "\n";
    out << "epochs=" << c.epochs << "\n";
    out << "base_lr=" << format_double(c.base_lr) << "\n";
    out << "lambda=" << format_double(c.lambda) << "\n";
    out << "tau=" << format_double(c.tau) << "\n";
    out << "shots=" << c.shots << "\n";
    out << "seed=" << c.seed << "\n";
    out << "batch_size=" << c.batch_size << "\n";
    out << "context_length=" << c.context_length << "\n";
    out << "metanet_init=" << metanet_init_name(c.metanet_init) << "\n";
    out << "encoder_seed=" << state.encoder_seed << "\n";
    out << "base_classes=" << join(state.base_class_names, "|") << "\n";
    out << "new_classes=" << join(state.new_class_names, "|") << "\n";
    std::vector<std::string> losses;
    for (double l : state.epoch_losses) losses.push_back(format_double(l));
    out << "epoch_losses=" << join(losses, ",") << "\n";
    for (const auto& [k, v] : extra) out << "x." << k << "=" << v << "\n";
    const auto tensors = state.params.tensors();
    out << "tensors=" << tensors.size() << "\nEND\n";
    for (const auto& t : tensors) write_tensor(out, t);
    if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != kCheckpointMagic) throw FormatError(path.string() + " is not a checkpoint");
    std::map<std::string, std::string> kv;
    Checkpoint ck;
    while (std::getline(in, line) && line != "END") {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed checkpoint header line: " + line);
        const auto key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key.rfind("x.", 0) == 0) ck.extra[key.substr(2)] = value;
        else kv[key] = value;
    }
    if (line != "END") throw FormatError("checkpoint header not terminated");
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint missing '" + key + "'");
        return it->second;
    };
    auto& s = ck.state;
    auto& c = s.config;
    c.lambda = parse_double(get("lambda"), "lambda");
    c.tau = parse_double(get("tau"), "tau");
    c.method = MethodSpec::parse(get("method"), c.lambda, c.tau);
    c.epochs = parse_size(get("epochs"), "epochs");
    c.base_lr = parse_double(get("base_lr"), "base_lr");
    c.shots = parse_size(get("shots"), "shots");
    c.seed = parse_u64(get("seed"), "seed");
    c.batch_size = parse_size(get("batch_size"), "batch_size");
    c.context_length = parse_size(get("context_length"), "context_length");
    c.metanet_init = parse_metanet_init(get("metanet_init"));
    s.encoder_seed = parse_u64(get("encoder_seed"), "encoder_seed");
    s.base_class_names = split(get("base_classes"), '|');
    s.new_class_names = split(get("new_classes"), '|');
    for (const auto& item : split(get("epoch_losses"), ',')) s.epoch_losses.push_back(parse_double(item, "epoch_losses"));

    const std::size_t count = parse_size(get("tensors"), "tensors");
    std::vector<Tensor> tensors;
    for (std::size_t i = 0; i < count; ++i) tensors.push_back(read_tensor(in, true));
    std::size_t next = 0;
    auto take = [&]() {
        if (next >= tensors.size()) throw FormatError("checkpoint has too few tensors for " + c.method.name());
        return tensors[next++];
    };
    const MethodSpec spec = c.resolved_method();
    if (spec.learnable() && c.context_length > 0) s.params.context = take();
    auto take_net = [&] { return MetaNet{take(), take(), take(), take()}; };
    if (spec.has_prompt_net()) s.params.prompt_net = take_net();
    if (spec.has_feature_net()) s.params.feature_net = take_net();
    if (next != tensors.size()) throw FormatError("checkpoint has unexpected extra tensors");
    return ck;
}

}  // namespace promptforge
