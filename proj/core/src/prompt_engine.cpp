#include "promptforge/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "promptforge/errors.hpp"
#include "promptforge/rng.hpp"

namespace promptforge {

namespace {

constexpr std::uint64_t kContextStream = 1000;
constexpr std::uint64_t kPromptNetStream = 1100;
constexpr std::uint64_t kFeatureNetStream = 1200;

const char* prompt_name(PromptMode m) {
    switch (m) {
        case PromptMode::Handcrafted: return "clip";
        case PromptMode::CoOp: return "coop";
        case PromptMode::CoCoOp: return "cocoop";
        case PromptMode::MlpPl: return "mlp_pl";
        case PromptMode::Ctp: return "ctp";
    }
    return "?";
}

const char* image_name(ImageMode m) {
    switch (m) {
        case ImageMode::None: return "none";
        case ImageMode::MlpFt: return "mlp_ft";
        case ImageMode::Tft: return "tft";
    }
    return "?";
}

std::string normalise(std::string_view name) {
    std::string out;
    for (char ch : name) {
        if (ch == '-') ch = '_';
        if (!std::isspace(static_cast<unsigned char>(ch))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    return out;
}

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("temperature must be positive");
}

Tensor uniform_tensor(Shape shape, std::uint64_t seed, std::uint64_t stream, double bound) {
    std::vector<double> v(shape_size(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = bound * (2.0 * counter_uniform(seed, stream, i) - 1.0);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor normal_tensor(Shape shape, std::uint64_t seed, std::uint64_t stream, double stddev) {
    CounterNormal gen(seed, stream);
    std::vector<double> v(shape_size(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = stddev * gen(i);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor fresh_leaf(const Tensor& t) { return Tensor::from(t.shape(), t.values(), true); }

MetaNet fresh_net(const MetaNet& n) {
    return {fresh_leaf(n.w1), fresh_leaf(n.b1), fresh_leaf(n.w2), fresh_leaf(n.b2)};
}

// Context rows with a residual row added to each, followed by the class token.
Tensor sequence(const Tensor& context, std::size_t k, const Tensor* residual, const Tensor& class_token) {
    if (k == 0) return concat_rows({class_token});
    const Tensor ctx = residual ? add(context, *residual) : context;
    return concat_rows({ctx, class_token});
}

}  // namespace

void MethodSpec::validate() const {
    if (prompt == PromptMode::Handcrafted && image != ImageMode::None) {
        throw ConfigError("hand-crafted prompts cannot be combined with feature tuning");
    }
    check_tau(tau);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
}

bool MethodSpec::blended() const {
    if (prompt == PromptMode::CoCoOp || prompt == PromptMode::Handcrafted) return false;
    return prompt == PromptMode::MlpPl || prompt == PromptMode::Ctp || image != ImageMode::None;
}

std::string MethodSpec::name() const {
    if (image == ImageMode::None) return prompt_name(prompt);
    if (prompt == PromptMode::CoOp) return image_name(image);
    if (prompt == PromptMode::Ctp && image == ImageMode::Tft) return "full";
    return std::string(prompt_name(prompt)) + "+" + image_name(image);
}

MethodSpec MethodSpec::parse(std::string_view raw, double lambda, double tau) {
    const std::string name = normalise(raw);
    MethodSpec spec;
    spec.lambda = lambda;
    spec.tau = tau;
    auto set_part = [&](std::string_view part) {
        if (part == "clip") spec.prompt = PromptMode::Handcrafted;
        else if (part == "coop") spec.prompt = PromptMode::CoOp;
        else if (part == "cocoop") spec.prompt = PromptMode::CoCoOp;
        else if (part == "mlp_pl") spec.prompt = PromptMode::MlpPl;
        else if (part == "ctp") spec.prompt = PromptMode::Ctp;
        else if (part == "mlp_ft") spec.image = ImageMode::MlpFt;
        else if (part == "tft") spec.image = ImageMode::Tft;
        else if (part == "full") spec.prompt = PromptMode::Ctp, spec.image = ImageMode::Tft;
        else throw ConfigError("unknown method '" + std::string(raw) + "'");
    };
    std::size_t start = 0;
    while (true) {
        const auto plus = name.find('+', start);
        set_part(std::string_view(name).substr(start, plus == std::string::npos ? std::string::npos : plus - start));
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    spec.validate();
    return spec;
}

std::size_t MetaNet::hidden_width(std::size_t d) {
    return std::max<std::size_t>(4, (d + 15) / 16);
}

MetaNet MetaNet::uniform_init(std::size_t d, std::uint64_t seed, std::uint64_t stream) {
    const std::size_t h = hidden_width(d);
    const double b_in = 1.0 / std::sqrt(static_cast<double>(d));
    const double b_hidden = 1.0 / std::sqrt(static_cast<double>(h));
    return {uniform_tensor({h, d}, seed, stream + 0, b_in), uniform_tensor({h}, seed, stream + 1, b_in),
            uniform_tensor({d, h}, seed, stream + 2, b_hidden), uniform_tensor({d}, seed, stream + 3, b_hidden)};
}

MetaNet MetaNet::normal_init(std::size_t d, std::uint64_t seed, std::uint64_t stream, double stddev) {
    const std::size_t h = hidden_width(d);
    return {normal_tensor({h, d}, seed, stream + 0, stddev), Tensor::zeros({h}, true),
            normal_tensor({d, h}, seed, stream + 2, stddev), Tensor::zeros({d}, true)};
}

MetaNet MetaNet::zeros(std::size_t d) {
    const std::size_t h = hidden_width(d);
    return {Tensor::zeros({h, d}, true), Tensor::zeros({h}, true), Tensor::zeros({d, h}, true),
            Tensor::zeros({d}, true)};
}

Tensor MetaNet::forward(const Tensor& x) const {
    if (x.rank() == 1) return row(forward(concat_rows({x})), 0);
    return linear(relu(linear(x, w1, b1)), w2, b2);
}

std::size_t PromptSet::k() const { return context.rank() == 2 ? context.rows() : 0; }

Tensor PromptSet::pooled_query() const {
    const std::size_t m = num_classes();
    const double inv = 1.0 / static_cast<double>(k() + 1);
    if (k() == 0) return class_tokens;
    const Tensor ctx_sum = repeat_rows(scale(mean_rows(context), static_cast<double>(k())), m);
    return scale(add(ctx_sum, class_tokens), inv);
}

Tensor clip_probability(const ImageFeatures& img, const TextEmbedding& text, double tau) {
    check_tau(tau);
    return softmax_rows(scale(row_cosines(img.pooled, text.per_class), 1.0 / tau));
}

PromptSequences build_handcrafted_prompts(const Tensor& template_context, const Tensor& class_tokens) {
    PromptSequences out;
    for (std::size_t i = 0; i < class_tokens.rows(); ++i) {
        out.push_back(concat_rows({template_context, row(class_tokens, i)}));
    }
    return out;
}

PromptSequences build_coop_prompts(const PromptSet& ps) {
    PromptSequences out;
    for (std::size_t i = 0; i < ps.num_classes(); ++i) {
        out.push_back(sequence(ps.context, ps.k(), nullptr, row(ps.class_tokens, i)));
    }
    return out;
}

PromptSequences build_cocoop_prompts(const PromptSet& ps, const ImageFeatures& img, const MetaNet& net) {
    const Tensor pi = net.forward(img.pooled);
    PromptSequences out;
    for (std::size_t i = 0; i < ps.num_classes(); ++i) {
        out.push_back(sequence(ps.context, ps.k(), &pi, row(ps.class_tokens, i)));
    }
    return out;
}

CtpAttention ctp_attention(const PromptSet& ps, const ImageFeatures& img) {
    const Tensor a_t = matmul(ps.pooled_query(), transpose(img.patches));
    return {a_t, matmul(softmax_rows(a_t), img.patches)};
}

CtpPrompts build_ctp_prompts(const PromptSet& ps, const ImageFeatures& img) {
    const CtpAttention att = ctp_attention(ps, img);
    CtpPrompts out;
    for (std::size_t i = 0; i < ps.num_classes(); ++i) {
        const Tensor residual = row(att.f_x_t, i);
        out.prompts.push_back(sequence(ps.context, ps.k(), &residual, row(ps.class_tokens, i)));
    }
    out.attention.a_t = att.a_t;
    out.residuals = att.f_x_t;
    return out;
}

TftResult tft_augment(const ImageFeatures& img, const TextEmbedding& g_a) {
    const Tensor a_x = matmul(img.patches, transpose(g_a.per_class));
    return {add(matmul(softmax_rows(a_x), g_a.per_class), img.patches), a_x};
}

Tensor blended_logits(const Tensor& pooled, const TextEmbedding& base_text, const Tensor& f_a,
                      const TextEmbedding& g_a, double lambda, double tau) {
    check_tau(tau);
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
    const Tensor base = row_cosines(pooled, base_text.per_class);
    if (lambda == 0.0) return scale(base, 1.0 / tau);
    return scale(add(base, scale(row_cosines(f_a, g_a.per_class), lambda)), 1.0 / tau);
}

Tensor blended_probability(const ImageFeatures& img, const TextEmbedding& base_text, const Tensor& f_a,
                           const TextEmbedding& g_a, const MethodSpec& spec) {
    return softmax_rows(blended_logits(img.pooled, base_text, f_a, g_a, spec.lambda, spec.tau));
}

PromptSequences mlp_pl_prompts(const PromptSet& ps, const ImageFeatures& img, const MetaNet& net) {
    return build_cocoop_prompts(ps, img, net);
}

Tensor mlp_ft_features(const ImageFeatures& img, const TextEmbedding& text, const MetaNet& net) {
    return add(img.patches, net.forward(mean_rows(text.per_class)));
}

std::vector<Tensor> LearnableParams::tensors() const {
    std::vector<Tensor> out;
    if (context.rank() == 2) out.push_back(context);
    for (const auto* net : {&prompt_net, &feature_net}) {
        if (*net) {
            for (const auto& t : (*net)->parameters()) out.push_back(t);
        }
    }
    return out;
}

LearnableParams LearnableParams::clone() const {
    LearnableParams out;
    if (context.rank() == 2) out.context = fresh_leaf(context);
    if (prompt_net) out.prompt_net = fresh_net(*prompt_net);
    if (feature_net) out.feature_net = fresh_net(*feature_net);
    return out;
}

LearnableParams init_params(const MethodSpec& spec, std::size_t k, std::size_t d, std::uint64_t seed,
                            MetaNetInit init) {
    spec.validate();
    LearnableParams p;
    if (!spec.learnable()) return p;
    if (k > 0) p.context = normal_tensor({k, d}, seed, kContextStream, 0.02);
    auto make = [&](std::uint64_t stream) {
        return init == MetaNetInit::Uniform ? MetaNet::uniform_init(d, seed, stream)
                                            : MetaNet::normal_init(d, seed, stream);
    };
    if (spec.has_prompt_net()) p.prompt_net = make(kPromptNetStream);
    if (spec.has_feature_net()) p.feature_net = make(kFeatureNetStream);
    return p;
}

MethodModel::MethodModel(const EncoderWeights& encoders, MethodSpec spec, LearnableParams params,
                         const std::vector<std::string>& class_names)
    : encoders_(&encoders), spec_(spec), params_(std::move(params)), class_names_(class_names) {
    spec_.validate();
    if (spec_.has_prompt_net() && !params_.prompt_net) throw ConfigError(spec_.name() + " needs a prompt network");
    if (spec_.has_feature_net() && !params_.feature_net) {
        throw ConfigError(spec_.name() + " needs a feature network");
    }
    prompt_set_.context = params_.context;
    prompt_set_.class_tokens = class_tokens(class_names_, encoders);
}

TextEmbedding MethodModel::static_text() const {
    if (spec_.prompt == PromptMode::Handcrafted) {
        return encode_text(build_handcrafted_prompts(template_context(*encoders_), prompt_set_.class_tokens),
                           *encoders_);
    }
    return encode_text(build_coop_prompts(prompt_set_), *encoders_);
}

MethodModel::Output MethodModel::forward(const ImageFeatures& img, const TextEmbedding& g) const {
    Output out;
    TextEmbedding g_aug = g;
    AttentionRecord record;
    bool has_record = false;
    switch (spec_.prompt) {
        case PromptMode::CoCoOp:
            g_aug = encode_text(build_cocoop_prompts(prompt_set_, img, *params_.prompt_net), *encoders_);
            break;
        case PromptMode::MlpPl:
            g_aug = encode_text(mlp_pl_prompts(prompt_set_, img, *params_.prompt_net), *encoders_);
            break;
        case PromptMode::Ctp: {
            auto ctp = build_ctp_prompts(prompt_set_, img);
            g_aug = encode_text(ctp.prompts, *encoders_);
            record = std::move(ctp.attention);
            has_record = true;
            break;
        }
        case PromptMode::Handcrafted:
        case PromptMode::CoOp:
            break;
    }

    Tensor f_tilde = img.pooled;
    if (spec_.image == ImageMode::MlpFt) {
        f_tilde = mean_rows(mlp_ft_features(img, g_aug, *params_.feature_net));
    } else if (spec_.image == ImageMode::Tft) {
        auto tft = tft_augment(img, g_aug);
        f_tilde = mean_rows(tft.f_a);
        record.a_x = tft.a_x;
        has_record = true;
    }

    if (spec_.prompt == PromptMode::CoCoOp) {
        out.logits = scale(row_cosines(f_tilde, g_aug.per_class), 1.0 / spec_.tau);
    } else if (spec_.blended()) {
        out.logits = blended_logits(img.pooled, g, f_tilde, g_aug, spec_.lambda, spec_.tau);
    } else {
        out.logits = scale(row_cosines(img.pooled, g.per_class), 1.0 / spec_.tau);
    }
    out.probs = softmax_rows(out.logits);
    out.final_text = g_aug;
    if (has_record) {
        record.class_names = class_names_;
        out.attention = std::move(record);
    }
    return out;
}

}  // namespace promptforge
