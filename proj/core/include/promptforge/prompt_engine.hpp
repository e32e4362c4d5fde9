#pragma once

// Prompt construction and feature tuning for every supported method:
// hand-crafted zero-shot prompts, static learned context (CoOp), a shared
// image-conditional residual (CoCoOp), class-aware text prompts (CTP),
// text-guided feature tuning (TFT), the two Linear-ReLU-Linear ablations,
// and the lambda-blended probability head.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptforge/encoders.hpp"
#include "promptforge/tensor.hpp"

namespace promptforge {

enum class PromptMode { Handcrafted, CoOp, CoCoOp, MlpPl, Ctp };
enum class ImageMode { None, MlpFt, Tft };

struct MethodSpec {
    PromptMode prompt = PromptMode::CoOp;
    ImageMode image = ImageMode::None;
    double lambda = 0.2;
    double tau = 0.01;

    /// Throws ConfigError / ParameterError for invalid combinations or values.
    void validate() const;
    bool has_prompt_net() const { return prompt == PromptMode::CoCoOp || prompt == PromptMode::MlpPl; }
    bool has_feature_net() const { return image == ImageMode::MlpFt; }
    bool learnable() const { return prompt != PromptMode::Handcrafted; }
    /// True when an augmented similarity is blended with the base one.
    bool blended() const;

    /// Canonical name: clip, coop, cocoop, mlp_pl, ctp, mlp_ft, tft, full,
    /// or "<prompt>+<image>" for other combinations (e.g. mlp_pl+mlp_ft).
    std::string name() const;
    static MethodSpec parse(std::string_view name, double lambda = 0.2, double tau = 0.01);
    bool operator==(const MethodSpec&) const = default;
};

/// Linear-ReLU-Linear block, d -> hidden -> d.
struct MetaNet {
    Tensor w1, b1, w2, b2;

    static std::size_t hidden_width(std::size_t d);
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    static MetaNet uniform_init(std::size_t d, std::uint64_t seed, std::uint64_t stream);
    /// normal(0, stddev) weights, zero biases.
    static MetaNet normal_init(std::size_t d, std::uint64_t seed, std::uint64_t stream,
                               double stddev = 0.02);
    static MetaNet zeros(std::size_t d);

    /// x is [d] or [n x d].
    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
};

/// Context vectors plus frozen class tokens.
struct PromptSet {
    Tensor context;       // [k x d], learnable; k may be 0 (empty tensor)
    Tensor class_tokens;  // [M x d]

    std::size_t k() const;
    std::size_t num_classes() const { return class_tokens.rows(); }
    std::size_t dim() const { return class_tokens.cols(); }
    /// Row i is the mean of the k context rows and class_tokens[i].
    Tensor pooled_query() const;
};

/// One [(k+1) x d] token-embedding sequence per class.
using PromptSequences = std::vector<Tensor>;

struct AttentionRecord {
    Tensor a_t;  // [M x N]
    Tensor a_x;  // [N x M]
    std::vector<std::string> class_names;
};

/// softmax_i(cos(pooled, text_i) / tau).
Tensor clip_probability(const ImageFeatures& img, const TextEmbedding& text, double tau);

/// Hand-crafted template tokens followed by each class token.
PromptSequences build_handcrafted_prompts(const Tensor& template_context, const Tensor& class_tokens);
PromptSequences build_coop_prompts(const PromptSet& ps);
/// Adds net(pooled) to every context token of every class.
PromptSequences build_cocoop_prompts(const PromptSet& ps, const ImageFeatures& img, const MetaNet& net);

struct CtpAttention {
    Tensor a_t;    // [M x N], pooled_query * patches^T
    Tensor f_x_t;  // [M x d], softmax_rows(a_t) * patches
};
CtpAttention ctp_attention(const PromptSet& ps, const ImageFeatures& img);

struct CtpPrompts {
    PromptSequences prompts;
    AttentionRecord attention;  // a_x left empty
    Tensor residuals;           // [M x d], f_x_t
};
/// Adds f_x_t[i] to each of class i's context tokens.
CtpPrompts build_ctp_prompts(const PromptSet& ps, const ImageFeatures& img);

struct TftResult {
    Tensor f_a;  // [N x d], softmax_rows(a_x) * g_a + patches
    Tensor a_x;  // [N x M], patches * g_a^T
};
TftResult tft_augment(const ImageFeatures& img, const TextEmbedding& g_a);

/// softmax_i((cos(f, g_i) + lambda cos(f_a, g_a_i)) / tau).
Tensor blended_probability(const ImageFeatures& img, const TextEmbedding& base_text, const Tensor& f_a,
                           const TextEmbedding& g_a, const MethodSpec& spec);
/// The logits of blended_probability.
Tensor blended_logits(const Tensor& pooled, const TextEmbedding& base_text, const Tensor& f_a,
                      const TextEmbedding& g_a, double lambda, double tau);

/// Adds net(pooled) to every context token of every class.
PromptSequences mlp_pl_prompts(const PromptSet& ps, const ImageFeatures& img, const MetaNet& net);
/// Adds net(mean text row) to every patch row.
Tensor mlp_ft_features(const ImageFeatures& img, const TextEmbedding& text, const MetaNet& net);

/// Learnable state of a method.
struct LearnableParams {
    Tensor context;  // [k x d]
    std::optional<MetaNet> prompt_net;
    std::optional<MetaNet> feature_net;

    std::vector<Tensor> tensors() const;
    /// Fresh leaves holding the same values, all requiring grad.
    LearnableParams clone() const;
};

enum class MetaNetInit { Uniform, Normal };

/// Context normal(0, 0.02); networks per `init`; everything keyed on seed.
LearnableParams init_params(const MethodSpec& spec, std::size_t k, std::size_t d, std::uint64_t seed,
                            MetaNetInit init = MetaNetInit::Uniform);

/// Full forward pass of one method over a fixed class list.
class MethodModel {
public:
    MethodModel(const EncoderWeights& encoders, MethodSpec spec, LearnableParams params,
                const std::vector<std::string>& class_names);

    struct Output {
        Tensor logits;  // [M]
        Tensor probs;   // [M]
        /// The per-class embeddings that decide the prediction on this
        /// image (augmented ones when the method has them).
        TextEmbedding final_text;
        std::optional<AttentionRecord> attention;
    };

    /// Embedding of the un-augmented prompts; independent of the image.
    TextEmbedding static_text() const;
    Output forward(const ImageFeatures& img, const TextEmbedding& static_text) const;
    Output forward(const ImageFeatures& img) const { return forward(img, static_text()); }

    const MethodSpec& spec() const { return spec_; }
    const LearnableParams& params() const { return params_; }
    const PromptSet& prompt_set() const { return prompt_set_; }

private:
    const EncoderWeights* encoders_;
    MethodSpec spec_;
    LearnableParams params_;
    PromptSet prompt_set_;
    std::vector<std::string> class_names_;
};

}  // namespace promptforge
