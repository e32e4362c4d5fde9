#pragma once

// Frozen toy stand-ins for a dual-encoder vision-language model.
//
// Image side: patch embedding plus positional table, pre-norm transformer
// blocks, features centred on those of a flat mid-grey image. Text side:
// token embeddings plus positional table, pre-norm transformer blocks,
// mean over the final token states.
//
// All weights are normal(0, init_std) draws keyed on (seed, tensor stream),
// except the embedding rows of the synthetic colour and shape words, which
// are grounded: each is the centred pooled image feature of the canonical
// renderings containing that word, rescaled to lexicon_norm.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promptforge/dataset.hpp"
#include "promptforge/tensor.hpp"

namespace promptforge {

struct EncoderConfig {
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t patch = 8;
    std::size_t image_size = 32;
    std::size_t channels = 3;
    std::size_t vocab = 4096;
    std::size_t max_text_len = 16;
    double init_std = 0.02;
    double lexicon_norm = 2.0;
    double pixel_std = 0.25;
    bool ground_lexicon = true;

    std::size_t num_patches() const { return (image_size / patch) * (image_size / patch); }
    std::size_t patch_values() const { return patch * patch * channels; }
};

struct TransformerBlock {
    Tensor wq, wk, wv, wo;  // [d x d]
    Tensor w1;              // [4d x d]
    Tensor w2;              // [d x 4d]
};

/// Frozen weights of both encoders. No tensor here ever requires grad.
struct EncoderWeights {
    std::uint64_t seed = 0;
    EncoderConfig config;

    Tensor patch_embed;  // [d x P*P*C]
    Tensor image_pos;    // [N x d]
    std::vector<TransformerBlock> image_blocks;
    Tensor image_center;  // [d]

    Tensor token_table;  // [V x d]
    Tensor text_pos;     // [max_text_len x d]
    std::vector<TransformerBlock> text_blocks;

    static EncoderWeights generate(std::uint64_t seed, const EncoderConfig& config = {});

    std::size_t dim() const { return config.dim; }
    /// Row `id` of the token table.
    Tensor token_embedding(std::size_t id) const;
    /// FNV-1a digest over every weight value.
    std::uint64_t checksum() const;
    /// Named little-endian f64 dump of every tensor, for inspection.
    void dump(const std::filesystem::path& path) const;
};

struct ImageFeatures {
    Tensor patches;  // [N x d]
    Tensor pooled;   // [d], mean of the patch rows
};

struct TextEmbedding {
    Tensor per_class;  // [M x d]
};

struct TokenSequence {
    std::vector<std::size_t> ids;
    bool operator==(const TokenSequence&) const = default;
};

inline constexpr std::string_view kPromptTemplate = "a photo of a";

/// Lowercased words of `text`, split on anything that is not a letter or digit.
std::vector<std::string> split_words(std::string_view text);
/// Vocabulary id of one (already lowercased) word.
std::size_t word_id(std::string_view word, std::size_t vocab = 4096);
/// Hashes every word of `text`. Throws ParameterError when there are none.
TokenSequence tokenize(std::string_view text, std::size_t vocab = 4096);
/// Token ids of "a photo of a <class_name>".
TokenSequence template_tokens(std::string_view class_name, std::size_t vocab = 4096);

/// c_i: mean embedding of the class-name words, [d].
Tensor class_token(std::string_view class_name, const EncoderWeights& w);
/// [M x d] stack of class_token over `names`.
Tensor class_tokens(const std::vector<std::string>& names, const EncoderWeights& w);
/// Embeddings of the template words, [4 x d].
Tensor template_context(const EncoderWeights& w);

/// Throws DimensionError when the image does not match the encoder's
/// image size, channel count or patch grid.
ImageFeatures encode_image(const Image& image, const EncoderWeights& w);
/// Encodes M prompt token-embedding sequences, each [(k+1) x d].
/// Differentiable with respect to the inputs; ragged input is an error.
TextEmbedding encode_text(const std::vector<Tensor>& prompts, const EncoderWeights& w);

/// One pre-norm transformer block (multi-head self-attention, GELU MLP).
Tensor transformer_block(const Tensor& x, const TransformerBlock& block, std::size_t heads);

}  // namespace promptforge
