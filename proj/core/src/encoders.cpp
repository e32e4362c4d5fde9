#include "promptforge/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "promptforge/binary_io.hpp"
#include "promptforge/errors.hpp"
#include "promptforge/rng.hpp"

namespace promptforge {

namespace {

enum Stream : std::uint64_t {
    kPatchEmbed = 1,
    kImagePos = 2,
    kTextPos = 3,
    kTokenTable = 4,
    kImageBlocks = 100,
    kTextBlocks = 200,
};

Tensor normal_tensor(Shape shape, std::uint64_t seed, std::uint64_t stream, double stddev) {
    CounterNormal gen(seed, stream);
    std::vector<double> v(shape_size(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = stddev * gen(i);
    return Tensor::from(std::move(shape), std::move(v));
}

TransformerBlock make_block(std::size_t d, std::uint64_t seed, std::uint64_t stream, double stddev) {
    TransformerBlock b;
    b.wq = normal_tensor({d, d}, seed, stream + 0, stddev);
    b.wk = normal_tensor({d, d}, seed, stream + 1, stddev);
    b.wv = normal_tensor({d, d}, seed, stream + 2, stddev);
    b.wo = normal_tensor({d, d}, seed, stream + 3, stddev);
    b.w1 = normal_tensor({4 * d, d}, seed, stream + 4, stddev);
    b.w2 = normal_tensor({d, 4 * d}, seed, stream + 5, stddev);
    return b;
}

Tensor patchify(const Image& image, const EncoderConfig& cfg) {
    if (image.height != cfg.image_size || image.width != cfg.image_size || image.channels != cfg.channels) {
        throw DimensionError("encoder expects " + std::to_string(cfg.image_size) + "x" +
                             std::to_string(cfg.image_size) + "x" + std::to_string(cfg.channels) +
                             " images, got " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + "x" + std::to_string(image.channels));
    }
    if (cfg.patch == 0 || image.height % cfg.patch != 0 || image.width % cfg.patch != 0) {
        throw DimensionError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                             " is not divisible into " + std::to_string(cfg.patch) + "-pixel patches");
    }
    const std::size_t grid = cfg.image_size / cfg.patch;
    std::vector<double> v;
    v.reserve(cfg.num_patches() * cfg.patch_values());
    for (std::size_t gy = 0; gy < grid; ++gy) {
        for (std::size_t gx = 0; gx < grid; ++gx) {
            for (std::size_t py = 0; py < cfg.patch; ++py) {
                for (std::size_t px = 0; px < cfg.patch; ++px) {
                    for (std::size_t c = 0; c < cfg.channels; ++c) {
                        const double raw = image.at(gy * cfg.patch + py, gx * cfg.patch + px, c);
                        v.push_back((raw / 255.0 - 0.5) / cfg.pixel_std);
                    }
                }
            }
        }
    }
    return Tensor::from({cfg.num_patches(), cfg.patch_values()}, std::move(v));
}

// Uncentred patch features.
Tensor image_tower(const Image& image, const EncoderWeights& w) {
    Tensor h = add(linear(patchify(image, w.config), w.patch_embed), w.image_pos);
    for (const auto& block : w.image_blocks) h = transformer_block(h, block, w.config.heads);
    return h;
}

void ground_lexicon(EncoderWeights& w) {
    const auto& names = synthetic_class_names();
    std::vector<Tensor> pooled;
    for (std::size_t p = 0; p < names.size(); ++p) {
        pooled.push_back(subtract(mean_rows(image_tower(render_canonical(p), w)), w.image_center));
    }
    const Tensor overall = mean_rows(concat_rows(pooled));

    std::vector<double> table = w.token_table.values();
    const std::size_t d = w.config.dim;
    auto ground = [&](const std::string& word) {
        std::vector<double> acc(d, 0.0);
        std::size_t count = 0;
        for (std::size_t p = 0; p < names.size(); ++p) {
            const auto words = split_words(names[p]);
            if (std::find(words.begin(), words.end(), word) == words.end()) continue;
            for (std::size_t j = 0; j < d; ++j) acc[j] += pooled[p].at(j);
            ++count;
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            acc[j] = acc[j] / static_cast<double>(count) - overall.at(j);
            norm += acc[j] * acc[j];
        }
        norm = std::sqrt(norm);
        const std::size_t id = word_id(word, w.config.vocab);
        for (std::size_t j = 0; j < d; ++j) table[id * d + j] = acc[j] / norm * w.config.lexicon_norm;
    };
    for (const auto& word : synthetic_colours()) ground(word);
    for (const auto& word : synthetic_shapes()) ground(word);
    w.token_table = Tensor::from(w.token_table.shape(), std::move(table));
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const EncoderWeights& w) {
    std::vector<std::pair<std::string, const Tensor*>> out{
        {"patch_embed", &w.patch_embed}, {"image_pos", &w.image_pos},   {"image_center", &w.image_center},
        {"token_table", &w.token_table}, {"text_pos", &w.text_pos},
    };
    auto add_blocks = [&](const std::string& prefix, const std::vector<TransformerBlock>& blocks) {
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto p = prefix + std::to_string(i) + ".";
            out.emplace_back(p + "wq", &blocks[i].wq);
            out.emplace_back(p + "wk", &blocks[i].wk);
            out.emplace_back(p + "wv", &blocks[i].wv);
            out.emplace_back(p + "wo", &blocks[i].wo);
            out.emplace_back(p + "w1", &blocks[i].w1);
            out.emplace_back(p + "w2", &blocks[i].w2);
        }
    };
    add_blocks("image_block", w.image_blocks);
    add_blocks("text_block", w.text_blocks);
    return out;
}

}  // namespace

EncoderWeights EncoderWeights::generate(std::uint64_t seed, const EncoderConfig& config) {
    if (config.dim == 0 || config.heads == 0 || config.dim % config.heads != 0) {
        throw ConfigError("encoder dim must be a positive multiple of heads");
    }
    if (config.patch == 0 || config.image_size % config.patch != 0) {
        throw ConfigError("image size must be divisible by the patch size");
    }
    const std::size_t d = config.dim;
    const double s = config.init_std;
    EncoderWeights w;
    w.seed = seed;
    w.config = config;
    w.patch_embed = normal_tensor({d, config.patch_values()}, seed, kPatchEmbed, s);
    w.image_pos = normal_tensor({config.num_patches(), d}, seed, kImagePos, s);
    w.text_pos = normal_tensor({config.max_text_len, d}, seed, kTextPos, s);
    w.token_table = normal_tensor({config.vocab, d}, seed, kTokenTable, s);
    for (std::size_t i = 0; i < config.layers; ++i) {
        w.image_blocks.push_back(make_block(d, seed, kImageBlocks + 10 * i, s));
        w.text_blocks.push_back(make_block(d, seed, kTextBlocks + 10 * i, s));
    }
    w.image_center = Tensor::zeros({d});
    const bool synthetic_geometry =
        config.image_size == kSyntheticSize && config.channels == 3;
    if (synthetic_geometry) {
        Image grey = render_canonical(0);
        std::fill(grey.pixels.begin(), grey.pixels.end(), std::uint8_t{128});
        w.image_center = mean_rows(image_tower(grey, w));
        if (config.ground_lexicon) ground_lexicon(w);
    }
    return w;
}

Tensor EncoderWeights::token_embedding(std::size_t id) const {
    if (id >= config.vocab) throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
    return row(token_table, id);
}

std::uint64_t EncoderWeights::checksum() const {
    std::uint64_t h = fnv1a(std::string_view("promptforge-encoders"));
    for (const auto& [name, t] : named_tensors(*this)) {
        h = fnv1a(name, h);
        h = fnv1a(t->data(), h);
    }
    return h;
}

void EncoderWeights::dump(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "PROMPTFORGE-WEIGHTS 1\nseed=" << seed << "\n";
    const auto tensors = named_tensors(*this);
    out << "tensors=" << tensors.size() << "\n";
    for (const auto& [name, t] : tensors) {
        out << name << "\n";
        write_tensor(out, *t);
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::size_t word_id(std::string_view word, std::size_t vocab) {
    if (vocab == 0) throw ParameterError("vocabulary size must be positive");
    return static_cast<std::size_t>(fnv1a(word) % vocab);
}

TokenSequence tokenize(std::string_view text, std::size_t vocab) {
    const auto words = split_words(text);
    if (words.empty()) throw ParameterError("cannot tokenize an empty name");
    TokenSequence seq;
    for (const auto& word : words) seq.ids.push_back(word_id(word, vocab));
    return seq;
}

TokenSequence template_tokens(std::string_view class_name, std::size_t vocab) {
    auto head = tokenize(kPromptTemplate, vocab);
    const auto tail = tokenize(class_name, vocab);
    head.ids.insert(head.ids.end(), tail.ids.begin(), tail.ids.end());
    return head;
}

Tensor class_token(std::string_view class_name, const EncoderWeights& w) {
    const auto seq = tokenize(class_name, w.config.vocab);
    std::vector<Tensor> rows;
    for (auto id : seq.ids) rows.push_back(w.token_embedding(id));
    return mean_rows(concat_rows(rows));
}

Tensor class_tokens(const std::vector<std::string>& names, const EncoderWeights& w) {
    if (names.empty()) throw ParameterError("no class names");
    std::vector<Tensor> rows;
    for (const auto& name : names) rows.push_back(class_token(name, w));
    return concat_rows(rows);
}

Tensor template_context(const EncoderWeights& w) {
    std::vector<Tensor> rows;
    for (auto id : tokenize(kPromptTemplate, w.config.vocab).ids) rows.push_back(w.token_embedding(id));
    return concat_rows(rows);
}

Tensor transformer_block(const Tensor& x, const TransformerBlock& b, std::size_t heads) {
    const std::size_t d = x.cols();
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor h = layer_norm_rows(x);
    const Tensor q = linear(h, b.wq);
    const Tensor k = linear(h, b.wk);
    const Tensor v = linear(h, b.wv);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        const Tensor qi = slice_cols(q, i * dh, dh);
        const Tensor ki = slice_cols(k, i * dh, dh);
        const Tensor vi = slice_cols(v, i * dh, dh);
        outs.push_back(matmul(softmax_rows(scale(matmul(qi, transpose(ki)), inv_sqrt)), vi));
    }
    const Tensor attended = add(x, linear(concat_cols(outs), b.wo));
    const Tensor mlp = linear(gelu(linear(layer_norm_rows(attended), b.w1)), b.w2);
    return add(attended, mlp);
}

ImageFeatures encode_image(const Image& image, const EncoderWeights& w) {
    const Tensor patches = add(image_tower(image, w), scale(w.image_center, -1.0));
    return {patches, mean_rows(patches)};
}

TextEmbedding encode_text(const std::vector<Tensor>& prompts, const EncoderWeights& w) {
    if (prompts.empty()) throw DimensionError("encode_text needs at least one prompt");
    const Shape expected = prompts.front().shape();
    if (expected.size() != 2 || expected[1] != w.config.dim) {
        throw DimensionError("prompt sequences must be [L x " + std::to_string(w.config.dim) + "], got " +
                             shape_string(expected));
    }
    if (expected[0] > w.config.max_text_len) {
        throw DimensionError("prompt length " + std::to_string(expected[0]) + " exceeds " +
                             std::to_string(w.config.max_text_len));
    }
    const Tensor pos = Tensor::from({expected[0], w.config.dim},
                                    std::vector<double>(w.text_pos.values().begin(),
                                                        w.text_pos.values().begin() +
                                                            static_cast<long>(expected[0] * w.config.dim)));
    std::vector<Tensor> rows;
    rows.reserve(prompts.size());
    for (const auto& p : prompts) {
        if (p.shape() != expected) {
            throw DimensionError("ragged prompt sequences: " + shape_string(p.shape()) + " vs " +
                                 shape_string(expected));
        }
        Tensor h = add(p, pos);
        for (const auto& block : w.text_blocks) h = transformer_block(h, block, w.config.heads);
        rows.push_back(mean_rows(h));
    }
    return {concat_rows(rows)};
}

}  // namespace promptforge
