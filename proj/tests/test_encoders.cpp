#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "promptforge/dataset.hpp"
#include "promptforge/encoders.hpp"
#include "promptforge/errors.hpp"
#include "promptforge/grad_check.hpp"

using namespace promptforge;
using fixtures::random_tensor;

namespace {

const EncoderWeights& default_encoders() {
    static const EncoderWeights w = EncoderWeights::generate(0);
    return w;
}

std::vector<const Tensor*> all_weights(const EncoderWeights& w) {
    std::vector<const Tensor*> out{&w.patch_embed, &w.image_pos, &w.image_center,
                                   &w.token_table, &w.text_pos};
    for (const auto* blocks : {&w.image_blocks, &w.text_blocks}) {
        for (const auto& b : *blocks) {
            for (const auto* t : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) out.push_back(t);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("32x32 images split into 16 patches of width d") {
    const auto& w = default_encoders();
    const auto f = encode_image(generate_synthetic(2, 1, 3).samples[0].image, w);
    CHECK(w.config.num_patches() == 16);
    CHECK(f.patches.shape() == Shape{16, 64});
    CHECK(f.pooled.shape() == Shape{64});
    const auto mean = mean_rows(f.patches);
    for (std::size_t j = 0; j < 64; ++j) CHECK(f.pooled.at(j) == mean.at(j));
    for (double v : f.patches.values()) CHECK(std::isfinite(v));
}

TEST_CASE("a uniform image with no positional signal gives identical patches") {
    EncoderWeights w = default_encoders();
    w.image_pos = Tensor::zeros(w.image_pos.shape());
    Image zero = render_canonical(0);
    std::fill(zero.pixels.begin(), zero.pixels.end(), std::uint8_t{0});
    const auto f = encode_image(zero, w);
    for (std::size_t i = 1; i < 16; ++i) {
        for (std::size_t j = 0; j < 64; ++j) CHECK(f.patches.at(i, j) == f.patches.at(0, j));
    }
}

TEST_CASE("the mid-grey image encodes to zero features") {
    Image grey = render_canonical(0);
    std::fill(grey.pixels.begin(), grey.pixels.end(), std::uint8_t{128});
    const auto f = encode_image(grey, default_encoders());
    for (double v : f.pooled.values()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("encoders are deterministic and keyed on the seed") {
    const auto a = EncoderWeights::generate(0);
    const auto b = EncoderWeights::generate(0);
    const auto c = EncoderWeights::generate(1);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
    CHECK(a.token_table.values() == b.token_table.values());

    const Image img = generate_synthetic(3, 1, 9).samples[2].image;
    CHECK(encode_image(img, a).patches.values() == encode_image(img, b).patches.values());
    CHECK(encode_image(img, a).patches.values() != encode_image(img, c).patches.values());
}

TEST_CASE("encoder weights never require grad") {
    for (const auto* t : all_weights(default_encoders())) CHECK_FALSE(t->requires_grad());
}

TEST_CASE("image shape errors") {
    const auto& w = default_encoders();
    Image small;
    small.height = small.width = 30;
    small.pixels.assign(30 * 30 * 3, 0);
    CHECK_THROWS_AS(encode_image(small, w), DimensionError);

    EncoderConfig cfg;
    cfg.image_size = 30;
    CHECK_THROWS_AS(EncoderWeights::generate(0, cfg), ConfigError);
    cfg = {};
    cfg.heads = 5;
    CHECK_THROWS_AS(EncoderWeights::generate(0, cfg), ConfigError);
}

TEST_CASE("encode_text is row-equivariant") {
    const auto w = fixtures::small_encoders(8, 4);
    Rng rng(4);
    std::vector<Tensor> prompts;
    for (int i = 0; i < 4; ++i) prompts.push_back(random_tensor(rng, {3, 8}));
    const auto g = encode_text(prompts, w);
    CHECK(g.per_class.shape() == Shape{4, 8});

    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<Tensor> permuted;
    for (auto p : perm) permuted.push_back(prompts[p]);
    const auto gp = encode_text(permuted, w);
    for (std::size_t i = 0; i < 4; ++i) CHECK(row(gp.per_class, i).values() == row(g.per_class, perm[i]).values());

    const auto twin = encode_text({prompts[1], prompts[1]}, w);
    CHECK(row(twin.per_class, 0).values() == row(twin.per_class, 1).values());
}

TEST_CASE("encode_text gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto w = fixtures::small_encoders(8, seed);
        Rng rng(seed);
        const Tensor x0 = random_tensor(rng, {4, 8});
        const Tensor other = random_tensor(rng, {4, 8});
        const Tensor x = Tensor::from(x0.shape(), x0.values(), true);
        backward(sum(encode_text({x, other}, w).per_class));
        const auto numeric =
            finite_diff_grad([&](const Tensor& p) { return sum(encode_text({p, other}, w).per_class).item(); }, x0);
        CHECK(relative_error(x.grad(), numeric.data()) < 1e-4);
    }
}

TEST_CASE("encode_text shape errors") {
    const auto w = fixtures::small_encoders(8, 1);
    CHECK_THROWS_AS(encode_text({Tensor::zeros({3, 8}), Tensor::zeros({2, 8})}, w), DimensionError);
    CHECK_THROWS_AS(encode_text({Tensor::zeros({3, 6})}, w), DimensionError);
    CHECK_THROWS_AS(encode_text({Tensor::zeros({9, 8})}, w), DimensionError);
    CHECK_THROWS_AS(encode_text({}, w), DimensionError);
}

TEST_CASE("tokenize examples") {
    CHECK(tokenize("cat") == tokenize("cat"));
    CHECK(tokenize("cat") != tokenize("dog"));
    CHECK(tokenize("Red  DISC") == tokenize("red disc"));
    CHECK(tokenize("red disc").ids.size() == 2);

    auto expected = tokenize("a photo of a cat");
    CHECK(template_tokens("cat") == expected);
    CHECK(template_tokens("cat").ids.size() == 5);

    CHECK_THROWS_AS(tokenize(""), ParameterError);
    CHECK_THROWS_AS(tokenize(" - "), ParameterError);
    for (auto id : tokenize("a photo of a very long class name", 16).ids) CHECK(id < 16);
}

TEST_CASE("shipped class names and words tokenize distinctly") {
    std::set<std::vector<std::size_t>> seqs;
    for (const auto& name : synthetic_class_names()) seqs.insert(tokenize(name).ids);
    CHECK(seqs.size() == synthetic_class_names().size());

    std::set<std::size_t> ids;
    for (const auto* words : {&synthetic_colours(), &synthetic_shapes()}) {
        for (const auto& word : *words) ids.insert(word_id(word));
    }
    for (const auto& word : split_words(kPromptTemplate)) ids.insert(word_id(word));
    CHECK(ids.size() == 8 + 4 + 3);
}

TEST_CASE("colour and shape words have grounded embeddings") {
    const auto& w = default_encoders();
    for (const auto* words : {&synthetic_colours(), &synthetic_shapes()}) {
        for (const auto& word : *words) {
            const auto e = w.token_embedding(word_id(word));
            double n2 = 0.0;
            for (double v : e.values()) n2 += v * v;
            CHECK(std::sqrt(n2) == doctest::Approx(w.config.lexicon_norm).epsilon(1e-12));
        }
    }
    const auto red = class_token("red disc", w);
    const auto expected = scale(add(w.token_embedding(word_id("red")), w.token_embedding(word_id("disc"))), 0.5);
    CHECK(red.values() == expected.values());
    CHECK(template_context(w).shape() == Shape{4, 64});
    CHECK_THROWS_AS(w.token_embedding(4096), IndexError);
}

TEST_CASE("weight dump lists every tensor") {
    const auto path = std::filesystem::temp_directory_path() / "promptforge_weights.bin";
    const auto w = fixtures::small_encoders(8, 2);
    w.dump(path);
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    CHECK(line == "PROMPTFORGE-WEIGHTS 1");
    std::getline(in, line);
    CHECK(line == "seed=2");
    std::getline(in, line);
    CHECK(line == "tensors=" + std::to_string(all_weights(w).size()));
    std::filesystem::remove(path);
}
