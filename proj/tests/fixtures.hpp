#pragma once

// Small random problem instances for the prompt-engine tests and the
// acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptforge/encoders.hpp"
#include "promptforge/errors.hpp"
#include "promptforge/grad_check.hpp"
#include "promptforge/prompt_engine.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/tensor.hpp"
#include "promptforge/trainer.hpp"

namespace fixtures {

using namespace promptforge;

inline Tensor random_tensor(Rng& rng, Shape shape, double spread = 1.0, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = spread * rng.normal();
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Text encoder of width d with weights large enough that every block
/// contributes visibly.
inline EncoderWeights small_encoders(std::size_t d, std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.dim = d;
    cfg.heads = 2;
    cfg.image_size = 16;
    cfg.patch = 8;
    cfg.max_text_len = 8;
    cfg.init_std = 0.25;
    cfg.ground_lexicon = false;
    return EncoderWeights::generate(seed, cfg);
}

inline MetaNet random_net(Rng& rng, std::size_t d, double spread) {
    const std::size_t h = MetaNet::hidden_width(d);
    return {random_tensor(rng, {h, d}, spread, true), random_tensor(rng, {h}, spread, true),
            random_tensor(rng, {d, h}, spread, true), random_tensor(rng, {d}, spread, true)};
}

struct Instance {
    std::size_t m = 0, n = 0, d = 0, k = 0;
    EncoderWeights encoders;
    std::vector<std::string> class_names;
    ImageFeatures image;
    LearnableParams params;  // context plus both networks
    std::size_t label = 0;
};

/// M <= 4, N <= 8, d <= 16 (a multiple of 2), 1 <= k <= 4.
inline Instance random_instance(std::uint64_t seed) {
    Rng rng(seed);
    Instance in;
    in.m = static_cast<std::size_t>(rng.integer(2, 4));
    in.n = static_cast<std::size_t>(rng.integer(1, 8));
    in.d = 2 * static_cast<std::size_t>(rng.integer(2, 8));
    in.k = static_cast<std::size_t>(rng.integer(1, 4));
    in.encoders = small_encoders(in.d, seed);
    for (std::size_t i = 0; i < in.m; ++i) {
        in.class_names.push_back("class" + std::to_string(seed) + "x" + std::to_string(i));
    }
    in.image.patches = random_tensor(rng, {in.n, in.d}, 0.5);
    in.image.pooled = mean_rows(in.image.patches);
    in.params.context = random_tensor(rng, {in.k, in.d}, 0.3, true);
    in.params.prompt_net = random_net(rng, in.d, 0.3);
    in.params.feature_net = random_net(rng, in.d, 0.3);
    in.label = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(in.m) - 1));
    return in;
}

/// The instance's parameters restricted to what `spec` uses, as fresh leaves.
inline LearnableParams params_for(const Instance& in, const MethodSpec& spec) {
    LearnableParams p = in.params.clone();
    if (!spec.has_prompt_net()) p.prompt_net.reset();
    if (!spec.has_feature_net()) p.feature_net.reset();
    return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shape mismatch");
    return max_abs_diff(a.data(), b.data());
}

inline double max_abs_diff(const PromptSequences& a, const PromptSequences& b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: class count mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a[i], b[i]));
    return m;
}

// Context rows of each class's sequence minus the shared context.
inline std::vector<std::vector<double>> residuals_of(const PromptSequences& seqs, const Tensor& context) {
    std::vector<std::vector<double>> out;
    for (const auto& s : seqs) {
        std::vector<double> r;
        for (std::size_t i = 0; i < context.size(); ++i) r.push_back(s.values()[i] - context.values()[i]);
        out.push_back(r);
    }
    return out;
}

inline PromptSet prompt_set(const Instance& in) {
    return {in.params.context, class_tokens(in.class_names, in.encoders)};
}

inline Tensor loss_of(const Instance& in, const MethodSpec& spec, const LearnableParams& params) {
    const MethodModel model(in.encoders, spec, params, in.class_names);
    return contrastive_loss(model.forward(in.image).probs, in.label);
}

/// `p` with its index-th learnable tensor (in tensors() order) replaced.
inline LearnableParams with_tensor(const LearnableParams& p, std::size_t index, const Tensor& t) {
    LearnableParams out = p;
    std::size_t i = 0;
    auto visit = [&](Tensor& slot) {
        if (i++ == index) slot = t;
    };
    if (out.context.rank() == 2) visit(out.context);
    for (auto* net : {&out.prompt_net, &out.feature_net}) {
        if (*net) {
            visit((*net)->w1);
            visit((*net)->b1);
            visit((*net)->w2);
            visit((*net)->b2);
        }
    }
    return out;
}

/// Richardson-extrapolated central differences, (4 D(h/2) - D(h)) / 3.
inline Tensor extrapolated_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-4) {
    const Tensor coarse = finite_diff_grad(f, x, h);
    const Tensor fine = finite_diff_grad(f, x, h / 2);
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (4.0 * fine.values()[i] - coarse.values()[i]) / 3.0;
    return Tensor::from(x.shape(), std::move(v));
}

/// Largest relative error between the analytic loss gradient and
/// extrapolated central differences, over every learnable tensor.
inline double worst_gradient_error(const Instance& in, const MethodSpec& spec) {
    const auto params = params_for(in, spec);
    backward(loss_of(in, spec, params));
    const auto tensors = params.tensors();
    double worst = 0.0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const auto numeric = extrapolated_diff_grad(
            [&](const Tensor& x) { return loss_of(in, spec, with_tensor(params, t, x)).item(); }, tensors[t]);
        worst = std::max(worst, relative_error(tensors[t].grad(), numeric.data()));
    }
    return worst;
}

}  // namespace fixtures
