// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/experiment.hpp"
#include "promptforge/text_format.hpp"

using namespace promptforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void note(const std::string& line) {
    std::printf("      %s\n", line.c_str());
    std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
}

const std::vector<std::string> kHeads{"clip", "coop", "cocoop", "mlp_pl", "ctp", "mlp_ft", "tft", "full",
                                      "mlp_pl+mlp_ft", "ctp+mlp_ft", "mlp_pl+tft", "cocoop+tft"};

void harmonic_oracle() {
    struct Row {
        const char* method;
        double base, novel, hos;
    };
    const Row rows[] = {{"CLIP", 69.34, 74.22, 71.70},
                        {"CoOp", 82.69, 63.22, 71.66},
                        {"CoCoOp", 80.47, 71.69, 75.83},
                        {"ProDA", 81.56, 72.30, 76.65},
                        {"full method", 83.01, 75.72, 79.02}};
    bool ok = true;
    std::vector<std::string> misses;
    for (const auto& r : rows) {
        const double h = harmonic_mean(r.base, r.novel);
        if (std::abs(h - r.hos) > 0.02) {
            ok = false;
            misses.push_back(std::string(r.method) + " (" + format_fixed(r.base, 2) + ", " + format_fixed(r.novel, 2) +
                             ") -> " + format_fixed(h, 2) + " vs published " + format_fixed(r.hos, 2));
        }
    }
    report(ok, "harmonic-mean oracle", ok ? "5/5 published average triples within 0.02"
                                          : std::to_string(5 - misses.size()) + "/5 triples within 0.02");
    for (const auto& m : misses) note(m);
}

void gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t checks = 0;
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const auto in = fixtures::random_instance(seed);
        for (const auto* name : {"full", "cocoop", "mlp_pl+mlp_ft", "ctp+mlp_ft"}) {
            worst = std::max(worst, fixtures::worst_gradient_error(in, MethodSpec::parse(name)));
            ++checks;
        }
    }
    const double secs = seconds_since(t0);
    report(worst < 1e-4 && secs < 120.0, "gradient suite",
           "20 instances, " + std::to_string(checks) + " method checks, worst relative error " + sci(worst) + ", " +
               format_fixed(secs, 1) + " s");
}

void reduction_suite() {
    double ctp = 0.0, cocoop = 0.0, tft = 0.0, blend = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto in = fixtures::random_instance(seed);
        const auto ps = fixtures::prompt_set(in);
        const ImageFeatures zero{Tensor::zeros({in.n, in.d}), Tensor::zeros({in.d})};
        ctp = std::max(ctp, fixtures::max_abs_diff(build_ctp_prompts(ps, zero).prompts, build_coop_prompts(ps)));
        cocoop = std::max(cocoop, fixtures::max_abs_diff(build_cocoop_prompts(ps, in.image, MetaNet::zeros(in.d)),
                                                         build_coop_prompts(ps)));
        tft = std::max(tft, fixtures::max_abs_diff(tft_augment(in.image, {Tensor::zeros({in.m, in.d})}).f_a,
                                                   in.image.patches));

        const auto spec = MethodSpec::parse("full", 0.0, 0.01);
        const MethodModel model(in.encoders, spec, fixtures::params_for(in, spec), in.class_names);
        const auto g = model.static_text();
        blend = std::max(blend, fixtures::max_abs_diff(model.forward(in.image, g).probs,
                                                       clip_probability(in.image, g, 0.01)));
    }
    const double worst = std::max({ctp, cocoop, tft, blend});
    report(worst <= 1e-12, "reduction suite",
           "ctp/zero patches " + sci(ctp) + ", cocoop/zero net " + sci(cocoop) + ", tft/zero text " + sci(tft) +
               ", lambda=0 " + sci(blend));
}

void probability_invariants() {
    double worst_sum = 0.0;
    bool non_negative = true, argmax_stable = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto in = fixtures::random_instance(seed);
        for (const auto& name : kHeads) {
            for (double tau : {0.01, 0.1, 1.0}) {
                std::size_t ref = 0;
                for (double factor : {1.0, 0.37, 7.3}) {
                    const auto spec = MethodSpec::parse(name, 0.2, tau * factor);
                    const MethodModel model(in.encoders, spec, fixtures::params_for(in, spec), in.class_names);
                    const auto out = model.forward(in.image);
                    double total = 0.0;
                    for (double p : out.probs.values()) {
                        non_negative = non_negative && p >= 0.0;
                        total += p;
                    }
                    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
                    const auto top = argmax(out.logits.data());
                    if (factor == 1.0) ref = top;
                    argmax_stable = argmax_stable && top == ref;
                }
            }
        }
    }
    report(non_negative && worst_sum <= 1e-9 && argmax_stable, "probability invariants",
           std::to_string(kHeads.size()) + " heads x 20 instances, worst |sum - 1| " + sci(worst_sum) +
               (argmax_stable ? ", argmax unchanged under tau rescaling" : ", argmax moved under tau rescaling"));
}

void class_awareness() {
    bool shared = true;
    std::size_t ctp_differs = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto in = fixtures::random_instance(seed);
        const auto ps = fixtures::prompt_set(in);
        const auto residuals = fixtures::residuals_of(build_cocoop_prompts(ps, in.image, *in.params.prompt_net),
                                                      in.params.context);
        for (const auto& r : residuals) shared = shared && r == residuals.front();

        const auto ctp = fixtures::residuals_of(build_ctp_prompts(ps, in.image).prompts, in.params.context);
        for (std::size_t i = 1; i < ctp.size(); ++i) {
            if (fixtures::max_abs_diff(ctp[i], ctp[0]) > 0.0) {
                ++ctp_differs;
                break;
            }
        }
    }
    report(shared && ctp_differs > 0, "class-awareness contrast",
           std::string(shared ? "meta-net residuals identical across classes on 20/20 instances"
                              : "meta-net residuals differ across classes") +
               ", ctp residuals class-dependent on " + std::to_string(ctp_differs) + "/20");
}

void oracle_equivalence() {
    double worst = 0.0;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        const auto in = fixtures::random_instance(seed);
        const auto tokens = oracle::to_mat(class_tokens(in.class_names, in.encoders));
        for (const auto& name : kHeads) {
            if (name == "clip") continue;
            const auto spec = MethodSpec::parse(name);
            const auto params = fixtures::params_for(in, spec);
            const MethodModel model(in.encoders, spec, params, in.class_names);
            const auto ref = oracle::probability(spec, params, tokens, oracle::to_mat(in.image.patches), in.encoders);
            worst = std::max(worst, fixtures::max_abs_diff(std::span<const double>(ref), model.forward(in.image).probs.data()));
        }
    }
    report(worst <= 1e-10, "oracle equivalence",
           "10 instances x " + std::to_string(kHeads.size() - 1) + " methods, worst difference " + sci(worst));
}

struct Sweep {
    ExperimentResult result;
    std::map<std::string, double> seconds;
};

Sweep run_sweep() {
    ExperimentConfig cfg;
    cfg.methods = {"coop", "cocoop", "mlp_pl", "ctp", "mlp_ft", "tft", "mlp_pl+mlp_ft", "full"};
    cfg.output = "";
    Sweep s;
    auto last = Clock::now();
    s.result = run_experiment(cfg, [&](const CellResult& c) {
        s.seconds[c.method] += seconds_since(last);
        last = Clock::now();
    });
    note("sweep over seeds 1, 2, 3 with default settings:");
    note("method          base     new     hos  distance  train");
    for (const auto& m : s.result.averaged) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-14s %6.2f  %6.2f  %6.2f  %8.4f  %5.2f", m.method.c_str(), m.base_acc,
                      m.new_acc, m.hos, m.discrimination, m.train_acc);
        note(buf);
    }
    return s;
}

void training_behaviour(const Sweep& s) {
    bool ok = true;
    std::string per_seed;
    for (const auto& c : s.result.cells) {
        if (c.method != "full") continue;
        ok = ok && c.train_acc >= 90.0;
        per_seed += (per_seed.empty() ? "" : " / ") + format_fixed(c.train_acc, 2);
    }
    const double secs = s.seconds.at("full");
    report(ok && secs < 300.0, "training behaviour",
           "full base-class training accuracy per seed " + per_seed + " (need >= 90), " + format_fixed(secs, 1) +
               " s for 3 seeds");
}

void discrimination(const Sweep& s) {
    const double full = s.result.summary("full").discrimination;
    const double cocoop = s.result.summary("cocoop").discrimination;
    report(full > cocoop, "discrimination direction",
           "full " + format_fixed(full, 4) + " vs cocoop " + format_fixed(cocoop, 4));
}

void hos_ordering(const Sweep& s) {
    const double full = s.result.summary("full").hos;
    const double coop = s.result.summary("coop").hos;
    bool ok = true;
    std::string detail = "full " + format_fixed(full, 2);
    for (const auto* single : {"mlp_pl", "ctp", "mlp_ft", "tft"}) {
        const double h = s.result.summary(single).hos;
        const bool below_full = full >= h;
        const bool above_coop = h >= coop;
        ok = ok && below_full && above_coop;
        detail += std::string(", ") + single + " " + format_fixed(h, 2);
        if (!below_full) detail += " (> full)";
        if (!above_coop) detail += " (< coop)";
    }
    detail += ", coop " + format_fixed(coop, 2);
    report(ok, "hos ordering", detail);
}

void default_sweep_ordering(const Sweep& s) {
    const double full = s.result.summary("full").hos;
    const double coop = s.result.summary("coop").hos;
    report(full >= coop, "default sweep full >= coop",
           "full " + format_fixed(full, 2) + " vs coop " + format_fixed(coop, 2));
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = buf.str();
    }
    return out;
}

void determinism() {
    const auto dir = fs::temp_directory_path() / "promptforge_acceptance_determinism";
    fs::remove_all(dir);
    ExperimentConfig cfg;
    cfg.methods = {"cocoop", "full"};
    cfg.seeds = {1};
    cfg.output = dir.string();
    run_experiment(cfg);
    const auto first = snapshot(dir);
    fs::remove_all(dir);
    run_experiment(cfg);
    const auto second = snapshot(dir);
    fs::remove_all(dir);
    std::size_t ckpts = 0;
    for (const auto& [name, bytes] : first) ckpts += name.ends_with(".ckpt");
    report(first == second && ckpts == 2, "determinism",
           std::to_string(first.size()) + " report and checkpoint files " +
               (first == second ? "bitwise identical" : "differ") + " across two runs");
}

}  // namespace

int main() {
    harmonic_oracle();
    gradient_suite();
    reduction_suite();
    probability_invariants();
    class_awareness();
    oracle_equivalence();
    const Sweep sweep = run_sweep();
    training_behaviour(sweep);
    discrimination(sweep);
    hos_ordering(sweep);
    default_sweep_ordering(sweep);
    determinism();
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
