#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "promptforge/errors.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/rng.hpp"

using namespace promptforge;
namespace fs = std::filesystem;

namespace {

struct Shipped {
    Dataset ds = generate_synthetic(8, 64, 2024);
    SplitSpec split = SplitSpec::halves(8);
    EncoderWeights encoders = EncoderWeights::generate(0);
    std::vector<ImageFeatures> features = encode_dataset(ds, encoders);
};

const Shipped& shipped() {
    static const Shipped s;
    return s;
}

TrainedState untrained(const Dataset& ds, const std::string& method, std::uint64_t seed,
                       const EncoderWeights& encoders, const std::vector<ImageFeatures>* features) {
    TrainConfig cfg;
    cfg.method = MethodSpec::parse(method);
    cfg.seed = seed;
    cfg.epochs = 0;
    cfg.shots = 1;
    return train(ds, SplitSpec::halves(ds.num_classes()), cfg, encoders, features);
}

TextEmbedding rows_of(std::vector<std::vector<double>> rows) {
    const std::size_t m = rows.size(), d = rows.front().size();
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return {Tensor::from({m, d}, std::move(flat))};
}

AttentionRecord record_with_row(const std::vector<double>& values) {
    AttentionRecord rec;
    rec.a_t = Tensor::from({1, values.size()}, values);
    rec.class_names = {"only"};
    return rec;
}

}  // namespace

TEST_CASE("harmonic mean reproduces published averages") {
    struct Triple {
        double base, novel, hos;
    };
    for (const auto& t : {Triple{69.34, 74.22, 71.70}, Triple{82.69, 63.22, 71.66}, Triple{80.47, 71.69, 75.83},
                          Triple{81.56, 72.30, 76.65}}) {
        CHECK(std::abs(harmonic_mean(t.base, t.novel) - t.hos) <= 0.01);
    }
    CHECK(std::abs(harmonic_mean(83.01, 75.72) - 79.1976) < 1e-4);
}

TEST_CASE("harmonic mean properties") {
    for (double x : {0.0, 0.5, 12.5, 50.0, 99.9, 100.0}) CHECK(harmonic_mean(x, x) == doctest::Approx(x));
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    CHECK(harmonic_mean(0.0, 80.0) == 0.0);
    CHECK(harmonic_mean(80.0, 0.0) == 0.0);
    for (double a = 0.0; a <= 100.0; a += 6.25) {
        for (double b = 0.0; b <= 100.0; b += 7.5) {
            const double h = harmonic_mean(a, b);
            CHECK(h == harmonic_mean(b, a));
            CHECK(h <= (a + b) / 2.0 + 1e-12);
            CHECK(h <= std::max(a, b) + 1e-12);
            CHECK(h >= 0.0);
        }
    }
}

TEST_CASE("argmax ties go to the lowest index") {
    const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
    CHECK(argmax(v) == 1);
    CHECK(argmax(std::vector<double>{0.0, 0.0}) == 0);
    CHECK_THROWS_AS(argmax(std::vector<double>{}), DimensionError);
}

TEST_CASE("a constant predictor scores 100 / M") {
    // Every image is the same picture, so every image gets the same answer.
    for (std::size_t m : {2u, 4u, 8u}) {
        Dataset ds = generate_synthetic(2 * m, 3, 1);
        const Image same = render_canonical(5);
        for (auto& s : ds.samples) s.image = same;
        const auto& enc = shipped().encoders;
        const auto state = untrained(ds, "coop", 1, enc, nullptr);
        const auto split = SplitSpec::halves(2 * m);
        CHECK(evaluate(state, ds, split, ClassGroup::Base, enc) == doctest::Approx(100.0 / static_cast<double>(m)));
        const auto group = evaluate_group(state, ds, split, ClassGroup::New, enc);
        CHECK(group.accuracy == doctest::Approx(100.0 / static_cast<double>(m)));
        std::size_t perfect = 0, zero = 0;
        for (const auto& [name, acc] : group.per_class) {
            perfect += acc == 100.0;
            zero += acc == 0.0;
        }
        CHECK(perfect == 1);
        CHECK(zero == m - 1);
    }
}

TEST_CASE("evaluation is a pure function of its inputs") {
    const auto& s = shipped();
    const auto state = untrained(s.ds, "full", 3, s.encoders, &s.features);
    const auto a = evaluate_all(state, s.ds, s.split, s.encoders, &s.features);
    const auto b = evaluate_all(state, s.ds, s.split, s.encoders, nullptr);
    CHECK(a.base_acc == b.base_acc);
    CHECK(a.new_acc == b.new_acc);
    CHECK(a.discrimination == b.discrimination);
    CHECK(a.per_class_acc == b.per_class_acc);
    CHECK(a.per_class_acc.size() == 8);
    CHECK(a.hos == harmonic_mean(a.base_acc, a.new_acc));
    for (const auto& [name, acc] : a.per_class_acc) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 100.0);
    }
}

TEST_CASE("untrained CoOp sits near chance") {
    // Class names outside the grounded lexicon give random class geometry.
    const auto& s = shipped();
    Dataset ds = s.ds;
    std::vector<double> acc;
    for (std::uint64_t r = 0; r < 20; ++r) {
        for (std::size_t c = 0; c < 8; ++c) ds.class_names[c] = "zq" + std::to_string(r) + "v" + std::to_string(c);
        const auto state = untrained(ds, "coop", 100 + r, s.encoders, &s.features);
        acc.push_back(evaluate(state, ds, s.split, ClassGroup::Base, s.encoders, &s.features));
        acc.push_back(evaluate(state, ds, s.split, ClassGroup::New, s.encoders, &s.features));
    }
    const double n = static_cast<double>(acc.size());
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : acc) ss += (a - mean) * (a - mean);
    const double se = std::sqrt(ss / (n - 1.0) / n);
    CHECK(std::abs(mean - 25.0) <= 2.576 * se);
}

TEST_CASE("incompatible states are rejected") {
    const auto& s = shipped();
    const auto state = untrained(s.ds, "coop", 1, s.encoders, &s.features);

    Dataset renamed = s.ds;
    renamed.class_names[0] = "violet disc";
    CHECK_THROWS_AS(evaluate(state, renamed, s.split, ClassGroup::Base, s.encoders), EvaluationError);

    const auto other = EncoderWeights::generate(1);
    CHECK_THROWS_AS(evaluate(state, s.ds, s.split, ClassGroup::New, other), EvaluationError);
    CHECK_THROWS_AS(discrimination_distance(state, s.ds, other), EvaluationError);

    const SplitSpec empty_new{{0, 1, 2, 3, 4, 5, 6, 7}, {}};
    CHECK_THROWS_AS(evaluate(state, s.ds, empty_new, ClassGroup::New, s.encoders), DataError);
}

TEST_CASE("discrimination distance examples") {
    const auto same = rows_of({{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}});
    CHECK(std::abs(discrimination_distance({same, same}, {0, 2})) < 1e-12);

    const auto ortho = rows_of({{1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 0.5}});
    CHECK(discrimination_distance({ortho}, {1}) == doctest::Approx(1.0).epsilon(1e-12));

    const auto mixed = rows_of({{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}});
    CHECK(discrimination_distance({mixed}, {0}) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(discrimination_distance({mixed}, {2}) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(discrimination_distance({}, {}) == 0.0);
    CHECK_THROWS_AS(discrimination_distance({same}, {0, 1}), DimensionError);
    CHECK_THROWS_AS(discrimination_distance({rows_of({{1.0, 0.0}})}, {0}), EvaluationError);
}

TEST_CASE("discrimination of a state covers every image") {
    const auto& s = shipped();
    const auto state = untrained(s.ds, "cocoop", 2, s.encoders, &s.features);
    const double d = discrimination_distance(state, s.ds, s.encoders, &s.features);
    CHECK(d > 0.0);
    CHECK(d <= 2.0);
    CHECK(d == discrimination_distance(state, s.ds, s.encoders, nullptr));
}

TEST_CASE("heatmap normalisation") {
    const auto uniform = attention_heatmap(record_with_row(std::vector<double>(16, 0.3)), 0);
    CHECK(uniform.rows == 4);
    CHECK(uniform.cols == 4);
    for (double v : uniform.values) CHECK(v == 1.0);

    std::vector<double> hot(16, 0.0);
    hot[6] = 2.5;
    const auto one = attention_heatmap(record_with_row(hot), 0);
    for (std::size_t i = 0; i < 16; ++i) CHECK(one.values[i] == (i == 6 ? 1.0 : 0.0));

    std::vector<double> negative{-1.0, -3.0, -2.0, -3.0};
    const auto neg = attention_heatmap(record_with_row(negative), 0);
    CHECK(neg.values == std::vector<double>{1.0, 0.0, 0.5, 0.0});

    const auto zero = attention_heatmap(record_with_row(std::vector<double>(4, 0.0)), 0);
    for (double v : zero.values) CHECK(v == 0.0);

    CHECK_THROWS_AS(attention_heatmap(record_with_row(std::vector<double>(4, 1.0)), 1), IndexError);
    CHECK_THROWS_AS(attention_heatmap(record_with_row(std::vector<double>(6, 1.0)), 0), DimensionError);
    CHECK_THROWS_AS(attention_heatmap(AttentionRecord{}, 0), EvaluationError);
}

TEST_CASE("heatmap files round-trip") {
    const auto dir = fs::temp_directory_path() / "promptforge_heatmaps";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Rng rng(9);
    std::vector<double> row(16);
    for (auto& v : row) v = rng.normal();
    const auto rec = record_with_row(row);
    export_heatmap(rec, 3, 0, dir / "map.pgm");

    const auto expected = attention_heatmap(rec, 0);
    const auto back = read_heatmap_csv(dir / "map.csv");
    CHECK(back.rows == 4);
    CHECK(back.cols == 4);
    REQUIRE(back.values.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(back.values[i] - expected.values[i]) <= 1e-6);

    std::ifstream pgm(dir / "map.pgm");
    std::string magic, comment;
    std::getline(pgm, magic);
    std::getline(pgm, comment);
    CHECK(magic == "P2");
    CHECK(comment.find("only") != std::string::npos);
    std::size_t w = 0, h = 0, maxval = 0;
    pgm >> w >> h >> maxval;
    CHECK(w == 4);
    CHECK(h == 4);
    CHECK(maxval == 255);
    int brightest = 0;
    for (std::size_t i = 0; i < 16; ++i) {
        int v = -1;
        pgm >> v;
        CHECK(v >= 0);
        CHECK(v <= 255);
        CHECK(std::abs(v - 255.0 * expected.values[i]) <= 0.5);
        brightest = std::max(brightest, v);
    }
    CHECK(brightest == 255);

    CHECK_THROWS_AS(export_heatmap(rec, 0, 0, dir / "missing" / "map.pgm"), IoError);
    std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
    CHECK_THROWS_AS(read_heatmap_csv(dir / "ragged.csv"), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("CTP forward passes record heatmaps on the patch grid") {
    const auto& s = shipped();
    const auto state = untrained(s.ds, "full", 1, s.encoders, &s.features);
    const MethodModel model(s.encoders, state.config.resolved_method(), state.params, s.ds.class_names);
    const auto out = model.forward(s.features[0], model.static_text());
    REQUIRE(out.attention.has_value());
    REQUIRE(out.attention->a_t.shape() == Shape{8, 16});
    for (std::size_t c = 0; c < 8; ++c) {
        const auto h = attention_heatmap(*out.attention, c);
        CHECK(h.rows == 4);
        CHECK(*std::max_element(h.values.begin(), h.values.end()) == 1.0);
        for (double v : h.values) CHECK(v >= 0.0);
    }
}
