#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "fieldalign/classify.hpp"
#include "fieldalign/error.hpp"
#include "fieldalign/evaluate.hpp"
#include "oracles.hpp"

using namespace fieldalign;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::usage;
}

ExampleSet random_examples(std::size_t classes, std::size_t features, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ExampleSet ex;
    for (std::size_t c = 0; c < classes; ++c) ex.classes.push_back("c" + std::to_string(c));
    for (std::size_t k = 0; k < n; ++k) {
        FeatureVector v;
        for (FeatureId f = 0; f < features; ++f) {
            if (rng() % 2) v.entries.push_back({f, static_cast<double>(1 + rng() % 4)});
        }
        ex.examples.push_back({v, k < classes ? k : static_cast<std::size_t>(rng() % classes)});
    }
    return ex;
}

const DataSource& separable() {
    static const DataSource ds("sep", {{"letters", {"abc", "bca", "cab", "aab", "bbc"}},
                                       {"digits", {"123", "231", "312", "112", "223"}},
                                       {"symbols", {"!@#", "@#!", "#!@", "!!@", "@@#"}}});
    return ds;
}

}  // namespace

TEST_SUITE("classify") {

TEST_CASE("classifier specs") {
    auto c = TrainConfig::parse("sgd:0.05:300");
    CHECK(c.method == TrainMethod::sgd);
    CHECK(c.eta == 0.05);
    CHECK(c.reps == 300);
    CHECK(c.to_string() == "sgd:0.05:300");
    c = TrainConfig::parse("asd:1e-6");
    CHECK(c.epsilon == 1e-6);
    CHECK(c.max_iters == 200000);
    CHECK(TrainConfig::parse("asd:1e-6:50").max_iters == 50);
    CHECK(TrainConfig::parse("knn:5").k == 5);
    CHECK(TrainConfig::parse(TrainConfig::parse("sgd:0.3:7").to_string()).to_string() == "sgd:0.3:7");
    for (const char* bad : {"", "svm", "sgd:x", "sgd:-1:10", "sgd:0.1:0", "asd:0", "asd:1e-8:1:2", "knn:0",
                            "knn:2:3"}) {
        CAPTURE(bad);
        CHECK(kind_of([&] { TrainConfig::parse(bad); }) == ErrorKind::usage);
    }
    TrainConfig neg;
    neg.l2 = -1;
    CHECK(kind_of([&] { neg.validate(); }) == ErrorKind::usage);
}

TEST_CASE("analytic gradient matches finite differences") {
    for (const double l2 : {0.0, 0.1}) {
        const auto ex = random_examples(4, 6, 30, 3);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        std::vector<double> w(24);
        for (auto& x : w) x = u(rng);
        std::vector<double> g(w.size());
        const auto obj = plrm::evaluate(ex, w, 4, l2, g);
        const auto num = oracle::numeric_gradient(
            [&](const std::vector<double>& x) { return plrm::evaluate(ex, x, 4, l2, {}).value; }, w, 1e-6);
        for (std::size_t k = 0; k < w.size(); ++k) CHECK(g[k] == doctest::Approx(num[k]).epsilon(1e-5));
        double norm = 0;
        for (const auto x : w) norm += x * x;
        CHECK(obj.value == doctest::Approx(obj.log_likelihood - l2 * norm));
    }
}

TEST_CASE("probabilities are a stabilized softmax") {
    const std::vector<double> w = {1000.0, 0.0, -1000.0};  // one feature, three classes
    FeatureVector x;
    x.entries = {{0, 1.0}};
    const auto p = plrm::class_probabilities(w, 3, x);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(p[2]));
    const auto empty = plrm::class_probabilities(w, 3, FeatureVector{});
    for (const auto v : empty) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("asd recovers counting probabilities on single-token cells") {
    const auto ds = oracle::assumption1_source(4, 80, 21);
    const auto expect = oracle::bayes_by_counting(ds);
    const auto model = train(ds, TokenizationScheme::parse("e1-w1-g0"), TrainConfig::parse("asd:1e-10"));
    for (const auto& [value, p] : expect) {
        const auto q = predict(model, value);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(0.02));
    }
    const auto& meta = std::get<PlrmModel>(model).meta();
    CHECK(meta.method == "asd");
    CHECK(meta.converged);
    CHECK(meta.iterations > 0);
}

TEST_CASE("sgd is deterministic per seed") {
    const auto ds = separable();
    TrainConfig cfg = TrainConfig::parse("sgd:0.1:50");
    cfg.shuffle = true;
    cfg.seed = 1;
    const auto a = std::get<PlrmModel>(train(ds, TokenizationScheme::parse("e1-w1-g2"), cfg));
    const auto b = std::get<PlrmModel>(train(ds, TokenizationScheme::parse("e1-w1-g2"), cfg));
    CHECK(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin(), b.weights().end()));
    cfg.seed = 2;
    const auto c = std::get<PlrmModel>(train(ds, TokenizationScheme::parse("e1-w1-g2"), cfg));
    CHECK_FALSE(std::equal(a.weights().begin(), a.weights().end(), c.weights().begin(), c.weights().end()));
}

TEST_CASE("sgd on disjoint single-token columns separates them") {
    const DataSource ds("sh", {{"a", {"alpha", "beta", "gamma"}}, {"b", {"delta", "epsilon", "zeta"}}});
    const auto model = train(ds, TokenizationScheme::parse("e0-w1-g0"), TrainConfig::parse("sgd:0.01:2000"));
    std::size_t correct = 0, cells = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        for (const auto& v : ds.column(c).cells) {
            const auto p = predict(model, v);
            correct += p[c] > p[1 - c];
            ++cells;
        }
    }
    CHECK(correct == cells);
}

TEST_CASE("sgd on identical cells split between two labels") {
    const DataSource ds("id", {{"a", {"same", "same"}}, {"b", {"same", "same"}}});
    const auto p = predict(train(ds, TokenizationScheme::parse("e0-w1-g0"), TrainConfig::parse("sgd:0.01:2000")), "same");
    CHECK(p[0] == doctest::Approx(0.5).epsilon(0.01));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("heavy l2 keeps sgd near uniform") {
    TrainConfig cfg = TrainConfig::parse("sgd:0.01:20");
    cfg.l2 = 1e6;
    const auto model = train(separable(), TokenizationScheme::parse("e1-w1-g2"), cfg);
    for (const auto& cell : {"abc", "123", "!@#", "zzz"}) {
        for (const auto p : predict(model, cell)) CHECK(p == doctest::Approx(1.0 / 3).epsilon(0.01));
    }
}

TEST_CASE("sgd divergence is a numeric error") {
    try {
        train(separable(), TokenizationScheme::parse("e1-w1-g2"), TrainConfig::parse("sgd:1e308:5"));
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("sgd diverged") == 0);
    }
}

TEST_CASE("degenerate training sets") {
    const DataSource one("one", {{"only", {"a", "b"}}});
    CHECK(kind_of([&] { train(one, TokenizationScheme::parse("e1-w1-g2"), TrainConfig{}); }) == ErrorKind::data);
    ExampleSet empty;
    empty.classes = {"a", "b"};
    CHECK(kind_of([&] { train(empty, FeatureDictionary{}, TokenizationScheme{}, TrainConfig{}); }) ==
          ErrorKind::data);
}

TEST_CASE("knn agrees with a brute-force vote") {
    std::mt19937_64 rng(17);
    const std::size_t dim = 8, classes = 4;
    std::vector<LabeledExample> train_set;
    std::vector<std::vector<double>> dense;
    std::vector<std::size_t> labels;
    for (int n = 0; n < 200; ++n) {
        FeatureVector v;
        std::vector<double> d(dim, 0.0);
        for (FeatureId f = 0; f < dim; ++f) {
            if (rng() % 3 == 0) {
                d[f] = static_cast<double>(1 + rng() % 5);
                v.entries.push_back({f, d[f]});
            }
        }
        if (v.empty()) {
            v.entries.push_back({0, 1.0});
            d[0] = 1.0;
        }
        const auto label = static_cast<std::size_t>(rng() % classes);
        train_set.push_back({v, label});
        dense.push_back(d);
        labels.push_back(label);
    }
    for (int q = 0; q < 50; ++q) {
        FeatureVector v;
        std::vector<double> d(dim, 0.0);
        for (FeatureId f = 0; f < dim; ++f) {
            if (rng() % 2) {
                d[f] = static_cast<double>(1 + rng() % 3);
                v.entries.push_back({f, d[f]});
            }
        }
        for (const unsigned k : {1u, 3u, 7u}) {
            const auto got = knn_predict(train_set, classes, v, k);
            const auto want = oracle::brute_force_knn(dense, labels, classes, d, k);
            for (std::size_t c = 0; c < classes; ++c) CHECK(got[c] == doctest::Approx(want[c]));
        }
    }
    CHECK(kind_of([&] { knn_predict(train_set, classes, FeatureVector{}, 201); }) == ErrorKind::config);
    CHECK(kind_of([&] { knn_predict({}, classes, FeatureVector{}, 1); }) == ErrorKind::lookup);
}

TEST_CASE("cosine similarity") {
    FeatureVector a, b;
    a.entries = {{0, 1}, {2, 2}};
    b.entries = {{0, 2}, {2, 4}};
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
    b.entries = {{1, 3}};
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, FeatureVector{}) == 0.0);
}

TEST_CASE("plrm save and load are bit-exact") {
    const auto model = std::get<PlrmModel>(
        train(separable(), TokenizationScheme::parse("e1-w1-g2"), TrainConfig::parse("asd:1e-6")));
    std::stringstream buf;
    model.save(buf);
    const auto back = PlrmModel::load(buf);
    CHECK(back.classes() == model.classes());
    CHECK(back.scheme() == model.scheme());
    CHECK(back.dimension() == model.dimension());
    REQUIRE(back.weights().size() == model.weights().size());
    for (std::size_t k = 0; k < back.weights().size(); ++k) {
        CHECK(std::memcmp(&back.weights()[k], &model.weights()[k], sizeof(double)) == 0);
    }
    CHECK(back.predict("cab") == model.predict("cab"));
    CHECK(back.meta().hyperparameters == model.meta().hyperparameters);

    std::stringstream junk("{\"format\":\"other\"}");
    CHECK(kind_of([&] { PlrmModel::load(junk); }) == ErrorKind::parse);
}

TEST_CASE("self likelihood") {
    const auto model = train(separable(), TokenizationScheme::parse("e1-w1-g2"), TrainConfig::parse("asd:1e-8"));
    const auto lik = self_likelihood(model, separable());
    CHECK(lik.lin >= 0.99);
    CHECK(lik.log <= 0.0);
    CHECK(lik.unambiguous);

    const DataSource twins("tw", {{"a", {"x1", "x2", "x3"}}, {"b", {"x1", "x2", "x3"}}});
    const auto twin_model = train(twins, TokenizationScheme::parse("e1-w1-g2"), TrainConfig::parse("asd:1e-8"));
    const auto t = self_likelihood(twin_model, twins);
    CHECK(t.lin == doctest::Approx(0.5));
    CHECK(t.log == doctest::Approx(std::log(0.5)));
    CHECK_FALSE(t.unambiguous);
}

TEST_CASE("knn model through the dispatcher") {
    const auto model = train(separable(), TokenizationScheme::parse("e1-w1-g2"), TrainConfig::parse("knn:1"));
    CHECK(std::holds_alternative<KnnModel>(model));
    CHECK(model_classes(model) == separable().column_names());
    const auto p = predict(model, "abc");
    CHECK(p == ProbabilityVector{1.0, 0.0, 0.0});
}

}
