#include "fieldalign/classify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <json.hpp>

#include "fieldalign/error.hpp"
#include "fieldalign/text.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::classify, kind, msg);
}

double parse_number(std::string_view s, std::string_view what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        fail(ErrorKind::usage, "bad " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

unsigned parse_count(std::string_view s, std::string_view what) {
    unsigned v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        fail(ErrorKind::usage, "bad " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto p = s.find(sep, start);
        out.push_back(s.substr(start, p == std::string_view::npos ? p : p - start));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

std::size_t check_examples(const ExampleSet& set) {
    if (set.examples.empty()) fail(ErrorKind::data, "no training examples");
    std::set<std::size_t> labels;
    for (const auto& ex : set.examples) {
        if (ex.label >= set.classes.size()) fail(ErrorKind::config, "example label out of range");
        labels.insert(ex.label);
    }
    if (labels.size() < 2) {
        fail(ErrorKind::data, "degenerate training: need at least 2 distinct labels, found " +
                                  std::to_string(labels.size()));
    }
    return set.classes.size();
}

void check_dimension(const ExampleSet& set, std::size_t dim) {
    for (const auto& ex : set.examples) {
        if (!ex.vector.empty() && ex.vector.entries.back().first >= dim) {
            fail(ErrorKind::config, "feature id outside dictionary");
        }
    }
}

void softmax_inplace(std::vector<double>& scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (auto& s : scores) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (auto& s : scores) s /= sum;
}

double squared_norm(std::span<const double> w) {
    double s = 0.0;
    for (double x : w) s += x * x;
    return s;
}

}  // namespace

std::string_view to_string(TrainMethod m) noexcept {
    switch (m) {
        case TrainMethod::sgd: return "sgd";
        case TrainMethod::asd: return "asd";
        case TrainMethod::knn: return "knn";
    }
    return "?";
}

TrainConfig TrainConfig::parse(std::string_view spec) {
    const auto parts = split(spec, ':');
    TrainConfig cfg;
    if (parts[0] == "sgd") {
        cfg.method = TrainMethod::sgd;
        if (parts.size() > 3) fail(ErrorKind::usage, "sgd takes sgd[:ETA[:REPS]]");
        if (parts.size() > 1) cfg.eta = parse_number(parts[1], "sgd learning rate");
        if (parts.size() > 2) cfg.reps = parse_count(parts[2], "sgd pass count");
    } else if (parts[0] == "asd") {
        cfg.method = TrainMethod::asd;
        if (parts.size() > 3) fail(ErrorKind::usage, "asd takes asd[:EPS[:MAX_ITERS]]");
        if (parts.size() > 1) cfg.epsilon = parse_number(parts[1], "asd epsilon");
        if (parts.size() > 2) cfg.max_iters = parse_count(parts[2], "asd iteration cap");
    } else if (parts[0] == "knn") {
        cfg.method = TrainMethod::knn;
        if (parts.size() > 2) fail(ErrorKind::usage, "knn takes knn[:K]");
        if (parts.size() > 1) cfg.k = parse_count(parts[1], "knn k");
    } else {
        fail(ErrorKind::usage, "unknown classifier '" + std::string(spec) +
                                   "' (expected sgd:ETA:REPS, asd:EPS or knn:K)");
    }
    cfg.validate();
    return cfg;
}

std::string TrainConfig::to_string() const {
    switch (method) {
        case TrainMethod::sgd:
            return "sgd:" + text::format_double(eta) + ":" + std::to_string(reps);
        case TrainMethod::asd:
            return "asd:" + text::format_double(epsilon) + ":" + std::to_string(max_iters);
        case TrainMethod::knn:
            return "knn:" + std::to_string(k);
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(l2 >= 0.0) || !std::isfinite(l2)) fail(ErrorKind::usage, "l2 penalty must be >= 0");
    switch (method) {
        case TrainMethod::sgd:
            if (!(eta > 0.0) || !std::isfinite(eta)) fail(ErrorKind::usage, "sgd eta must be > 0");
            if (reps == 0) fail(ErrorKind::usage, "sgd reps must be positive");
            break;
        case TrainMethod::asd:
            if (!(epsilon > 0.0)) fail(ErrorKind::usage, "asd epsilon must be > 0");
            if (max_iters == 0) fail(ErrorKind::usage, "asd max_iters must be positive");
            break;
        case TrainMethod::knn:
            if (k == 0) fail(ErrorKind::usage, "knn k must be positive");
            break;
    }
}

// ---------------------------------------------------------------------------
// PLRM objective

namespace plrm {

namespace {

void probabilities_into(std::span<const double> weights, std::size_t num_classes,
                        const FeatureVector& x, std::vector<double>& scores) {
    scores.assign(num_classes, 0.0);
    for (const auto& [f, count] : x.entries) {
        const double* row = weights.data() + static_cast<std::size_t>(f) * num_classes;
        for (std::size_t c = 0; c < num_classes; ++c) scores[c] += count * row[c];
    }
    softmax_inplace(scores);
}

}  // namespace

ProbabilityVector class_probabilities(std::span<const double> weights, std::size_t num_classes,
                                      const FeatureVector& x) {
    std::vector<double> scores;
    probabilities_into(weights, num_classes, x, scores);
    return scores;
}

Objective evaluate(const ExampleSet& examples, std::span<const double> weights,
                   std::size_t num_classes, double l2, std::span<double> gradient) {
    const bool want_grad = !gradient.empty();
    std::vector<double> observed;  // gradient accumulates expected counts
    if (want_grad) {
        std::fill(gradient.begin(), gradient.end(), 0.0);
        observed.assign(gradient.size(), 0.0);
    }
    double ll = 0.0;
    std::vector<double> p;
    for (const auto& ex : examples.examples) {
        probabilities_into(weights, num_classes, ex.vector, p);
        ll += std::log(p[ex.label]);
        if (!want_grad) continue;
        for (const auto& [f, count] : ex.vector.entries) {
            const auto base = static_cast<std::size_t>(f) * num_classes;
            double* g = gradient.data() + base;
            for (std::size_t c = 0; c < num_classes; ++c) g[c] += count * p[c];
            observed[base + ex.label] += count;
        }
    }
    const double n = static_cast<double>(examples.examples.size());
    ll /= n;
    if (want_grad) {
        for (std::size_t i = 0; i < gradient.size(); ++i) {
            gradient[i] = (observed[i] - gradient[i]) / n - 2.0 * l2 * weights[i];
        }
    }
    return {ll - l2 * squared_norm(weights), ll};
}

}  // namespace plrm

// ---------------------------------------------------------------------------
// Models

PlrmModel::PlrmModel(std::vector<std::string> classes, TokenizationScheme scheme,
                     FeatureDictionary dict, std::vector<double> weights, TrainingMeta meta)
    : classes_(std::move(classes)),
      scheme_(scheme),
      dict_(std::move(dict)),
      dimension_(dict_.size()),
      weights_(std::move(weights)),
      meta_(std::move(meta)) {
    if (classes_.empty()) fail(ErrorKind::config, "model has no classes");
    if (weights_.size() != dimension_ * classes_.size()) {
        fail(ErrorKind::config, "weight count " + std::to_string(weights_.size()) +
                                    " does not match dictionary size x classes");
    }
}

ProbabilityVector PlrmModel::predict(const FeatureVector& v) const {
    return plrm::class_probabilities(weights_, classes_.size(), v);
}

ProbabilityVector PlrmModel::predict(std::string_view cell) const {
    return predict(tokenize_frozen(cell, scheme_, dict_));
}

void PlrmModel::save(std::ostream& out) const {
    nlohmann::json j;
    j["format"] = "fieldalign-model";
    j["version"] = 1;
    j["kind"] = "plrm";
    j["classes"] = classes_;
    j["scheme"] = scheme_.to_string();
    auto features = nlohmann::json::array();
    for (std::size_t id = 0; id < dimension_; ++id) {
        const auto& key = dict_.key(static_cast<FeatureId>(id));
        features.push_back({std::string(fieldalign::to_string(key.kind)), key.text});
    }
    j["features"] = std::move(features);
    j["weights"] = weights_;
    j["training"] = {{"method", meta_.method},
                     {"hyperparameters", meta_.hyperparameters},
                     {"objective", meta_.objective},
                     {"log_likelihood", meta_.log_likelihood},
                     {"iterations", meta_.iterations},
                     {"converged", meta_.converged},
                     {"warning", meta_.warning}};
    out << j.dump() << '\n';
}

PlrmModel PlrmModel::load(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format") != "fieldalign-model") fail(ErrorKind::parse, "not a model file");
        if (j.at("version") != 1) fail(ErrorKind::parse, "unsupported model version");
        const auto scheme = TokenizationScheme::parse(j.at("scheme").get<std::string>());
        FeatureDictionary dict;
        dict.bind_scheme(scheme);
        for (const auto& f : j.at("features")) {
            const auto kind = f.at(0).get<std::string>();
            FeatureKind k = kind == "word"   ? FeatureKind::word
                            : kind == "gram" ? FeatureKind::gram
                                             : FeatureKind::nul;
            dict.intern({k, f.at(1).get<std::string>()});
        }
        TrainingMeta meta;
        const auto& t = j.at("training");
        meta.method = t.at("method").get<std::string>();
        meta.hyperparameters = t.at("hyperparameters").get<std::map<std::string, std::string>>();
        meta.objective = t.at("objective").get<double>();
        meta.log_likelihood = t.at("log_likelihood").get<double>();
        meta.iterations = t.at("iterations").get<std::size_t>();
        meta.converged = t.at("converged").get<bool>();
        meta.warning = t.at("warning").get<std::string>();
        return PlrmModel(j.at("classes").get<std::vector<std::string>>(), scheme, std::move(dict),
                         j.at("weights").get<std::vector<double>>(), std::move(meta));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("malformed model file: ") + e.what());
    }
}

KnnModel::KnnModel(std::vector<std::string> classes, TokenizationScheme scheme,
                   FeatureDictionary dict, std::vector<LabeledExample> train, unsigned k)
    : classes_(std::move(classes)),
      scheme_(scheme),
      dict_(std::move(dict)),
      train_(std::move(train)),
      k_(k) {
    if (train_.empty()) fail(ErrorKind::lookup, "kNN needs a non-empty training set");
    if (k_ == 0 || k_ > train_.size()) {
        fail(ErrorKind::config, "kNN k=" + std::to_string(k_) + " must be in 1.." +
                                    std::to_string(train_.size()));
    }
}

ProbabilityVector KnnModel::predict(const FeatureVector& v) const {
    return knn_predict(train_, classes_.size(), v, k_);
}

ProbabilityVector KnnModel::predict(std::string_view cell) const {
    return predict(tokenize_frozen(cell, scheme_, dict_));
}

const std::vector<std::string>& model_classes(const Model& m) {
    return std::visit([](const auto& x) -> const std::vector<std::string>& { return x.classes(); },
                      m);
}

ProbabilityVector predict(const Model& m, std::string_view cell) {
    return std::visit([&](const auto& x) { return x.predict(cell); }, m);
}

ProbabilityVector predict(const Model& m, const FeatureVector& v) {
    return std::visit([&](const auto& x) { return x.predict(v); }, m);
}

// ---------------------------------------------------------------------------
// Training

PlrmModel train_sgd(const ExampleSet& examples, FeatureDictionary dict,
                    const TokenizationScheme& scheme, double eta, unsigned reps, double l2,
                    std::uint64_t seed, bool shuffle) {
    const auto num_classes = check_examples(examples);
    const auto dim = dict.size();
    check_dimension(examples, dim);

    // w = scale * v; the l2 step w <- w / (1 + 2 eta l2) only touches scale.
    std::vector<double> v(dim * num_classes, 0.0);
    double scale = 1.0;
    const double decay = 1.0 / (1.0 + 2.0 * eta * l2);

    std::vector<std::size_t> order(examples.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);

    std::vector<double> scores(num_classes);
    for (unsigned pass = 1; pass <= reps; ++pass) {
        if (shuffle) {
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng() % i]);
            }
        }
        double ll = 0.0;
        for (const auto n : order) {
            const auto& ex = examples.examples[n];
            std::fill(scores.begin(), scores.end(), 0.0);
            for (const auto& [f, count] : ex.vector.entries) {
                const double* row = v.data() + static_cast<std::size_t>(f) * num_classes;
                for (std::size_t c = 0; c < num_classes; ++c) scores[c] += count * row[c];
            }
            for (auto& s : scores) s *= scale;
            softmax_inplace(scores);
            ll += std::log(scores[ex.label]);
            if (l2 > 0.0) {
                scale *= decay;
                if (scale < 1e-150) {
                    for (auto& x : v) x *= scale;
                    scale = 1.0;
                }
            }
            scores[ex.label] -= 1.0;
            const double step = eta / scale;
            for (const auto& [f, count] : ex.vector.entries) {
                double* row = v.data() + static_cast<std::size_t>(f) * num_classes;
                for (std::size_t c = 0; c < num_classes; ++c) row[c] -= step * count * scores[c];
            }
        }
        if (!std::isfinite(ll)) {
            fail(ErrorKind::numeric, "sgd diverged: non-finite log-likelihood in pass " +
                                         std::to_string(pass));
        }
    }
    for (auto& x : v) x *= scale;

    const auto obj = plrm::evaluate(examples, v, num_classes, l2, {});
    if (!std::isfinite(obj.value)) {
        fail(ErrorKind::numeric, "sgd diverged: non-finite objective after pass " +
                                     std::to_string(reps));
    }
    TrainingMeta meta;
    meta.method = "sgd";
    meta.hyperparameters = {{"eta", text::format_double(eta)},
                            {"reps", std::to_string(reps)},
                            {"l2", text::format_double(l2)},
                            {"seed", std::to_string(seed)},
                            {"shuffle", shuffle ? "true" : "false"}};
    meta.objective = obj.value;
    meta.log_likelihood = obj.log_likelihood;
    meta.iterations = reps;
    return PlrmModel(examples.classes, scheme, std::move(dict), std::move(v), std::move(meta));
}

PlrmModel train_asd(const ExampleSet& examples, FeatureDictionary dict,
                    const TokenizationScheme& scheme, double epsilon, double l2,
                    unsigned max_iters) {
    const auto num_classes = check_examples(examples);
    const auto dim = dict.size();
    check_dimension(examples, dim);

    const std::size_t size = dim * num_classes;
    std::vector<double> w(size, 0.0), grad(size), trial(size), trial_grad(size);
    auto current = plrm::evaluate(examples, w, num_classes, l2, grad);
    if (!std::isfinite(current.value)) fail(ErrorKind::numeric, "non-finite initial objective");

    // Step grows 1.1x after an improving step and halves after a failed one.
    double step = 1.0;
    std::size_t accepted = 0;
    bool converged = false;
    std::string warning;
    while (accepted < max_iters) {
        bool improved = false;
        plrm::Objective next{};
        for (int halvings = 0; halvings < 200; ++halvings) {
            for (std::size_t i = 0; i < size; ++i) trial[i] = w[i] + step * grad[i];
            next = plrm::evaluate(examples, trial, num_classes, l2, trial_grad);
            if (next.value > current.value) {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            converged = true;  // no ascent direction left at machine precision
            break;
        }
        ++accepted;
        step *= 1.1;
        const double gain = (next.value - current.value) / std::max(std::abs(current.value), 1e-300);
        w.swap(trial);
        grad.swap(trial_grad);
        current = next;
        if (gain < epsilon) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        warning = "no convergence within " + std::to_string(max_iters) + " iterations";
    }

    TrainingMeta meta;
    meta.method = "asd";
    meta.hyperparameters = {{"epsilon", text::format_double(epsilon)},
                            {"l2", text::format_double(l2)},
                            {"max_iters", std::to_string(max_iters)}};
    meta.objective = current.value;
    meta.log_likelihood = current.log_likelihood;
    meta.iterations = accepted;
    meta.converged = converged;
    meta.warning = warning;
    return PlrmModel(examples.classes, scheme, std::move(dict), std::move(w), std::move(meta));
}

Model train(const ExampleSet& examples, FeatureDictionary dict, const TokenizationScheme& scheme,
            const TrainConfig& config) {
    config.validate();
    switch (config.method) {
        case TrainMethod::sgd:
            return train_sgd(examples, std::move(dict), scheme, config.eta, config.reps, config.l2,
                             config.seed, config.shuffle);
        case TrainMethod::asd:
            return train_asd(examples, std::move(dict), scheme, config.epsilon, config.l2,
                             config.max_iters);
        case TrainMethod::knn:
            check_examples(examples);
            return KnnModel(examples.classes, scheme, std::move(dict), examples.examples,
                            config.k);
    }
    fail(ErrorKind::config, "unknown training method");
}

Model train(const DataSource& ds, const TokenizationScheme& scheme, const TrainConfig& config,
            std::string_view label_prefix) {
    FeatureDictionary dict;
    auto examples = build_examples(ds, scheme, dict, false, label_prefix);
    return train(examples, std::move(dict), scheme, config);
}

// ---------------------------------------------------------------------------
// kNN

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) noexcept {
    const double na = a.squared_norm();
    const double nb = b.squared_norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0.0;
    auto i = a.entries.begin();
    auto j = b.entries.begin();
    while (i != a.entries.end() && j != b.entries.end()) {
        if (i->first < j->first) {
            ++i;
        } else if (j->first < i->first) {
            ++j;
        } else {
            dot += i->second * j->second;
            ++i;
            ++j;
        }
    }
    return dot / std::sqrt(na * nb);
}

ProbabilityVector knn_predict(std::span<const LabeledExample> train, std::size_t num_classes,
                              const FeatureVector& cell_vector, unsigned k) {
    if (train.empty()) fail(ErrorKind::lookup, "kNN needs a non-empty training set");
    if (k == 0 || k > train.size()) {
        fail(ErrorKind::config,
             "kNN k=" + std::to_string(k) + " must be in 1.." + std::to_string(train.size()));
    }
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    for (std::size_t n = 0; n < train.size(); ++n) {
        dist[n] = {1.0 - cosine_similarity(train[n].vector, cell_vector), n};
    }
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    ProbabilityVector p(num_classes, 0.0);
    for (unsigned i = 0; i < k; ++i) p[train[dist[i].second].label] += 1.0 / k;
    return p;
}

}  // namespace fieldalign
