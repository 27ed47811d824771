#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fieldalign/featurize.hpp"
#include "fieldalign/ingest.hpp"

namespace fieldalign {

/// Per-class probabilities, aligned with the producing model's class list.
using ProbabilityVector = std::vector<double>;

enum class TrainMethod { sgd, asd, knn };

std::string_view to_string(TrainMethod m) noexcept;

struct TrainConfig {
    TrainMethod method = TrainMethod::asd;
    double eta = 0.01;            // sgd learning rate
    unsigned reps = 2000;         // sgd passes
    bool shuffle = false;         // sgd: seeded shuffle of each pass
    std::uint64_t seed = 0;
    double epsilon = 1e-8;        // asd relative-improvement threshold
    unsigned max_iters = 200000;  // asd iteration cap
    unsigned k = 3;               // knn neighbours
    double l2 = 0.0;              // penalty weight on ||w||^2

    /// Single-token form: "sgd:ETA:REPS", "asd:EPS[:MAX_ITERS]", "knn:K".
    static TrainConfig parse(std::string_view spec);
    std::string to_string() const;
    void validate() const;
};

struct TrainingMeta {
    std::string method;
    std::map<std::string, std::string> hyperparameters;
    double objective = 0.0;       // mean log-likelihood - l2 * ||w||^2
    double log_likelihood = 0.0;  // mean log-likelihood
    std::size_t iterations = 0;   // asd accepted steps / sgd passes
    bool converged = true;
    std::string warning;
};

/// Multinomial logistic model without intercept. Weights are stored
/// feature-major: weight(f, c) = weights[f * num_classes + c].
class PlrmModel {
public:
    PlrmModel(std::vector<std::string> classes, TokenizationScheme scheme,
              FeatureDictionary dict, std::vector<double> weights, TrainingMeta meta);

    const std::vector<std::string>& classes() const noexcept { return classes_; }
    std::size_t num_classes() const noexcept { return classes_.size(); }
    std::size_t dimension() const noexcept { return dimension_; }
    const TokenizationScheme& scheme() const noexcept { return scheme_; }
    const FeatureDictionary& dictionary() const noexcept { return dict_; }
    std::span<const double> weights() const noexcept { return weights_; }
    const TrainingMeta& meta() const noexcept { return meta_; }

    ProbabilityVector predict(const FeatureVector& v) const;
    ProbabilityVector predict(std::string_view cell) const;

    /// Versioned JSON container; weights round-trip bit-exactly.
    void save(std::ostream& out) const;
    static PlrmModel load(std::istream& in);

private:
    std::vector<std::string> classes_;
    TokenizationScheme scheme_;
    FeatureDictionary dict_;
    std::size_t dimension_;
    std::vector<double> weights_;
    TrainingMeta meta_;
};

/// Majority vote among the k nearest training cells by cosine distance.
class KnnModel {
public:
    KnnModel(std::vector<std::string> classes, TokenizationScheme scheme, FeatureDictionary dict,
             std::vector<LabeledExample> train, unsigned k);

    const std::vector<std::string>& classes() const noexcept { return classes_; }
    const TokenizationScheme& scheme() const noexcept { return scheme_; }
    const FeatureDictionary& dictionary() const noexcept { return dict_; }
    unsigned k() const noexcept { return k_; }

    ProbabilityVector predict(const FeatureVector& v) const;
    ProbabilityVector predict(std::string_view cell) const;

private:
    std::vector<std::string> classes_;
    TokenizationScheme scheme_;
    FeatureDictionary dict_;
    std::vector<LabeledExample> train_;
    unsigned k_;
};

using Model = std::variant<PlrmModel, KnnModel>;

const std::vector<std::string>& model_classes(const Model& m);
ProbabilityVector predict(const Model& m, std::string_view cell);
ProbabilityVector predict(const Model& m, const FeatureVector& v);

PlrmModel train_sgd(const ExampleSet& examples, FeatureDictionary dict,
                    const TokenizationScheme& scheme, double eta, unsigned reps, double l2,
                    std::uint64_t seed, bool shuffle = false);

PlrmModel train_asd(const ExampleSet& examples, FeatureDictionary dict,
                    const TokenizationScheme& scheme, double epsilon, double l2,
                    unsigned max_iters);

/// Dispatches on config.method.
Model train(const ExampleSet& examples, FeatureDictionary dict, const TokenizationScheme& scheme,
            const TrainConfig& config);

/// Builds examples from every column of `ds` and trains on them.
Model train(const DataSource& ds, const TokenizationScheme& scheme, const TrainConfig& config,
            std::string_view label_prefix = {});

/// kNN vote over `train`. Ties at the k-th distance go to the earlier
/// training example.
ProbabilityVector knn_predict(std::span<const LabeledExample> train, std::size_t num_classes,
                              const FeatureVector& cell_vector, unsigned k);

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) noexcept;

namespace plrm {

/// Softmax of class scores x.W, numerically stabilized.
ProbabilityVector class_probabilities(std::span<const double> weights, std::size_t num_classes,
                                      const FeatureVector& x);

struct Objective {
    double value;           // mean log-likelihood - l2 * ||w||^2
    double log_likelihood;  // mean log-likelihood
};

/// Penalized mean log-likelihood. When `gradient` is non-empty it receives
/// d(value)/d(weights), same layout as `weights`.
Objective evaluate(const ExampleSet& examples, std::span<const double> weights,
                   std::size_t num_classes, double l2, std::span<double> gradient);

}  // namespace plrm

}  // namespace fieldalign
