#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fieldalign/ingest.hpp"

namespace fieldalign {

/// Cell representation scheme, written "e{0|1}-w{0|1}-g{K}":
///   e1  a dedicated feature for empty (NUL) cells
///   w1  whitespace-delimited words
///   gK  character n-grams of every length 1..K
struct TokenizationScheme {
    bool use_nul_token = true;
    bool use_words = true;
    unsigned max_gram = 2;

    /// Throws a usage error on malformed text or an all-off scheme.
    static TokenizationScheme parse(std::string_view text);
    std::string to_string() const;
    void validate() const;

    bool operator==(const TokenizationScheme&) const = default;
};

enum class FeatureKind : std::uint8_t { word, gram, nul };

std::string_view to_string(FeatureKind k) noexcept;

struct FeatureKey {
    FeatureKind kind;
    std::string text;

    bool operator==(const FeatureKey&) const = default;
};

struct FeatureKeyHash {
    std::size_t operator()(const FeatureKey& k) const noexcept;
};

using FeatureId = std::uint32_t;

/// Bidirectional feature-key <-> dense id map. Ids are assigned in first-seen
/// order. Registration is serialized internally so several threads may
/// tokenize against one unfrozen dictionary.
class FeatureDictionary {
public:
    FeatureDictionary() = default;
    FeatureDictionary(const FeatureDictionary& other);
    FeatureDictionary& operator=(const FeatureDictionary& other);
    FeatureDictionary(FeatureDictionary&& other) noexcept;
    FeatureDictionary& operator=(FeatureDictionary&& other) noexcept;

    std::size_t size() const;
    std::optional<FeatureId> find(const FeatureKey& key) const;
    FeatureId intern(const FeatureKey& key);
    const FeatureKey& key(FeatureId id) const;

    /// Scheme the dictionary was built under; set on first use.
    const std::optional<TokenizationScheme>& scheme() const noexcept { return scheme_; }
    /// Binds the dictionary to `scheme`, or throws a config error if it is
    /// already bound to a different one.
    void bind_scheme(const TokenizationScheme& scheme);

    /// One "kind\ttext\tid" line per feature, text backslash-escaped.
    void write(std::ostream& out) const;
    static FeatureDictionary read(std::istream& in);

    bool operator==(const FeatureDictionary& other) const;

private:
    std::unordered_map<FeatureKey, FeatureId, FeatureKeyHash> ids_;
    std::vector<FeatureKey> keys_;
    std::optional<TokenizationScheme> scheme_;
    mutable std::mutex mutex_;
};

/// Sparse vector, ids strictly increasing, no zero entries.
struct FeatureVector {
    std::vector<std::pair<FeatureId, double>> entries;

    bool empty() const noexcept { return entries.empty(); }
    double squared_norm() const noexcept;
    double total() const noexcept;
    bool operator==(const FeatureVector&) const = default;
};

/// Tokenizes one cell. With `frozen`, features missing from `dict` are
/// dropped instead of being registered.
FeatureVector tokenize(std::string_view cell, const TokenizationScheme& scheme,
                       FeatureDictionary& dict, bool frozen);

/// Read-only tokenization against a frozen dictionary.
FeatureVector tokenize_frozen(std::string_view cell, const TokenizationScheme& scheme,
                              const FeatureDictionary& dict);

/// Raw feature counts of one cell, in generation order, independent of any
/// dictionary.
std::vector<std::pair<FeatureKey, double>> feature_counts(std::string_view cell,
                                                          const TokenizationScheme& scheme);

struct LabeledExample {
    FeatureVector vector;
    std::size_t label;  // index into ExampleSet::classes
};

struct ExampleSet {
    std::vector<std::string> classes;
    std::vector<LabeledExample> examples;
};

/// One example per cell, column-major. Class names are the column names,
/// prefixed with `label_prefix` when given (e.g. "DS1.").
ExampleSet build_examples(const DataSource& ds, const TokenizationScheme& scheme,
                          FeatureDictionary& dict, bool frozen,
                          std::string_view label_prefix = {});

/// Appends `ds`'s examples to `set`, adding its columns as new classes.
void append_examples(ExampleSet& set, const DataSource& ds, const TokenizationScheme& scheme,
                     FeatureDictionary& dict, bool frozen, std::string_view label_prefix = {});

}  // namespace fieldalign
