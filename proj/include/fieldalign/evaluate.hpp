#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fieldalign/align.hpp"
#include "fieldalign/classify.hpp"

namespace fieldalign {

/// DS2 column -> correct DS1 column. Several DS2 columns may share a target.
struct GroundTruth {
    std::map<std::string, std::string> mapping;

    /// Throws a lookup error if any name is absent from the matrix.
    void check_against(const AlignmentMatrix& m) const;
};

/// Two-column CSV "ds2_column,ds1_column"; a leading header row with exactly
/// those names is skipped.
GroundTruth parse_ground_truth(std::string_view csv);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct TopKReport {
    std::vector<std::size_t> ks;
    std::vector<std::size_t> hits;  // hits[n]: rows whose truth ranks within ks[n]
    std::size_t total = 0;
    std::vector<std::string> skipped_rows;  // matrix rows absent from the truth

    /// "x/y/z"
    std::string triple() const;
};

TopKReport topk_score(const AlignmentMatrix& m, const GroundTruth& truth,
                      const std::vector<std::size_t>& ks = {1, 2, 3});

struct Likelihood {
    double lin = 0.0;  // mean probability of the correct class
    double log = 0.0;  // mean natural log of it
    /// Every example's correct class is its strict argmax.
    bool unambiguous = false;
};

/// Self-assessment of a classifier on labelled examples (usually its own
/// training cells). `examples.classes` are matched to the model's by name.
/// The vectors must come from the model's own dictionary.
Likelihood self_likelihood(const Model& model, const ExampleSet& examples);

/// Scores every cell of `ds` with `model`; column j's correct class is
/// `label_prefix + name`.
Likelihood self_likelihood(const Model& model, const DataSource& ds,
                           std::string_view label_prefix = {});

/// Likelihood of scored cells against a notional correct class per column.
/// targets[j] is a class index for column j, or nullopt to skip the column.
Likelihood score_likelihood(const CellScoreTable& scores,
                            const std::vector<std::optional<std::size_t>>& targets);

enum class MatchingMode { sum, log_product };

std::string_view to_string(MatchingMode m) noexcept;

struct MatchingAssignment {
    std::vector<std::size_t> col_of_row;
    double objective = 0.0;  // sum of entries, or sum of their logs
    MatchingMode mode = MatchingMode::sum;
};

/// Optimal injective row -> column assignment (Hungarian method).
/// Requires rows <= cols. In log_product mode zero entries are forbidden.
MatchingAssignment one_to_one_matching(const AlignmentMatrix& m, MatchingMode mode);

/// Same on a raw value grid; `forbidden[r][c]` excludes a pair.
MatchingAssignment one_to_one_matching(const std::vector<std::vector<double>>& values,
                                       MatchingMode mode,
                                       const std::vector<std::vector<bool>>& forbidden = {},
                                       const std::vector<std::string>& row_names = {});

struct ConfidenceReport {
    double l1_to_assignment = 0.0;  // |Q - H|_1
    std::vector<std::size_t> assignment;  // column of Q's 1 in each row
    bool one_to_one = false;
    bool normalized = false;  // rows rescaled to sum to 1 first
    double lin_lik = 0.0;     // mean H entry selected by Q
    double log_lik = 0.0;     // mean log of it
    std::optional<MatchingAssignment> matching;
};

/// Distance from the alignment matrix to the nearest 0/1 row-assignment
/// matrix (optionally also column-injective).
ConfidenceReport l1_confidence(const AlignmentMatrix& m, bool one_to_one);

/// Structured (JSON) evaluation report.
std::string evaluation_to_json(const AlignmentMatrix& m, const std::optional<TopKReport>& topk,
                               const std::optional<ConfidenceReport>& confidence);

}  // namespace fieldalign
