#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fieldalign/classify.hpp"
#include "fieldalign/ingest.hpp"

namespace fieldalign {

/// Per-cell probability vectors for every column of a scored source.
/// groups[j][k] is the distribution over `classes` for cell k of column j.
struct CellScoreTable {
    std::vector<std::string> classes;
    std::vector<std::string> columns;
    std::vector<std::vector<ProbabilityVector>> groups;

    std::size_t group_size(std::size_t j) const { return groups.at(j).size(); }
};

CellScoreTable score_cells(const Model& model, const DataSource& ds);

/// Arithmetic means R[j][i] = mean_k groups[j][k][i].
std::vector<std::vector<double>> mean_scores(const CellScoreTable& scores);

enum class AggregationMethod { arith, geom, geom_eps, cosine_ratio, sym1, sym2 };
enum class Comparability { full, row_only };

std::string_view to_string(AggregationMethod m) noexcept;
std::string_view to_string(Comparability c) noexcept;
/// Accepts the canonical names plus "cosine" for cosine_ratio.
AggregationMethod parse_aggregation_method(std::string_view s);

/// f[j][i] links DS2 column j (row) to DS1 column i (column).
struct AlignmentMatrix {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<std::vector<double>> values;
    AggregationMethod method = AggregationMethod::arith;
    Comparability comparability = Comparability::full;
    std::optional<double> epsilon;

    double at(std::size_t row, std::size_t col) const { return values.at(row).at(col); }
    std::size_t num_rows() const noexcept { return rows.size(); }
    std::size_t num_cols() const noexcept { return cols.size(); }
    std::size_t row_index(std::string_view name) const;
    std::size_t col_index(std::string_view name) const;

    bool operator==(const AlignmentMatrix&) const = default;
};

inline constexpr double kDefaultGeomEpsilon = 1e-6;

struct AggregateOptions {
    /// Scores of the training source under its own model; required by
    /// cosine_ratio.
    const CellScoreTable* self_scores = nullptr;
    /// Smoothing for geom_eps.
    std::optional<double> epsilon;
};

/// Collapses each DS2 column's cell scores into one matrix row using one of
/// arith, geom, geom_eps or cosine_ratio.
AlignmentMatrix aggregate(const CellScoreTable& scores, AggregationMethod method,
                          const AggregateOptions& options = {});

/// Joint-discrimination symmetric alignment: one model over the columns of
/// both sources, labelled "DS1.<name>" and "DS2.<name>".
AlignmentMatrix align_sym1(const DataSource& ds1, const DataSource& ds2,
                           const TokenizationScheme& scheme, const TrainConfig& config);

/// Two-model symmetric alignment: a model per source, each applied to the
/// other source's cells.
AlignmentMatrix align_sym2(const DataSource& ds1, const DataSource& ds2,
                           const TokenizationScheme& scheme, const TrainConfig& config);

struct Match {
    std::size_t col;
    std::string name;
    double value;
};

/// Per row, the top_k columns by descending value; ties go to the lower
/// column index.
std::vector<std::vector<Match>> best_matches(const AlignmentMatrix& m, std::size_t top_k);

/// Ranking of one row restricted to `allowed` columns (all when empty).
std::vector<std::size_t> rank_row(const std::vector<double>& row,
                                  const std::vector<bool>& allowed = {});

// Field profiles ------------------------------------------------------------

struct FieldProfile {
    std::string column;
    std::map<std::string, double> gram1;
    std::map<std::string, double> gram2;
    std::map<std::size_t, double> lengths;
};

/// Character 1-gram, 2-gram and cell-length distributions. NUL cells count as
/// zero-length strings.
FieldProfile field_profile(const Column& column);

/// Jensen-Shannon divergence (natural log) of two distributions. An empty
/// distribution is identical only to another empty one.
template <typename Key>
double jensen_shannon(const std::map<Key, double>& p, const std::map<Key, double>& q);

/// Mean of the three Jensen-Shannon divergences; in [0, ln 2].
double profile_distance(const FieldProfile& a, const FieldProfile& b);

/// Rows: columns of ds2, cols: columns of ds1, entries: profile_distance.
struct DistanceMatrix {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<std::vector<double>> values;
};

DistanceMatrix profile_distances(const DataSource& ds1, const DataSource& ds2);

// Export ----------------------------------------------------------------------

/// First row: empty corner then DS1 names; first column: DS2 names. Values at
/// full round-trip precision.
std::string matrix_to_csv(const AlignmentMatrix& m);
std::string matrix_to_csv(const DistanceMatrix& m);

/// JSON document carrying method, comparability, params and values.
std::string matrix_to_json(const AlignmentMatrix& m);
AlignmentMatrix matrix_from_json(std::string_view text);

/// Top three matches per row as percentages with one decimal.
std::string matrix_report(const AlignmentMatrix& m);

}  // namespace fieldalign
