#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fieldalign/align.hpp"
#include "fieldalign/classify.hpp"
#include "fieldalign/error.hpp"
#include "fieldalign/evaluate.hpp"
#include "fieldalign/featurize.hpp"
#include "fieldalign/ingest.hpp"

namespace fieldalign {

/// Everything needed to turn two sources into one alignment matrix.
struct AlignmentSpec {
    TokenizationScheme scheme;
    TrainConfig classifier;
    AggregationMethod method = AggregationMethod::arith;
    std::optional<double> epsilon;  // geom_eps smoothing
};

/// Outcome of the train/test route, kept so several aggregations can share
/// one trained model.
struct ScoredAlignment {
    Model model;
    CellScoreTable test_scores;
    std::optional<CellScoreTable> self_scores;
};

ScoredAlignment score_pair(const DataSource& train, const DataSource& test,
                           const TokenizationScheme& scheme, const TrainConfig& classifier,
                           bool want_self_scores);

/// Runs the train/test route or a symmetric method, as `spec.method` says.
AlignmentMatrix compute_alignment(const DataSource& ds1, const DataSource& ds2,
                                  const AlignmentSpec& spec);

enum class Command { align, sym1, sym2, eval, profile };

std::string_view to_string(Command c) noexcept;

struct RunConfig {
    Command command = Command::align;
    std::filesystem::path first;   // align: training source; sym/profile: first source
    std::filesystem::path second;  // align: test source; sym/profile: second source
    std::filesystem::path matrix;  // eval: matrix JSON document
    TableFormat format = TableFormat::csv;
    NulPolicy nul_policy = NulPolicy::empty_is_nul;
    std::optional<std::pair<std::size_t, std::size_t>> sample;  // start, count
    std::string scheme = "e1-w1-g2";
    TrainConfig classifier;
    std::vector<AggregationMethod> methods{AggregationMethod::arith};
    std::optional<double> epsilon;
    std::optional<std::filesystem::path> truth;
    std::filesystem::path out_dir = ".";
    bool confidence = false;
    bool one_to_one = false;
    std::optional<std::filesystem::path> save_model;
};

struct RunResult {
    std::vector<std::filesystem::path> written;
    std::string report;  // human-readable summary, also written to report.txt
};

/// Executes one batch command and writes its artifacts into config.out_dir.
RunResult run(const RunConfig& config);

/// 0 ok, 2 usage, 3 data, 4 numeric / infeasibility.
int exit_code(ErrorKind kind) noexcept;

/// Writes to a temporary sibling then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Output directory when none is given: $FIELDALIGN_OUT_DIR, else ".".
std::filesystem::path default_out_dir();

}  // namespace fieldalign
