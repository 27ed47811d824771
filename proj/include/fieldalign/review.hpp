#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fieldalign/align.hpp"
#include "fieldalign/classify.hpp"
#include "fieldalign/error.hpp"
#include "fieldalign/evaluate.hpp"
#include "fieldalign/ingest.hpp"

namespace fieldalign::review {

struct SessionConfig {
    std::string scheme = "e1-w1-g2";
    TrainConfig classifier;
    AggregationMethod method = AggregationMethod::arith;
    std::optional<double> epsilon;
    bool one_to_one = true;
    TableFormat format = TableFormat::csv;
    NulPolicy nul_policy = NulPolicy::empty_is_nul;

    void validate() const;
};

enum class Action { accept, reject, clear };

std::string_view to_string(Action a) noexcept;
Action parse_action(std::string_view s);

/// One analyst decision. Rows are DS2 column names, columns DS1 names;
/// `col` is ignored by clear.
struct DecisionEvent {
    std::string row;
    Action action = Action::accept;
    std::string col;

    bool operator==(const DecisionEvent&) const = default;
};

struct RowDecision {
    std::optional<std::size_t> accepted;
    std::set<std::size_t> rejected;

    bool undecided() const noexcept { return !accepted.has_value(); }
    bool operator==(const RowDecision&) const = default;
};

/// Decisions per matrix row. Mutations validate against the matrix and the
/// one-to-one rule; a rejected mutation leaves the state untouched.
class DecisionState {
public:
    DecisionState() = default;
    DecisionState(const AlignmentMatrix& m, bool one_to_one);

    /// Throws lookup for unknown names and conflict for a column already
    /// accepted by another row under one-to-one.
    void apply(const AlignmentMatrix& m, const DecisionEvent& e);

    const std::vector<RowDecision>& rows() const noexcept { return rows_; }
    bool one_to_one() const noexcept { return one_to_one_; }
    /// Row currently holding column c, if any.
    std::optional<std::size_t> holder(std::size_t c) const;

    bool operator==(const DecisionState&) const = default;

private:
    std::vector<RowDecision> rows_;
    bool one_to_one_ = true;
};

DecisionState replay(const AlignmentMatrix& m, bool one_to_one,
                     const std::vector<DecisionEvent>& log);

enum class CandidateStatus { available, taken, rejected, accepted };

std::string_view to_string(CandidateStatus s) noexcept;

struct Candidate {
    std::size_t col;
    std::string name;
    double value;
    CandidateStatus status;
};

struct RowCandidates {
    std::string row;
    std::optional<std::string> accepted;
    /// Accepted column first, then available columns ranked as best_matches
    /// ranks them, then taken and rejected columns by value.
    std::vector<Candidate> candidates;
    bool no_available_match = false;  // undecided and nothing left to choose
};

using CandidateList = std::vector<RowCandidates>;

CandidateList candidate_list(const AlignmentMatrix& m, const DecisionState& state);

struct SuggestedPair {
    std::string row;
    std::string col;
    double value;
};

/// Optimal one-to-one completion of the undecided rows over columns nobody
/// has accepted, never using a rejected pair.
std::vector<SuggestedPair> suggest_completion(const AlignmentMatrix& m,
                                              const DecisionState& state);

enum class ExportFormat { csv, structured };

ExportFormat parse_export_format(std::string_view s);

inline constexpr std::string_view kUndecided = "UNDECIDED";

enum class SessionStatus { running, ready, failed };

std::string_view to_string(SessionStatus s) noexcept;

struct Session {
    std::string id;
    std::string created;
    std::string updated;
    SessionConfig config;
    std::string ds1_name, ds1_text;
    std::string ds2_name, ds2_text;
    SessionStatus status = SessionStatus::running;
    std::string error;  // when failed: "[module] message"
    std::optional<AlignmentMatrix> matrix;
    std::vector<DecisionEvent> log;
    DecisionState state;

    const AlignmentMatrix& ready_matrix() const;
};

/// CSV "ds2_column,ds1_column" per matrix row, or a JSON document with
/// decisions, values, method metadata and config.
std::string export_mapping(const Session& s, ExportFormat format);

std::string session_to_json(const Session& s);
Session session_from_json(std::string_view text);

struct StoreOptions {
    std::size_t async_cell_threshold = 20000;  // total cells of both sources
    std::size_t max_upload_bytes = 16u << 20;
};

/// Sessions in memory, each mirrored by one JSON file in `dir`. Mutations on
/// one session are serialized and written to disk before they return.
class SessionStore {
public:
    SessionStore(std::filesystem::path dir, StoreOptions options = {});
    ~SessionStore();

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    const StoreOptions& options() const noexcept { return options_; }
    const std::filesystem::path& directory() const noexcept { return dir_; }

    /// Parses both tables immediately; aligns inline below the cell threshold,
    /// otherwise in the background (status "running" until done).
    Session create(std::string ds1_name, std::string ds1_text, std::string ds2_name,
                   std::string ds2_text, const SessionConfig& config);

    Session get(const std::string& id) const;
    std::vector<Session> list() const;

    Session decide(const std::string& id, const DecisionEvent& event);

    /// Blocks until no background alignment is pending.
    void wait_idle();

private:
    struct Entry {
        mutable std::mutex mutex;
        Session session;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    void persist(const Session& s) const;
    void finish(const std::shared_ptr<Entry>& entry);

    std::filesystem::path dir_;
    StoreOptions options_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mutex workers_mutex_;
    std::vector<std::thread> workers_;
};

}  // namespace fieldalign::review
