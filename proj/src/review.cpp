#include "fieldalign/review.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "fieldalign/pipeline.hpp"
#include "fieldalign/text.hpp"

namespace fieldalign::review {

using nlohmann::json;

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::review, kind, msg);
}

std::size_t find_name(const std::vector<std::string>& names, std::string_view name,
                      std::string_view what) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        fail(ErrorKind::lookup, "unknown " + std::string(what) + " '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string new_id() {
    static std::mutex mutex;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mutex);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

json config_to_json(const SessionConfig& c) {
    json j;
    j["scheme"] = c.scheme;
    j["classifier"] = c.classifier.to_string();
    j["seed"] = c.classifier.seed;
    j["shuffle"] = c.classifier.shuffle;
    j["l2"] = c.classifier.l2;
    j["method"] = std::string(to_string(c.method));
    j["epsilon"] = c.epsilon ? json(*c.epsilon) : json(nullptr);
    j["one_to_one"] = c.one_to_one;
    j["format"] = std::string(to_string(c.format));
    j["nul_policy"] = std::string(to_string(c.nul_policy));
    return j;
}

SessionConfig config_from_json(const json& j) {
    SessionConfig c;
    c.scheme = j.at("scheme").get<std::string>();
    c.classifier = TrainConfig::parse(j.at("classifier").get<std::string>());
    c.classifier.seed = j.at("seed").get<std::uint64_t>();
    c.classifier.shuffle = j.at("shuffle").get<bool>();
    c.classifier.l2 = j.at("l2").get<double>();
    c.method = parse_aggregation_method(j.at("method").get<std::string>());
    if (!j.at("epsilon").is_null()) c.epsilon = j.at("epsilon").get<double>();
    c.one_to_one = j.at("one_to_one").get<bool>();
    c.format = parse_table_format(j.at("format").get<std::string>());
    c.nul_policy = parse_nul_policy(j.at("nul_policy").get<std::string>());
    return c;
}

AlignmentMatrix align_session(const Session& s) {
    const auto ds1 = parse_table(s.ds1_text, s.ds1_name, s.config.format, s.config.nul_policy);
    const auto ds2 = parse_table(s.ds2_text, s.ds2_name, s.config.format, s.config.nul_policy);
    AlignmentSpec spec{TokenizationScheme::parse(s.config.scheme), s.config.classifier,
                       s.config.method, s.config.epsilon};
    return compute_alignment(ds1, ds2, spec);
}

}  // namespace

void SessionConfig::validate() const {
    TokenizationScheme::parse(scheme).validate();
    classifier.validate();
    if (epsilon && !(*epsilon > 0.0)) fail(ErrorKind::usage, "epsilon must be > 0");
}

std::string_view to_string(Action a) noexcept {
    switch (a) {
        case Action::accept: return "accept";
        case Action::reject: return "reject";
        case Action::clear: return "clear";
    }
    return "?";
}

Action parse_action(std::string_view s) {
    if (s == "accept") return Action::accept;
    if (s == "reject") return Action::reject;
    if (s == "clear") return Action::clear;
    fail(ErrorKind::usage, "unknown action '" + std::string(s) + "' (expected accept, reject or clear)");
}

DecisionState::DecisionState(const AlignmentMatrix& m, bool one_to_one)
    : rows_(m.num_rows()), one_to_one_(one_to_one) {}

std::optional<std::size_t> DecisionState::holder(std::size_t c) const {
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        if (rows_[r].accepted == c) return r;
    }
    return std::nullopt;
}

void DecisionState::apply(const AlignmentMatrix& m, const DecisionEvent& e) {
    const auto r = find_name(m.rows, e.row, "row");
    auto& row = rows_.at(r);
    if (e.action == Action::clear) {
        row = {};
        return;
    }
    const auto c = find_name(m.cols, e.col, "column");
    if (e.action == Action::accept) {
        if (one_to_one_) {
            if (const auto h = holder(c); h && *h != r) {
                fail(ErrorKind::conflict,
                     "column '" + m.cols[c] + "' is already accepted by row '" + m.rows[*h] + "'");
            }
        }
        row.accepted = c;
        row.rejected.erase(c);
    } else {
        if (row.accepted == c) row.accepted.reset();
        row.rejected.insert(c);
    }
}

DecisionState replay(const AlignmentMatrix& m, bool one_to_one,
                     const std::vector<DecisionEvent>& log) {
    DecisionState state(m, one_to_one);
    for (const auto& e : log) state.apply(m, e);
    return state;
}

std::string_view to_string(CandidateStatus s) noexcept {
    switch (s) {
        case CandidateStatus::available: return "available";
        case CandidateStatus::taken: return "taken";
        case CandidateStatus::rejected: return "rejected";
        case CandidateStatus::accepted: return "accepted";
    }
    return "?";
}

CandidateList candidate_list(const AlignmentMatrix& m, const DecisionState& state) {
    const auto n = m.num_cols();
    std::vector<std::optional<std::size_t>> held(n);
    if (state.one_to_one()) {
        for (std::size_t r = 0; r < state.rows().size(); ++r) {
            if (const auto a = state.rows()[r].accepted) held[*a] = r;
        }
    }

    CandidateList out;
    out.reserve(m.num_rows());
    for (std::size_t r = 0; r < m.num_rows(); ++r) {
        const auto& d = state.rows().at(r);
        RowCandidates rc;
        rc.row = m.rows[r];
        std::vector<CandidateStatus> status(n, CandidateStatus::available);
        for (std::size_t c = 0; c < n; ++c) {
            if (d.accepted == c) status[c] = CandidateStatus::accepted;
            else if (d.rejected.count(c)) status[c] = CandidateStatus::rejected;
            else if (held[c] && *held[c] != r) status[c] = CandidateStatus::taken;
        }
        auto push = [&](std::size_t c) {
            rc.candidates.push_back({c, m.cols[c], m.values[r][c], status[c]});
        };
        if (d.accepted) {
            rc.accepted = m.cols[*d.accepted];
            push(*d.accepted);
        }
        std::vector<bool> available(n), other(n);
        bool any = false;
        for (std::size_t c = 0; c < n; ++c) {
            available[c] = status[c] == CandidateStatus::available;
            other[c] = status[c] == CandidateStatus::taken || status[c] == CandidateStatus::rejected;
            any = any || available[c];
        }
        if (any) {
            for (const auto c : rank_row(m.values[r], available)) push(c);
        }
        if (std::count(other.begin(), other.end(), true) > 0) {
            for (const auto c : rank_row(m.values[r], other)) push(c);
        }
        rc.no_available_match = d.undecided() && !any;
        out.push_back(std::move(rc));
    }
    return out;
}

std::vector<SuggestedPair> suggest_completion(const AlignmentMatrix& m, const DecisionState& state) {
    if (!state.one_to_one()) {
        fail(ErrorKind::conflict, "completion suggestions need a one-to-one session");
    }
    std::vector<std::size_t> rows, cols;
    std::vector<bool> taken(m.num_cols(), false);
    for (std::size_t r = 0; r < state.rows().size(); ++r) {
        const auto& d = state.rows()[r];
        if (d.accepted) taken[*d.accepted] = true;
        else rows.push_back(r);
    }
    for (std::size_t c = 0; c < m.num_cols(); ++c) {
        if (!taken[c]) cols.push_back(c);
    }
    if (rows.empty()) return {};
    if (rows.size() > cols.size()) {
        fail(ErrorKind::infeasible, std::to_string(rows.size()) + " undecided rows but only " +
                                        std::to_string(cols.size()) + " available columns");
    }

    std::vector<std::vector<double>> values(rows.size(), std::vector<double>(cols.size()));
    std::vector<std::vector<bool>> forbidden(rows.size(), std::vector<bool>(cols.size()));
    std::vector<std::string> names;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        names.push_back(m.rows[rows[a]]);
        for (std::size_t b = 0; b < cols.size(); ++b) {
            values[a][b] = m.values[rows[a]][cols[b]];
            forbidden[a][b] = state.rows()[rows[a]].rejected.count(cols[b]) > 0;
        }
    }
    const auto match = one_to_one_matching(values, MatchingMode::sum, forbidden, names);
    std::vector<SuggestedPair> out;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const auto c = cols[match.col_of_row[a]];
        out.push_back({m.rows[rows[a]], m.cols[c], m.values[rows[a]][c]});
    }
    return out;
}

ExportFormat parse_export_format(std::string_view s) {
    if (s == "csv") return ExportFormat::csv;
    if (s == "structured" || s == "json") return ExportFormat::structured;
    fail(ErrorKind::usage, "unknown export format '" + std::string(s) + "' (expected csv or structured)");
}

std::string_view to_string(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::running: return "running";
        case SessionStatus::ready: return "ready";
        case SessionStatus::failed: return "failed";
    }
    return "?";
}

const AlignmentMatrix& Session::ready_matrix() const {
    if (status == SessionStatus::failed) {
        fail(ErrorKind::conflict, "session '" + id + "' failed: " + error);
    }
    if (status != SessionStatus::ready || !matrix) {
        fail(ErrorKind::conflict, "session '" + id + "' is still aligning");
    }
    return *matrix;
}

std::string export_mapping(const Session& s, ExportFormat format) {
    const auto& m = s.ready_matrix();
    const auto& rows = s.state.rows();
    if (format == ExportFormat::csv) {
        std::string out;
        for (std::size_t r = 0; r < m.num_rows(); ++r) {
            out += csv_field(m.rows[r]) + ',' +
                   (rows[r].accepted ? csv_field(m.cols[*rows[r].accepted]) : std::string(kUndecided)) +
                   '\n';
        }
        return out;
    }

    json doc;
    doc["format"] = "fieldalign-mapping";
    doc["version"] = 1;
    doc["session"] = s.id;
    doc["sources"] = {{"ds1", s.ds1_name}, {"ds2", s.ds2_name}};
    doc["config"] = config_to_json(s.config);
    doc["method"] = std::string(to_string(m.method));
    doc["comparability"] = std::string(to_string(m.comparability));
    doc["epsilon"] = m.epsilon ? json(*m.epsilon) : json(nullptr);
    json mapping = json::array();
    for (std::size_t r = 0; r < m.num_rows(); ++r) {
        json item;
        item["row"] = m.rows[r];
        if (rows[r].accepted) {
            item["col"] = m.cols[*rows[r].accepted];
            item["value"] = m.values[r][*rows[r].accepted];
        } else {
            item["col"] = std::string(kUndecided);
            item["value"] = nullptr;
        }
        json rejected = json::array();
        for (const auto c : rows[r].rejected) rejected.push_back(m.cols[c]);
        item["rejected"] = rejected;
        mapping.push_back(item);
    }
    doc["mapping"] = mapping;
    doc["rows"] = m.rows;
    doc["cols"] = m.cols;
    doc["values"] = m.values;
    return doc.dump(2) + "\n";
}

std::string session_to_json(const Session& s) {
    json j;
    j["format"] = "fieldalign-session";
    j["version"] = 1;
    j["id"] = s.id;
    j["created"] = s.created;
    j["updated"] = s.updated;
    j["status"] = std::string(to_string(s.status));
    j["error"] = s.error;
    j["config"] = config_to_json(s.config);
    j["sources"] = {{"ds1", {{"name", s.ds1_name}, {"text", s.ds1_text}}},
                    {"ds2", {{"name", s.ds2_name}, {"text", s.ds2_text}}}};
    j["matrix"] = s.matrix ? json::parse(matrix_to_json(*s.matrix)) : json(nullptr);
    json log = json::array();
    for (const auto& e : s.log) {
        log.push_back({{"row", e.row}, {"action", std::string(to_string(e.action))}, {"col", e.col}});
    }
    j["log"] = log;
    return j.dump(1) + "\n";
}

Session session_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        if (j.at("format") != "fieldalign-session" || j.at("version") != 1) {
            fail(ErrorKind::parse, "not a fieldalign session document");
        }
        Session s;
        s.id = j.at("id").get<std::string>();
        s.created = j.at("created").get<std::string>();
        s.updated = j.at("updated").get<std::string>();
        const auto status = j.at("status").get<std::string>();
        s.status = status == "ready"    ? SessionStatus::ready
                   : status == "failed" ? SessionStatus::failed
                                        : SessionStatus::running;
        s.error = j.at("error").get<std::string>();
        s.config = config_from_json(j.at("config"));
        s.ds1_name = j.at("sources").at("ds1").at("name").get<std::string>();
        s.ds1_text = j.at("sources").at("ds1").at("text").get<std::string>();
        s.ds2_name = j.at("sources").at("ds2").at("name").get<std::string>();
        s.ds2_text = j.at("sources").at("ds2").at("text").get<std::string>();
        if (!j.at("matrix").is_null()) s.matrix = matrix_from_json(j.at("matrix").dump());
        for (const auto& e : j.at("log")) {
            s.log.push_back({e.at("row").get<std::string>(), parse_action(e.at("action").get<std::string>()),
                             e.at("col").get<std::string>()});
        }
        if (s.matrix) s.state = replay(*s.matrix, s.config.one_to_one, s.log);
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, std::string("malformed session document: ") + e.what());
    }
}

SessionStore::SessionStore(std::filesystem::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(options) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::io, "cannot create session directory '" + dir_.string() + "'");
    std::vector<std::shared_ptr<Entry>> pending;
    for (const auto& f : std::filesystem::directory_iterator(dir_)) {
        if (f.path().extension() != ".json") continue;
        std::ifstream in(f.path(), std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        auto entry = std::make_shared<Entry>();
        entry->session = session_from_json(buf.str());
        if (entry->session.status == SessionStatus::running) pending.push_back(entry);
        sessions_[entry->session.id] = entry;
    }
    for (auto& entry : pending) {
        std::lock_guard lock(workers_mutex_);
        workers_.emplace_back([this, entry] { finish(entry); });
    }
}

SessionStore::~SessionStore() { wait_idle(); }

void SessionStore::wait_idle() {
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(workers_mutex_);
        workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::lookup, "no session '" + id + "'");
    return it->second;
}

void SessionStore::persist(const Session& s) const {
    write_file_atomic(dir_ / (s.id + ".json"), session_to_json(s));
}

void SessionStore::finish(const std::shared_ptr<Entry>& entry) {
    Session snapshot;
    {
        std::lock_guard lock(entry->mutex);
        snapshot = entry->session;
    }
    try {
        snapshot.matrix = align_session(snapshot);
        snapshot.state = DecisionState(*snapshot.matrix, snapshot.config.one_to_one);
        snapshot.status = SessionStatus::ready;
    } catch (const Error& e) {
        snapshot.status = SessionStatus::failed;
        snapshot.error = e.diagnostic();
    } catch (const std::exception& e) {
        snapshot.status = SessionStatus::failed;
        snapshot.error = e.what();
    }
    snapshot.updated = now_utc();
    std::lock_guard lock(entry->mutex);
    try {
        persist(snapshot);
    } catch (const Error&) {
    }
    entry->session = std::move(snapshot);
}

Session SessionStore::create(std::string ds1_name, std::string ds1_text, std::string ds2_name,
                             std::string ds2_text, const SessionConfig& config) {
    if (ds1_text.size() + ds2_text.size() > options_.max_upload_bytes) {
        fail(ErrorKind::usage, "upload exceeds the limit of " +
                                   std::to_string(options_.max_upload_bytes) + " bytes");
    }
    config.validate();
    const auto ds1 = parse_table(ds1_text, ds1_name, config.format, config.nul_policy);
    const auto ds2 = parse_table(ds2_text, ds2_name, config.format, config.nul_policy);

    Session s;
    s.id = new_id();
    s.created = s.updated = now_utc();
    s.config = config;
    s.ds1_name = std::move(ds1_name);
    s.ds1_text = std::move(ds1_text);
    s.ds2_name = std::move(ds2_name);
    s.ds2_text = std::move(ds2_text);

    auto entry = std::make_shared<Entry>();
    const bool inline_run = ds1.total_cells() + ds2.total_cells() <= options_.async_cell_threshold;
    if (inline_run) {
        s.matrix = align_session(s);
        s.state = DecisionState(*s.matrix, config.one_to_one);
        s.status = SessionStatus::ready;
    }
    persist(s);
    entry->session = s;
    {
        std::unique_lock lock(map_mutex_);
        sessions_[s.id] = entry;
    }
    if (!inline_run) {
        std::lock_guard lock(workers_mutex_);
        workers_.emplace_back([this, entry] { finish(entry); });
    }
    return s;
}

Session SessionStore::get(const std::string& id) const {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    return entry->session;
}

std::vector<Session> SessionStore::list() const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::shared_lock lock(map_mutex_);
        for (const auto& [id, e] : sessions_) entries.push_back(e);
    }
    std::vector<Session> out;
    for (const auto& e : entries) {
        std::lock_guard lock(e->mutex);
        out.push_back(e->session);
    }
    return out;
}

Session SessionStore::decide(const std::string& id, const DecisionEvent& event) {
    const auto entry = find(id);
    std::lock_guard lock(entry->mutex);
    Session next = entry->session;
    const auto& m = next.ready_matrix();
    next.state.apply(m, event);
    next.log.push_back(event);
    next.updated = now_utc();
    persist(next);
    entry->session = next;
    return next;
}

}  // namespace fieldalign::review
