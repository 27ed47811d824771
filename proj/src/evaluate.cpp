#include "fieldalign/evaluate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fieldalign/error.hpp"
#include "fieldalign/ingest.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::evaluate, kind, msg);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

void GroundTruth::check_against(const AlignmentMatrix& m) const {
    for (const auto& [row, col] : mapping) {
        if (std::find(m.rows.begin(), m.rows.end(), row) == m.rows.end()) {
            fail(ErrorKind::lookup, "ground truth names unknown DS2 column '" + row + "'");
        }
        if (std::find(m.cols.begin(), m.cols.end(), col) == m.cols.end()) {
            fail(ErrorKind::lookup, "ground truth names unknown DS1 column '" + col + "'");
        }
    }
}

GroundTruth parse_ground_truth(std::string_view csv) {
    {
        auto body = csv;
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
        if (body.empty() || body == "ds2_column,ds1_column") fail(ErrorKind::config, "ground truth is empty");
    }
    // Reuse the table reader with a synthetic header so quoting rules match.
    std::string text = "ds2_column,ds1_column\n";
    text += csv;
    DataSource table;
    try {
        table = parse_table(text, "truth", TableFormat::csv, NulPolicy::empty_is_nul);
    } catch (const ParseError& e) {
        fail(ErrorKind::parse, std::string("ground truth: ") + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::data, std::string("ground truth: ") + e.what());
    }
    GroundTruth truth;
    const auto& ds2 = table.column(0).cells;
    const auto& ds1 = table.column(1).cells;
    for (std::size_t r = 0; r < ds2.size(); ++r) {
        if (r == 0 && ds2[r] == "ds2_column" && ds1[r] == "ds1_column") continue;
        if (is_nul(ds2[r]) || is_nul(ds1[r])) {
            fail(ErrorKind::parse, "ground truth row " + std::to_string(r + 1) + " has an empty name");
        }
        const auto [it, inserted] = truth.mapping.emplace(ds2[r], ds1[r]);
        if (!inserted) fail(ErrorKind::data, "ground truth lists '" + ds2[r] + "' twice");
    }
    if (truth.mapping.empty()) fail(ErrorKind::config, "ground truth is empty");
    return truth;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open ground truth '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ground_truth(buf.str());
}

std::string TopKReport::triple() const {
    std::string out;
    for (std::size_t n = 0; n < hits.size(); ++n) {
        if (n) out += '/';
        out += std::to_string(hits[n]);
    }
    return out;
}

TopKReport topk_score(const AlignmentMatrix& m, const GroundTruth& truth,
                      const std::vector<std::size_t>& ks) {
    if (truth.mapping.empty()) fail(ErrorKind::config, "ground truth is empty");
    if (ks.empty()) fail(ErrorKind::usage, "no k values given");
    truth.check_against(m);

    TopKReport report;
    report.ks = ks;
    report.hits.assign(ks.size(), 0);
    for (std::size_t j = 0; j < m.num_rows(); ++j) {
        const auto it = truth.mapping.find(m.rows[j]);
        if (it == truth.mapping.end()) {
            report.skipped_rows.push_back(m.rows[j]);
            continue;
        }
        ++report.total;
        const auto target = m.col_index(it->second);
        const auto order = rank_row(m.values[j]);
        const auto rank = static_cast<std::size_t>(
            std::find(order.begin(), order.end(), target) - order.begin());
        for (std::size_t n = 0; n < ks.size(); ++n) {
            if (rank < ks[n]) ++report.hits[n];
        }
    }
    if (report.total == 0) fail(ErrorKind::config, "ground truth covers no matrix row");
    return report;
}

namespace {

bool strict_argmax(const ProbabilityVector& p, std::size_t target) {
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (c != target && p[c] >= p[target]) return false;
    }
    return true;
}

}  // namespace

Likelihood self_likelihood(const Model& model, const ExampleSet& examples) {
    const auto& classes = model_classes(model);
    std::vector<std::size_t> remap(examples.classes.size());
    for (std::size_t c = 0; c < examples.classes.size(); ++c) {
        const auto it = std::find(classes.begin(), classes.end(), examples.classes[c]);
        if (it == classes.end()) {
            fail(ErrorKind::lookup, "label '" + examples.classes[c] + "' is not a model class");
        }
        remap[c] = static_cast<std::size_t>(it - classes.begin());
    }
    if (examples.examples.empty()) fail(ErrorKind::data, "no examples");
    Likelihood out;
    out.unambiguous = true;
    for (const auto& ex : examples.examples) {
        const auto p = predict(model, ex.vector);
        const auto target = remap.at(ex.label);
        out.lin += p[target];
        out.log += std::log(p[target]);
        out.unambiguous = out.unambiguous && strict_argmax(p, target);
    }
    const double n = static_cast<double>(examples.examples.size());
    out.lin /= n;
    out.log /= n;
    return out;
}

Likelihood self_likelihood(const Model& model, const DataSource& ds,
                           std::string_view label_prefix) {
    const auto scores = score_cells(model, ds);
    std::vector<std::optional<std::size_t>> targets;
    for (const auto& col : ds.columns()) {
        const auto name = std::string(label_prefix) + col.name;
        const auto it = std::find(scores.classes.begin(), scores.classes.end(), name);
        if (it == scores.classes.end()) {
            fail(ErrorKind::lookup, "label '" + name + "' is not a model class");
        }
        targets.emplace_back(static_cast<std::size_t>(it - scores.classes.begin()));
    }
    return score_likelihood(scores, targets);
}

Likelihood score_likelihood(const CellScoreTable& scores,
                            const std::vector<std::optional<std::size_t>>& targets) {
    if (targets.size() != scores.groups.size()) {
        fail(ErrorKind::config, "one target per scored column expected");
    }
    Likelihood out;
    out.unambiguous = true;
    double n = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
        if (!targets[j]) continue;
        const auto t = *targets[j];
        if (t >= scores.classes.size()) fail(ErrorKind::lookup, "target class out of range");
        for (const auto& p : scores.groups[j]) {
            out.lin += p[t];
            out.log += std::log(p[t]);
            out.unambiguous = out.unambiguous && strict_argmax(p, t);
            n += 1.0;
        }
    }
    if (n == 0.0) fail(ErrorKind::config, "no scored column has a target");
    out.lin /= n;
    out.log /= n;
    return out;
}

std::string_view to_string(MatchingMode m) noexcept {
    return m == MatchingMode::sum ? "sum" : "log_product";
}

MatchingAssignment one_to_one_matching(const std::vector<std::vector<double>>& values,
                                       MatchingMode mode,
                                       const std::vector<std::vector<bool>>& forbidden,
                                       const std::vector<std::string>& row_names) {
    const std::size_t n = values.size();
    MatchingAssignment out;
    out.mode = mode;
    if (n == 0) return out;
    const std::size_t m = values[0].size();
    for (const auto& r : values) {
        if (r.size() != m) fail(ErrorKind::config, "ragged matrix");
    }
    if (n > m) {
        fail(ErrorKind::infeasible, "cannot match " + std::to_string(n) + " rows one-to-one into " +
                                        std::to_string(m) + " columns");
    }
    auto row_label = [&](std::size_t r) {
        return r < row_names.size() ? "'" + row_names[r] + "'" : std::to_string(r);
    };

    // cost[r][c], +inf where the pair is unusable
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (std::size_t r = 0; r < n; ++r) {
        bool any = false;
        for (std::size_t c = 0; c < m; ++c) {
            const bool banned = !forbidden.empty() && forbidden[r][c];
            const double v = values[r][c];
            if (banned || (mode == MatchingMode::log_product && !(v > 0.0))) {
                cost[r][c] = kInf;
            } else {
                cost[r][c] = mode == MatchingMode::sum ? -v : -std::log(v);
                any = true;
            }
        }
        if (!any) fail(ErrorKind::infeasible, "row " + row_label(r) + " has no admissible column");
    }

    // Shortest augmenting path Hungarian method, O(n^2 m). 1-based with a
    // virtual column 0.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 == 0 || !std::isfinite(delta)) {
                fail(ErrorKind::infeasible, "no one-to-one assignment avoids the excluded pairs "
                                            "(stuck at row " + row_label(i - 1) + ")");
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    out.col_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) out.col_of_row[p[j] - 1] = j - 1;
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double val = values[r][out.col_of_row[r]];
        out.objective += mode == MatchingMode::sum ? val : std::log(val);
    }
    return out;
}

MatchingAssignment one_to_one_matching(const AlignmentMatrix& m, MatchingMode mode) {
    return one_to_one_matching(m.values, mode, {}, m.rows);
}

ConfidenceReport l1_confidence(const AlignmentMatrix& m, bool one_to_one) {
    ConfidenceReport report;
    report.one_to_one = one_to_one;
    if (m.num_rows() == 0 || m.num_cols() == 0) fail(ErrorKind::data, "empty matrix");

    auto h = m.values;
    if (m.method != AggregationMethod::arith) {
        report.normalized = true;
        for (auto& row : h) {
            double s = 0.0;
            for (double x : row) s += x;
            for (auto& x : row) x = s > 0.0 ? x / s : 1.0 / static_cast<double>(row.size());
        }
    }

    if (one_to_one) {
        if (m.num_rows() > m.num_cols()) {
            fail(ErrorKind::infeasible, "one-to-one confidence needs rows <= columns (" +
                                            std::to_string(m.num_rows()) + " > " +
                                            std::to_string(m.num_cols()) + ")");
        }
        auto matching = one_to_one_matching(h, MatchingMode::sum, {}, m.rows);
        report.assignment = matching.col_of_row;
        report.matching = std::move(matching);
    } else {
        for (const auto& row : h) report.assignment.push_back(rank_row(row).front());
    }

    for (std::size_t j = 0; j < h.size(); ++j) {
        for (std::size_t i = 0; i < h[j].size(); ++i) {
            const double q = report.assignment[j] == i ? 1.0 : 0.0;
            report.l1_to_assignment += std::abs(q - h[j][i]);
        }
        const double sel = h[j][report.assignment[j]];
        report.lin_lik += sel;
        report.log_lik += std::log(sel);
    }
    report.lin_lik /= static_cast<double>(h.size());
    report.log_lik /= static_cast<double>(h.size());
    return report;
}

std::string evaluation_to_json(const AlignmentMatrix& m, const std::optional<TopKReport>& topk,
                               const std::optional<ConfidenceReport>& confidence) {
    nlohmann::json j;
    j["format"] = "fieldalign-evaluation";
    j["version"] = 1;
    j["method"] = std::string(to_string(m.method));
    j["comparability"] = std::string(to_string(m.comparability));
    if (topk) {
        j["topk"] = {{"ks", topk->ks},
                     {"hits", topk->hits},
                     {"total", topk->total},
                     {"triple", topk->triple()},
                     {"skipped_rows", topk->skipped_rows}};
    }
    if (confidence) {
        nlohmann::json assignment = nlohmann::json::object();
        for (std::size_t r = 0; r < confidence->assignment.size(); ++r) {
            assignment[m.rows[r]] = m.cols[confidence->assignment[r]];
        }
        j["confidence"] = {{"l1_to_assignment", confidence->l1_to_assignment},
                           {"one_to_one", confidence->one_to_one},
                           {"normalized", confidence->normalized},
                           {"lin_lik", finite_or_null(confidence->lin_lik)},
                           {"log_lik", finite_or_null(confidence->log_lik)},
                           {"assignment", assignment}};
        if (confidence->matching) {
            j["confidence"]["matching_objective"] = finite_or_null(confidence->matching->objective);
        }
    }
    return j.dump(2) + "\n";
}

}  // namespace fieldalign
