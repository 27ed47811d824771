#include "fieldalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fieldalign/error.hpp"
#include "fieldalign/text.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::align, kind, msg);
}

void check_table(const CellScoreTable& t, std::string_view what) {
    if (t.groups.size() != t.columns.size()) {
        fail(ErrorKind::config, std::string(what) + ": column/group count mismatch");
    }
    for (std::size_t j = 0; j < t.groups.size(); ++j) {
        if (t.groups[j].empty()) {
            fail(ErrorKind::data, std::string(what) + ": column '" + t.columns[j] + "' has no cells");
        }
        for (const auto& p : t.groups[j]) {
            if (p.size() != t.classes.size()) {
                fail(ErrorKind::config, std::string(what) + ": probability vector length mismatch");
            }
        }
    }
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string grid_to_csv(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                        const std::vector<std::vector<double>>& values) {
    std::string out;
    for (const auto& c : cols) {
        out += ',';
        out += csv_field(c);
    }
    out += '\n';
    for (std::size_t j = 0; j < rows.size(); ++j) {
        out += csv_field(rows[j]);
        for (double v : values[j]) {
            out += ',';
            out += text::format_double(v);
        }
        out += '\n';
    }
    return out;
}

}  // namespace

std::string_view to_string(AggregationMethod m) noexcept {
    switch (m) {
        case AggregationMethod::arith: return "arith";
        case AggregationMethod::geom: return "geom";
        case AggregationMethod::geom_eps: return "geom_eps";
        case AggregationMethod::cosine_ratio: return "cosine_ratio";
        case AggregationMethod::sym1: return "sym1";
        case AggregationMethod::sym2: return "sym2";
    }
    return "?";
}

std::string_view to_string(Comparability c) noexcept {
    return c == Comparability::full ? "full" : "row_only";
}

AggregationMethod parse_aggregation_method(std::string_view s) {
    if (s == "arith") return AggregationMethod::arith;
    if (s == "geom") return AggregationMethod::geom;
    if (s == "geom_eps") return AggregationMethod::geom_eps;
    if (s == "cosine" || s == "cosine_ratio") return AggregationMethod::cosine_ratio;
    if (s == "sym1") return AggregationMethod::sym1;
    if (s == "sym2") return AggregationMethod::sym2;
    fail(ErrorKind::usage, "unknown aggregation method '" + std::string(s) +
                               "' (expected arith, geom, geom_eps, cosine, sym1 or sym2)");
}

std::size_t AlignmentMatrix::row_index(std::string_view name) const {
    const auto it = std::find(rows.begin(), rows.end(), name);
    if (it == rows.end()) fail(ErrorKind::lookup, "unknown matrix row '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - rows.begin());
}

std::size_t AlignmentMatrix::col_index(std::string_view name) const {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) fail(ErrorKind::lookup, "unknown matrix column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - cols.begin());
}

CellScoreTable score_cells(const Model& model, const DataSource& ds) {
    CellScoreTable t;
    t.classes = model_classes(model);
    t.columns = ds.column_names();
    t.groups.resize(ds.num_columns());
    for (std::size_t j = 0; j < ds.num_columns(); ++j) {
        const auto& cells = ds.column(j).cells;
        auto& group = t.groups[j];
        group.reserve(cells.size());
        for (const auto& cell : cells) group.push_back(predict(model, cell));
    }
    return t;
}

std::vector<std::vector<double>> mean_scores(const CellScoreTable& scores) {
    check_table(scores, "scores");
    const auto m = scores.classes.size();
    std::vector<std::vector<double>> r(scores.groups.size(), std::vector<double>(m, 0.0));
    for (std::size_t j = 0; j < scores.groups.size(); ++j) {
        for (const auto& p : scores.groups[j]) {
            for (std::size_t i = 0; i < m; ++i) r[j][i] += p[i];
        }
        const double n = static_cast<double>(scores.groups[j].size());
        for (auto& v : r[j]) v /= n;
    }
    return r;
}

AlignmentMatrix aggregate(const CellScoreTable& scores, AggregationMethod method,
                          const AggregateOptions& options) {
    check_table(scores, "scores");
    const auto m = scores.classes.size();
    AlignmentMatrix out;
    out.rows = scores.columns;
    out.cols = scores.classes;
    out.method = method;

    const auto arith = mean_scores(scores);

    switch (method) {
        case AggregationMethod::arith:
            out.values = arith;
            break;

        case AggregationMethod::geom:
        case AggregationMethod::geom_eps: {
            double eps = 0.0;
            if (method == AggregationMethod::geom_eps) {
                eps = options.epsilon.value_or(kDefaultGeomEpsilon);
                if (!(eps > 0.0) || !std::isfinite(eps)) {
                    fail(ErrorKind::config, "geom_eps needs a positive epsilon");
                }
                out.epsilon = eps;
            }
            out.values.assign(scores.groups.size(), std::vector<double>(m, 0.0));
            for (std::size_t j = 0; j < scores.groups.size(); ++j) {
                const auto& group = scores.groups[j];
                const double n = static_cast<double>(group.size());
                for (std::size_t i = 0; i < m; ++i) {
                    double log_sum = 0.0;
                    bool zero = false;
                    for (const auto& p : group) {
                        const double v = p[i] + eps;
                        if (v <= 0.0) {
                            zero = true;
                            break;
                        }
                        log_sum += std::log(v);
                    }
                    double g = zero ? 0.0 : std::exp(log_sum / n);
                    // rounding can push exp(mean log) a hair above the mean
                    if (method == AggregationMethod::geom) g = std::min(g, arith[j][i]);
                    out.values[j][i] = g;
                }
            }
            break;
        }

        case AggregationMethod::cosine_ratio: {
            if (options.self_scores == nullptr) {
                fail(ErrorKind::config, "cosine_ratio needs the training source's self-scores");
            }
            const auto& self = *options.self_scores;
            check_table(self, "self_scores");
            if (self.classes != scores.classes || self.columns.size() != m) {
                fail(ErrorKind::config, "self-scores do not match the scoring model's classes");
            }
            const auto self_r = mean_scores(self);
            std::vector<double> sizes(m);
            bool equal = true;
            for (std::size_t i = 0; i < m; ++i) {
                sizes[i] = static_cast<double>(self.groups[i].size());
                equal = equal && sizes[i] == sizes[0];
            }
            const double n_max = *std::max_element(sizes.begin(), sizes.end());
            std::vector<double> denom(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double rii = self_r[i][i];
                if (!(rii > 0.0)) {
                    fail(ErrorKind::numeric, "self-aggregate R(C,C) is zero for column '" +
                                                 scores.classes[i] + "'");
                }
                denom[i] = std::sqrt(rii);
                if (!equal) denom[i] *= std::sqrt(sizes[i]) / n_max;
            }
            out.values = arith;
            for (auto& row : out.values) {
                for (std::size_t i = 0; i < m; ++i) row[i] /= denom[i];
            }
            out.comparability = Comparability::row_only;
            break;
        }

        case AggregationMethod::sym1:
        case AggregationMethod::sym2:
            fail(ErrorKind::config, "symmetric methods are computed by align_sym1 / align_sym2");
    }
    return out;
}

namespace {

double symmetric_entry(double forward, double backward, double self1, double self2,
                       std::string_view c1, std::string_view c2) {
    if (!(self1 > 0.0)) {
        fail(ErrorKind::numeric, "self-aggregate is zero for column '" + std::string(c1) + "'");
    }
    if (!(self2 > 0.0)) {
        fail(ErrorKind::numeric, "self-aggregate is zero for column '" + std::string(c2) + "'");
    }
    return clip01(std::sqrt(forward * backward / (self1 * self2)));
}

}  // namespace

AlignmentMatrix align_sym1(const DataSource& ds1, const DataSource& ds2,
                           const TokenizationScheme& scheme, const TrainConfig& config) {
    FeatureDictionary dict;
    ExampleSet set;
    append_examples(set, ds1, scheme, dict, false, "DS1.");
    append_examples(set, ds2, scheme, dict, false, "DS2.");
    const auto model = train(set, std::move(dict), scheme, config);

    const auto r1 = mean_scores(score_cells(model, ds1));  // r1[i][c]: cells of C_i
    const auto r2 = mean_scores(score_cells(model, ds2));  // r2[j][c]: cells of C'_j
    const auto m1 = ds1.num_columns();

    AlignmentMatrix out;
    out.rows = ds2.column_names();
    out.cols = ds1.column_names();
    out.method = AggregationMethod::sym1;
    out.values.assign(ds2.num_columns(), std::vector<double>(m1));
    for (std::size_t j = 0; j < ds2.num_columns(); ++j) {
        for (std::size_t i = 0; i < m1; ++i) {
            out.values[j][i] = symmetric_entry(r2[j][i], r1[i][m1 + j], r1[i][i], r2[j][m1 + j],
                                               "DS1." + out.cols[i], "DS2." + out.rows[j]);
        }
    }
    return out;
}

AlignmentMatrix align_sym2(const DataSource& ds1, const DataSource& ds2,
                           const TokenizationScheme& scheme, const TrainConfig& config) {
    const auto model1 = train(ds1, scheme, config);
    const auto model2 = train(ds2, scheme, config);
    const auto r11 = mean_scores(score_cells(model1, ds1));  // [i][i']
    const auto r12 = mean_scores(score_cells(model1, ds2));  // [j][i]
    const auto r21 = mean_scores(score_cells(model2, ds1));  // [i][j]
    const auto r22 = mean_scores(score_cells(model2, ds2));  // [j][j']

    AlignmentMatrix out;
    out.rows = ds2.column_names();
    out.cols = ds1.column_names();
    out.method = AggregationMethod::sym2;
    out.values.assign(ds2.num_columns(), std::vector<double>(ds1.num_columns()));
    for (std::size_t j = 0; j < ds2.num_columns(); ++j) {
        for (std::size_t i = 0; i < ds1.num_columns(); ++i) {
            out.values[j][i] = symmetric_entry(r12[j][i], r21[i][j], r11[i][i], r22[j][j],
                                               "DS1." + out.cols[i], "DS2." + out.rows[j]);
        }
    }
    return out;
}

std::vector<std::size_t> rank_row(const std::vector<double>& row, const std::vector<bool>& allowed) {
    std::vector<std::size_t> idx;
    idx.reserve(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (allowed.empty() || allowed[i]) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    return idx;
}

std::vector<std::vector<Match>> best_matches(const AlignmentMatrix& m, std::size_t top_k) {
    if (top_k == 0) fail(ErrorKind::usage, "top_k must be at least 1");
    std::vector<std::vector<Match>> out(m.num_rows());
    for (std::size_t j = 0; j < m.num_rows(); ++j) {
        const auto order = rank_row(m.values[j]);
        const auto k = std::min(top_k, order.size());
        for (std::size_t r = 0; r < k; ++r) {
            out[j].push_back({order[r], m.cols[order[r]], m.values[j][order[r]]});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Profiles

FieldProfile field_profile(const Column& column) {
    FieldProfile p;
    p.column = column.name;
    double n1 = 0.0, n2 = 0.0;
    for (const auto& cell : column.cells) {
        const std::string_view s = is_nul(cell) ? std::string_view{} : std::string_view{cell};
        const auto cps = text::decode(s);
        p.lengths[cps.size()] += 1.0;
        for (std::size_t k = 0; k < cps.size(); ++k) {
            p.gram1[std::string(s.substr(cps[k].offset, cps[k].length))] += 1.0;
            n1 += 1.0;
            if (k + 1 < cps.size()) {
                p.gram2[std::string(s.substr(cps[k].offset, cps[k].length + cps[k + 1].length))] +=
                    1.0;
                n2 += 1.0;
            }
        }
    }
    for (auto& [k, v] : p.gram1) v /= n1;
    for (auto& [k, v] : p.gram2) v /= n2;
    const double n = static_cast<double>(column.cells.size());
    for (auto& [k, v] : p.lengths) v /= n;
    return p;
}

template <typename Key>
double jensen_shannon(const std::map<Key, double>& p, const std::map<Key, double>& q) {
    if (p.empty() && q.empty()) return 0.0;
    if (p.empty() || q.empty()) return std::log(2.0);
    double js = 0.0;
    auto term = [](double a, double mid) { return a > 0.0 ? a * std::log(a / mid) : 0.0; };
    auto i = p.begin();
    auto j = q.begin();
    while (i != p.end() || j != q.end()) {
        double a = 0.0, b = 0.0;
        if (j == q.end() || (i != p.end() && i->first < j->first)) {
            a = (i++)->second;
        } else if (i == p.end() || j->first < i->first) {
            b = (j++)->second;
        } else {
            a = (i++)->second;
            b = (j++)->second;
        }
        const double mid = 0.5 * (a + b);
        js += 0.5 * term(a, mid) + 0.5 * term(b, mid);
    }
    return std::clamp(js, 0.0, std::log(2.0));
}

template double jensen_shannon(const std::map<std::string, double>&,
                               const std::map<std::string, double>&);
template double jensen_shannon(const std::map<std::size_t, double>&,
                               const std::map<std::size_t, double>&);

double profile_distance(const FieldProfile& a, const FieldProfile& b) {
    return (jensen_shannon(a.gram1, b.gram1) + jensen_shannon(a.gram2, b.gram2) +
            jensen_shannon(a.lengths, b.lengths)) /
           3.0;
}

DistanceMatrix profile_distances(const DataSource& ds1, const DataSource& ds2) {
    std::vector<FieldProfile> p1, p2;
    for (const auto& c : ds1.columns()) p1.push_back(field_profile(c));
    for (const auto& c : ds2.columns()) p2.push_back(field_profile(c));
    DistanceMatrix out{ds2.column_names(), ds1.column_names(), {}};
    out.values.assign(p2.size(), std::vector<double>(p1.size()));
    for (std::size_t j = 0; j < p2.size(); ++j) {
        for (std::size_t i = 0; i < p1.size(); ++i) out.values[j][i] = profile_distance(p1[i], p2[j]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

std::string matrix_to_csv(const AlignmentMatrix& m) { return grid_to_csv(m.rows, m.cols, m.values); }

std::string matrix_to_csv(const DistanceMatrix& m) { return grid_to_csv(m.rows, m.cols, m.values); }

std::string matrix_to_json(const AlignmentMatrix& m) {
    nlohmann::json j;
    j["format"] = "fieldalign-matrix";
    j["version"] = 1;
    j["method"] = std::string(to_string(m.method));
    j["comparability"] = std::string(to_string(m.comparability));
    j["params"] = nlohmann::json::object();
    if (m.epsilon) j["params"]["epsilon"] = *m.epsilon;
    j["rows"] = m.rows;
    j["cols"] = m.cols;
    j["values"] = m.values;
    return j.dump(2) + "\n";
}

AlignmentMatrix matrix_from_json(std::string_view text) {
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format") != "fieldalign-matrix" || j.at("version") != 1) {
            fail(ErrorKind::parse, "not a version-1 matrix document");
        }
        AlignmentMatrix m;
        m.method = parse_aggregation_method(j.at("method").get<std::string>());
        const auto comp = j.at("comparability").get<std::string>();
        if (comp != "full" && comp != "row_only") fail(ErrorKind::parse, "bad comparability");
        m.comparability = comp == "full" ? Comparability::full : Comparability::row_only;
        if (j.at("params").contains("epsilon")) m.epsilon = j["params"]["epsilon"].get<double>();
        m.rows = j.at("rows").get<std::vector<std::string>>();
        m.cols = j.at("cols").get<std::vector<std::string>>();
        m.values = j.at("values").get<std::vector<std::vector<double>>>();
        if (m.values.size() != m.rows.size()) fail(ErrorKind::parse, "row count mismatch");
        for (const auto& r : m.values) {
            if (r.size() != m.cols.size()) fail(ErrorKind::parse, "column count mismatch");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("malformed matrix document: ") + e.what());
    }
}

std::string matrix_report(const AlignmentMatrix& m) {
    std::ostringstream out;
    out << "method: " << to_string(m.method) << "  comparability: " << to_string(m.comparability);
    if (m.epsilon) out << "  epsilon: " << text::format_double(*m.epsilon);
    out << '\n';
    if (m.comparability == Comparability::row_only) {
        out << "(values comparable within a row only)\n";
    }
    const auto best = best_matches(m, 3);
    char buf[64];
    for (std::size_t j = 0; j < m.num_rows(); ++j) {
        out << m.rows[j] << ':';
        for (const auto& match : best[j]) {
            std::snprintf(buf, sizeof buf, "%.1f", match.value * 100.0);
            out << "  " << match.name << " (" << buf << ')';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace fieldalign
