#include <httplib.h>

#include <barrier>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "fieldalign/cli.hpp"
#include "fieldalign/pipeline.hpp"
#include "fieldalign/review.hpp"
#include "fieldalign/review_http.hpp"
#include "oracles.hpp"

using namespace fieldalign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double limit_seconds;  // 0: no runtime bound
    std::function<Outcome()> check;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("fieldalign-acceptance-" + std::to_string(::getpid())) / tag;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

GroundTruth identity_truth(const DataSource& ds) {
    GroundTruth t;
    for (const auto& c : ds.columns()) t.mapping[c.name] = c.name;
    return t;
}

TrainConfig asd(double eps) {
    TrainConfig c;
    c.method = TrainMethod::asd;
    c.epsilon = eps;
    return c;
}

// ---------------------------------------------------------------------------

Outcome bayesian_recovery() {
    const auto ds = oracle::assumption1_source(8, 200, 7);
    const auto expect = oracle::bayes_by_counting(ds);
    const auto model = train(ds, TokenizationScheme::parse("e1-w1-g0"), asd(1e-8));
    double worst = 0.0;
    std::size_t interior = 0;
    for (const auto& [value, p] : expect) {
        const auto q = predict(model, value);
        for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - q[i]));
        if (*std::max_element(p.begin(), p.end()) < 1.0) ++interior;
    }
    return {worst < 0.02, std::to_string(expect.size()) + " values (" + std::to_string(interior) +
                              " shared), max |P - oracle| = " + fmt("%.2e", worst)};
}

Outcome gradient_check() {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ExampleSet ex;
    ex.classes = {"a", "b", "c"};
    for (int n = 0; n < 24; ++n) {
        FeatureVector v;
        for (FeatureId f = 0; f < 5; ++f) {
            if (rng() % 3) v.entries.push_back({f, static_cast<double>(1 + rng() % 3)});
        }
        ex.examples.push_back({v, static_cast<std::size_t>(rng() % 3)});
    }
    std::vector<double> w(15);
    for (auto& x : w) x = u(rng);
    const double l2 = 0.05;
    std::vector<double> analytic(w.size());
    plrm::evaluate(ex, w, 3, l2, analytic);
    const auto numeric = oracle::numeric_gradient(
        [&](const std::vector<double>& x) { return plrm::evaluate(ex, x, 3, l2, {}).value; }, w, 1e-5);
    double worst = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double scale = std::max({std::abs(analytic[k]), std::abs(numeric[k]), 1e-6});
        worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / scale);
    }
    return {worst < 1e-4, "3 classes x 5 features, max relative error " + fmt("%.2e", worst)};
}

Outcome aggregation_algebra() {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t violations = 0, zero_cases = 0, entries = 0;
    double worst_sum = 0.0;
    for (int t = 0; t < 100; ++t) {
        CellScoreTable s;
        const auto m = 2 + rng() % 7, cols = 1 + rng() % 6;
        const bool sparse = t % 2 == 1;
        for (std::size_t i = 0; i < m; ++i) s.classes.push_back("c" + std::to_string(i));
        for (std::size_t j = 0; j < cols; ++j) {
            s.columns.push_back("d" + std::to_string(j));
            std::vector<ProbabilityVector> group(1 + rng() % 30);
            for (auto& p : group) {
                p.resize(m);
                double total = 0.0;
                for (auto& x : p) total += (x = sparse && rng() % 25 == 0 ? 0.0 : u(rng) + 1e-9);
                if (total == 0.0) p[rng() % m] = total = 1.0;
                for (auto& x : p) x /= total;
            }
            s.groups.push_back(std::move(group));
        }
        const auto arith = aggregate(s, AggregationMethod::arith);
        const auto geom = aggregate(s, AggregationMethod::geom);
        const auto geps = aggregate(s, AggregationMethod::geom_eps);
        for (std::size_t j = 0; j < cols; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                ++entries;
                sum += arith.values[j][i];
                if (geom.values[j][i] > arith.values[j][i]) ++violations;
                if (geps.values[j][i] < geom.values[j][i]) ++violations;
                bool any_zero = false;
                for (const auto& p : s.groups[j]) any_zero = any_zero || p[i] == 0.0;
                if (any_zero) {
                    ++zero_cases;
                    if (geom.values[j][i] != 0.0) ++violations;
                }
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
    }
    return {violations == 0 && worst_sum <= 1e-6,
            "100 tables, " + std::to_string(entries) + " entries (" + std::to_string(zero_cases) +
                " with a zero cell), row-sum error " + fmt("%.1e", worst_sum) + ", " +
                std::to_string(violations) + " order violations"};
}

Outcome unequal_size() {
    std::mt19937_64 rng(5);
    auto draw = [&](const std::string& prefix, std::size_t n) {
        std::vector<std::string> v;
        for (std::size_t k = 0; k < n; ++k) {
            const auto r = rng() % 10;
            v.push_back(r < 8 ? prefix + std::to_string(rng() % 9) : "shared" + std::to_string(rng() % 2));
        }
        return v;
    };
    auto half = draw("a", 100);
    auto full = half;
    full.insert(full.end(), half.begin(), half.end());  // identical composition, twice the cells
    const DataSource ds1("ds1", {{"A", full}, {"A_half", half}, {"B", draw("b", 200)}, {"C", draw("c", 200)}});
    const DataSource ds2("ds2", {{"X", draw("a", 150)}, {"Y", draw("b", 150)}});

    const auto scored = score_pair(ds1, ds2, TokenizationScheme::parse("e1-w1-g0"), asd(1e-8), true);
    const auto r = aggregate(scored.test_scores, AggregationMethod::arith);
    AggregateOptions opts;
    opts.self_scores = &*scored.self_scores;
    const auto s = aggregate(scored.test_scores, AggregationMethod::cosine_ratio, opts);
    const auto x = r.row_index("X");
    const auto a = r.col_index("A"), l = r.col_index("A_half");
    const double ratio = r.values[x][l] / r.values[x][a];
    const double diff = std::abs(s.values[x][l] - s.values[x][a]);
    return {std::abs(ratio - 0.5) <= 0.02 && diff <= 0.02,
            "f(A_half)/f(A) = " + fmt("%.4f", ratio) + ", s(A) = " + fmt("%.4f", s.values[x][a]) +
                ", s(A_half) = " + fmt("%.4f", s.values[x][l])};
}

Outcome symmetric_methods() {
    auto cols = oracle::experiment_columns(60, 17);
    cols.resize(6);
    const DataSource ds("six", cols);
    const auto scheme = TokenizationScheme::parse("e1-w1-g2");
    std::string detail;
    bool ok = true;
    for (const auto method : {AggregationMethod::sym1, AggregationMethod::sym2}) {
        const auto m = method == AggregationMethod::sym1 ? align_sym1(ds, ds, scheme, asd(1e-8))
                                                         : align_sym2(ds, ds, scheme, asd(1e-8));
        double asym = 0.0, diag = 0.0;
        bool in_range = true;
        for (std::size_t i = 0; i < 6; ++i) {
            diag = std::max(diag, std::abs(m.values[i][i] - 1.0));
            for (std::size_t j = 0; j < 6; ++j) {
                asym = std::max(asym, std::abs(m.values[i][j] - m.values[j][i]));
                in_range = in_range && m.values[i][j] >= 0.0 && m.values[i][j] <= 1.0;
            }
        }
        ok = ok && asym <= 1e-6 && diag <= 1e-6 && in_range;
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(method)) +
                  ": asymmetry " + fmt("%.1e", asym) + ", diagonal error " + fmt("%.1e", diag);
    }
    return {ok, detail};
}

Outcome matching_oracle() {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int mismatches = 0;
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        oracle::Grid v(6, std::vector<double>(6));
        for (auto& row : v) {
            for (auto& x : row) x = (t % 5 == 4 && rng() % 6 == 0) ? 0.0 : u(rng);
        }
        for (const auto mode : {MatchingMode::sum, MatchingMode::log_product}) {
            const auto brute = oracle::brute_force_matching(v, mode == MatchingMode::log_product);
            const auto got = one_to_one_matching(v, mode);
            double recomputed = 0.0;
            std::vector<bool> used(6, false);
            for (std::size_t r = 0; r < 6; ++r) {
                const double x = v[r][got.col_of_row[r]];
                recomputed += mode == MatchingMode::sum ? x : std::log(x);
                if (used[got.col_of_row[r]]) ++mismatches;
                used[got.col_of_row[r]] = true;
            }
            const double err = std::max(std::abs(recomputed - brute.objective),
                                        std::abs(got.objective - brute.objective));
            worst = std::max(worst, err);
            if (err > 1e-9) ++mismatches;
        }
    }
    return {mismatches == 0, "50 matrices x 2 modes, max objective gap " + fmt("%.1e", worst)};
}

Outcome l1_confidence_closed_form() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        AlignmentMatrix m;
        const auto cols = 2 + rng() % 7, rows = 1 + rng() % cols;
        for (std::size_t i = 0; i < cols; ++i) m.cols.push_back("c" + std::to_string(i));
        double expect = 0.0;
        for (std::size_t j = 0; j < rows; ++j) {
            m.rows.push_back("r" + std::to_string(j));
            std::vector<double> row(cols);
            double total = 0.0;
            for (auto& x : row) total += (x = u(rng));
            for (auto& x : row) x /= total;
            expect += 2.0 * (1.0 - *std::max_element(row.begin(), row.end()));
            m.values.push_back(row);
        }
        worst = std::max(worst, std::abs(l1_confidence(m, false).l1_to_assignment - expect));
    }
    AlignmentMatrix perm;
    perm.rows = perm.cols = {"a", "b", "c", "d"};
    perm.values = {{0, 0, 1, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}, {0, 1, 0, 0}};
    AlignmentMatrix uniform = perm;
    uniform.values.assign(4, std::vector<double>(4, 0.25));
    const double p = l1_confidence(perm, false).l1_to_assignment;
    const double p11 = l1_confidence(perm, true).l1_to_assignment;
    const double q = l1_confidence(uniform, false).l1_to_assignment;
    const bool ok = worst <= 1e-9 && p == 0.0 && p11 == 0.0 && std::abs(q - 6.0) <= 1e-9;
    return {ok, "closed-form gap " + fmt("%.1e", worst) + ", permutation " + fmt("%g", p) +
                    ", uniform 4x4 " + fmt("%.12g", q)};
}

Outcome end_to_end() {
    const auto e = oracle::march_april(300, 2011);
    const auto scheme = TokenizationScheme::parse("e1-w1-g2");
    const auto cfg = asd(1e-8);
    const auto truth = identity_truth(e.march);
    std::string detail;
    bool ok = true;

    const auto model = train(e.march, scheme, cfg);
    const auto self_scores = score_cells(model, e.march);
    AggregateOptions opts;
    opts.self_scores = &self_scores;
    const auto self_cos = topk_score(aggregate(self_scores, AggregationMethod::cosine_ratio, opts), truth);
    const auto self_sym1 = topk_score(align_sym1(e.march, e.march, scheme, cfg), truth);
    const auto self_sym2 = topk_score(align_sym2(e.march, e.march, scheme, cfg), truth);
    for (const auto* r : {&self_cos, &self_sym1, &self_sym2}) ok = ok && r->triple() == "12/12/12";
    detail += "self: cosine " + self_cos.triple() + ", sym1 " + self_sym1.triple() + ", sym2 " +
              self_sym2.triple();

    const auto cross = score_cells(model, e.april);
    const auto arith = topk_score(aggregate(cross, AggregationMethod::arith), truth);
    const auto geom = topk_score(aggregate(cross, AggregationMethod::geom), truth);
    ok = ok && geom.hits[0] >= 10 && geom.hits[0] >= arith.hits[0];
    detail += "; march->april: geom " + geom.triple() + ", arith " + arith.triple();
    return {ok, detail};
}

Outcome epsilon_sweep() {
    const auto e = oracle::march_april(300, 2011);
    const auto scheme = TokenizationScheme::parse("e1-w1-g2");
    double prev = -std::numeric_limits<double>::infinity();
    bool ok = true;
    std::string detail;
    for (const double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
        const auto model = std::get<PlrmModel>(train(e.march, scheme, asd(eps)));
        const double ll = model.meta().log_likelihood;
        ok = ok && ll >= prev;
        prev = ll;
        detail += std::string(detail.empty() ? "" : " ") + fmt("%.0e:", eps) + fmt("%.5f", ll);
    }
    return {ok, "log-likelihood " + detail};
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"fieldalign"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome cli_determinism() {
    const auto dir = scratch("cli");
    const auto e = oracle::march_april(120, 99);
    std::ofstream(dir / "march.csv") << oracle::to_csv(e.march);
    std::ofstream(dir / "april.csv") << oracle::to_csv(e.april);
    const std::string m = (dir / "march.csv").string(), a = (dir / "april.csv").string();

    std::vector<std::vector<std::string>> runs = {
        {"align", "--train", m, "--test", a, "--classifier", "sgd:0.05:40", "--shuffle", "--seed", "42",
         "--agg", "arith,geom,geom_eps,cosine"},
        {"align", "--train", m, "--test", a, "--classifier", "asd:1e-6", "--agg", "arith,geom"},
        {"align", "--train", m, "--test", a, "--classifier", "knn:3", "--agg", "arith"},
        {"sym1", m, a, "--classifier", "asd:1e-6"},
        {"sym2", m, a, "--classifier", "sgd:0.05:30", "--shuffle", "--seed", "7"},
    };
    std::size_t files = 0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        std::vector<fs::path> outs;
        for (int rep = 0; rep < 2; ++rep) {
            outs.push_back(dir / ("run" + std::to_string(r) + "_" + std::to_string(rep)));
            auto args = runs[r];
            args.insert(args.end(), {"--out", outs.back().string()});
            if (run_cli(args) != 0) return {false, "run " + std::to_string(r) + " failed"};
        }
        for (const auto& f : fs::directory_iterator(outs[0])) {
            const auto name = f.path().filename().string();
            if (name.find(".matrix.") == std::string::npos) continue;
            ++files;
            if (slurp(f.path()) != slurp(outs[1] / name)) return {false, "differs: " + name};
        }
    }
#ifdef FIELDALIGN_CLI_PATH
    for (int rep = 0; rep < 2; ++rep) {
        const auto cmd = std::string(FIELDALIGN_CLI_PATH) + " align --train '" + m + "' --test '" + a +
                         "' --classifier sgd:0.05:40 --shuffle --seed 3 --agg geom --out '" +
                         (dir / ("exe" + std::to_string(rep))).string() + "' > /dev/null";
        if (std::system(cmd.c_str()) != 0) return {false, "executable run failed"};
    }
    ++files;
    if (slurp(dir / "exe0" / "geom.matrix.csv") != slurp(dir / "exe1" / "geom.matrix.csv")) {
        return {false, "executable output differs"};
    }
#endif
    return {true, std::to_string(files) + " matrix files byte-identical across repeated runs"};
}

Outcome service_replay() {
    const auto dir = scratch("service");
    auto cols = oracle::experiment_columns(80, 5);
    cols.resize(7);
    const DataSource full("full", cols);
    std::vector<fieldalign::Column> ds2cols(cols.begin(), cols.begin() + 6);
    std::reverse(ds2cols.begin(), ds2cols.end());
    const auto ds1_text = oracle::to_csv(full), ds2_text = oracle::to_csv(DataSource("part", ds2cols));

    review::SessionConfig cfg;
    cfg.classifier = asd(1e-6);
    std::string id;
    review::Session before;
    std::size_t applied = 0, refused = 0, checks = 0;
    {
        review::SessionStore store(dir / "sessions");
        id = store.create("march", ds1_text, "april", ds2_text, cfg).id;
        std::mt19937_64 rng(8);
        const auto s0 = store.get(id);
        const auto& m = s0.ready_matrix();
        for (int step = 0; step < 300; ++step) {
            review::DecisionEvent e;
            e.row = m.rows[rng() % m.num_rows()];
            const auto a = rng() % 10;
            e.action = a < 5 ? review::Action::accept : a < 8 ? review::Action::reject : review::Action::clear;
            if (e.action != review::Action::clear) e.col = m.cols[rng() % m.num_cols()];
            try {
                const auto s = store.decide(id, e);
                ++applied;
                ++checks;
                if (!(review::replay(m, cfg.one_to_one, s.log) == s.state)) {
                    return {false, "replay diverged at step " + std::to_string(step)};
                }
            } catch (const Error& err) {
                if (err.kind() != ErrorKind::conflict) throw;
                ++refused;
            }
        }
        before = store.get(id);
    }
    {
        review::SessionStore reloaded(dir / "sessions");
        const auto after = reloaded.get(id);
        if (!(after.state == before.state) || !(after.log == before.log) ||
            review::export_mapping(after, review::ExportFormat::structured) !=
                review::export_mapping(before, review::ExportFormat::structured)) {
            return {false, "state reloaded from disk differs from the live session"};
        }
    }

    // Racing accepts of one column from different rows, in-process and over HTTP.
    review::SessionStore store(dir / "race");
    const auto s = store.create("march", ds1_text, "april", ds2_text, cfg);
    const auto& m = s.ready_matrix();
    const std::size_t threads = 6;
    int bad_rounds = 0;
    for (std::size_t round = 0; round < 10; ++round) {
        const auto col = m.cols[round % m.num_cols()];
        std::atomic<int> ok{0}, conflict{0};
        std::barrier sync(static_cast<std::ptrdiff_t>(threads));
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                sync.arrive_and_wait();
                try {
                    store.decide(s.id, {m.rows[t], review::Action::accept, col});
                    ++ok;
                } catch (const Error& e) {
                    if (e.kind() == ErrorKind::conflict) ++conflict;
                }
            });
        }
        for (auto& th : pool) th.join();
        if (ok != 1 || conflict != static_cast<int>(threads) - 1) ++bad_rounds;
        for (std::size_t t = 0; t < threads; ++t) store.decide(s.id, {m.rows[t], review::Action::clear, ""});
    }

    httplib::Server server;
    review::install_routes(server, store);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    int http_bad = 0;
    for (std::size_t round = 0; round < 5; ++round) {
        const auto col = m.cols[(round + 2) % m.num_cols()];
        std::atomic<int> ok{0}, conflict{0};
        std::barrier sync(static_cast<std::ptrdiff_t>(threads));
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                httplib::Client cli("127.0.0.1", port);
                const std::string body = R"({"row":")" + m.rows[t] + R"(","action":"accept","col":")" + col + "\"}";
                sync.arrive_and_wait();
                const auto res = cli.Post("/v1/sessions/" + s.id + "/decisions", body, "application/json");
                if (res && res->status == 200) ++ok;
                else if (res && res->status == 409) ++conflict;
            });
        }
        for (auto& th : pool) th.join();
        if (ok != 1 || conflict != static_cast<int>(threads) - 1) ++http_bad;
        for (std::size_t t = 0; t < threads; ++t) store.decide(s.id, {m.rows[t], review::Action::clear, ""});
    }
    server.stop();
    listener.join();

    const auto final_state = store.get(s.id);
    const bool consistent = review::replay(m, true, final_state.log) == final_state.state;
    return {bad_rounds == 0 && http_bad == 0 && consistent,
            std::to_string(checks) + " replay checks (" + std::to_string(applied) + " applied, " +
                std::to_string(refused) + " refused), reload identical; races: " +
                std::to_string(10 - bad_rounds) + "/10 in-process and " + std::to_string(5 - http_bad) +
                "/5 over HTTP with exactly one winner"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"bayesian-recovery", 30, bayesian_recovery},
        {"gradient-correctness", 1, gradient_check},
        {"aggregation-algebra", 5, aggregation_algebra},
        {"unequal-size-proportionality", 0, unequal_size},
        {"symmetric-method-properties", 60, symmetric_methods},
        {"matching-oracle", 10, matching_oracle},
        {"l1-confidence-closed-form", 0, l1_confidence_closed_form},
        {"end-to-end-experiment", 120, end_to_end},
        {"epsilon-sweep-monotonicity", 0, epsilon_sweep},
        {"cli-determinism", 0, cli_determinism},
        {"service-replay-consistency", 0, service_replay},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " ["
                  << fmt("%.2fs", secs)
                  << (c.limit_seconds > 0 ? " / limit " + fmt("%gs", c.limit_seconds) : std::string())
                  << (in_time ? "" : ", over time limit") << "]" << std::endl;
    }
    fs::remove_all(fs::temp_directory_path() / ("fieldalign-acceptance-" + std::to_string(::getpid())));
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
