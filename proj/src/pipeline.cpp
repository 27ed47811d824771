#include "fieldalign/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

#include "fieldalign/text.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::cli, kind, msg);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

DataSource load_source(const RunConfig& cfg, const std::filesystem::path& path) {
    auto ds = load_table(path, cfg.format, cfg.nul_policy);
    if (cfg.sample) ds = sample_rows(ds, cfg.sample->first, cfg.sample->second);
    return ds;
}

std::string describe(const DataSource& ds) {
    return ds.name() + " (" + std::to_string(ds.num_columns()) + " columns, " +
           std::to_string(ds.total_cells()) + " cells)";
}

std::string describe_training(const Model& model) {
    if (const auto* plrm = std::get_if<PlrmModel>(&model)) {
        const auto& meta = plrm->meta();
        std::string out = "model: " + meta.method + ", " + std::to_string(plrm->num_classes()) +
                          " classes, " + std::to_string(plrm->dimension()) +
                          " features, objective " + text::format_double(meta.objective) +
                          ", log-likelihood " + text::format_double(meta.log_likelihood) + ", " +
                          std::to_string(meta.iterations) + " iterations";
        if (!meta.converged) out += " (warning: " + meta.warning + ")";
        return out + "\n";
    }
    const auto& knn = std::get<KnnModel>(model);
    return "model: knn, k=" + std::to_string(knn.k()) + ", " +
           std::to_string(knn.classes().size()) + " classes\n";
}

class Writer {
public:
    Writer(const std::filesystem::path& dir, RunResult& result) : dir_(dir), result_(result) {}

    void write(const std::string& name, std::string_view contents) {
        const auto path = dir_ / name;
        write_file_atomic(path, contents);
        result_.written.push_back(path);
    }

private:
    std::filesystem::path dir_;
    RunResult& result_;
};

void emit_matrix(const RunConfig& cfg, const AlignmentMatrix& m,
                 const std::optional<GroundTruth>& truth, Writer& out, std::ostringstream& report) {
    const std::string stem(to_string(m.method));
    out.write(stem + ".matrix.csv", matrix_to_csv(m));
    out.write(stem + ".matrix.json", matrix_to_json(m));
    report << '\n' << matrix_report(m);

    std::optional<TopKReport> topk;
    std::optional<ConfidenceReport> confidence;
    if (truth) {
        topk = topk_score(m, *truth);
        report << "top-1/2/3 " << stem << ": " << topk->triple() << " of " << topk->total << '\n';
    }
    if (cfg.confidence) {
        confidence = l1_confidence(m, cfg.one_to_one);
        report << "confidence " << stem << ": |Q-H|_1 = "
               << text::format_double(confidence->l1_to_assignment)
               << (confidence->one_to_one ? " (one-to-one)" : "")
               << (confidence->normalized ? " (rows normalized)" : "") << ", lin-lik "
               << text::format_double(confidence->lin_lik) << '\n';
    }
    if (topk || confidence) out.write(stem + ".eval.json", evaluation_to_json(m, topk, confidence));
}

}  // namespace

std::string_view to_string(Command c) noexcept {
    switch (c) {
        case Command::align: return "align";
        case Command::sym1: return "sym1";
        case Command::sym2: return "sym2";
        case Command::eval: return "eval";
        case Command::profile: return "profile";
    }
    return "?";
}

ScoredAlignment score_pair(const DataSource& train_ds, const DataSource& test,
                           const TokenizationScheme& scheme, const TrainConfig& classifier,
                           bool want_self_scores) {
    auto model = train(train_ds, scheme, classifier);
    auto test_scores = score_cells(model, test);
    std::optional<CellScoreTable> self;
    if (want_self_scores) self = score_cells(model, train_ds);
    return {std::move(model), std::move(test_scores), std::move(self)};
}

AlignmentMatrix compute_alignment(const DataSource& ds1, const DataSource& ds2,
                                  const AlignmentSpec& spec) {
    switch (spec.method) {
        case AggregationMethod::sym1:
            return align_sym1(ds1, ds2, spec.scheme, spec.classifier);
        case AggregationMethod::sym2:
            return align_sym2(ds1, ds2, spec.scheme, spec.classifier);
        default: {
            const bool cosine = spec.method == AggregationMethod::cosine_ratio;
            const auto scored = score_pair(ds1, ds2, spec.scheme, spec.classifier, cosine);
            AggregateOptions opts;
            opts.epsilon = spec.epsilon;
            if (scored.self_scores) opts.self_scores = &*scored.self_scores;
            return aggregate(scored.test_scores, spec.method, opts);
        }
    }
}

RunResult run(const RunConfig& cfg) {
    RunResult result;
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory '" + cfg.out_dir.string() + "'");
    Writer out(cfg.out_dir, result);
    std::ostringstream report;

    std::optional<GroundTruth> truth;
    if (cfg.truth) truth = load_ground_truth(*cfg.truth);

    switch (cfg.command) {
        case Command::align: {
            const auto scheme = TokenizationScheme::parse(cfg.scheme);
            bool cosine = false;
            for (const auto m : cfg.methods) {
                if (m == AggregationMethod::sym1 || m == AggregationMethod::sym2) {
                    fail(ErrorKind::usage, "symmetric methods have their own subcommands (sym1, sym2)");
                }
                cosine = cosine || m == AggregationMethod::cosine_ratio;
            }
            const auto ds1 = load_source(cfg, cfg.first);
            const auto ds2 = load_source(cfg, cfg.second);
            const auto scored = score_pair(ds1, ds2, scheme, cfg.classifier, cosine);
            report << "train: " << describe(ds1) << "\ntest: " << describe(ds2)
                   << "\nscheme: " << scheme.to_string()
                   << "  classifier: " << cfg.classifier.to_string() << '\n'
                   << describe_training(scored.model);
            if (cfg.save_model) {
                const auto* plrm = std::get_if<PlrmModel>(&scored.model);
                if (!plrm) fail(ErrorKind::usage, "only PLRM models can be saved");
                std::ostringstream buf;
                plrm->save(buf);
                write_file_atomic(*cfg.save_model, buf.str());
                result.written.push_back(*cfg.save_model);
            }
            AggregateOptions opts;
            opts.epsilon = cfg.epsilon;
            if (scored.self_scores) opts.self_scores = &*scored.self_scores;
            for (const auto m : cfg.methods) {
                emit_matrix(cfg, aggregate(scored.test_scores, m, opts), truth, out, report);
            }
            break;
        }
        case Command::sym1:
        case Command::sym2: {
            const auto scheme = TokenizationScheme::parse(cfg.scheme);
            const auto ds1 = load_source(cfg, cfg.first);
            const auto ds2 = load_source(cfg, cfg.second);
            report << "first: " << describe(ds1) << "\nsecond: " << describe(ds2)
                   << "\nscheme: " << scheme.to_string()
                   << "  classifier: " << cfg.classifier.to_string() << '\n';
            const auto m = cfg.command == Command::sym1
                               ? align_sym1(ds1, ds2, scheme, cfg.classifier)
                               : align_sym2(ds1, ds2, scheme, cfg.classifier);
            emit_matrix(cfg, m, truth, out, report);
            break;
        }
        case Command::eval: {
            if (!truth && !cfg.confidence) {
                fail(ErrorKind::usage, "eval needs --truth and/or --confidence");
            }
            const auto m = matrix_from_json(read_file(cfg.matrix));
            report << "matrix: " << cfg.matrix.string() << '\n';
            const std::string stem(to_string(m.method));
            std::optional<TopKReport> topk;
            std::optional<ConfidenceReport> confidence;
            if (truth) {
                topk = topk_score(m, *truth);
                report << "top-1/2/3 " << stem << ": " << topk->triple() << " of " << topk->total
                       << '\n';
            }
            if (cfg.confidence) {
                confidence = l1_confidence(m, cfg.one_to_one);
                report << "confidence " << stem << ": |Q-H|_1 = "
                       << text::format_double(confidence->l1_to_assignment) << '\n';
            }
            out.write(stem + ".eval.json", evaluation_to_json(m, topk, confidence));
            break;
        }
        case Command::profile: {
            const auto ds1 = load_source(cfg, cfg.first);
            const auto ds2 = load_source(cfg, cfg.second);
            const auto d = profile_distances(ds1, ds2);
            out.write("profile.distances.csv", matrix_to_csv(d));
            report << "profile distances (Jensen-Shannon, nats): " << describe(ds2) << " vs "
                   << describe(ds1) << '\n';
            char buf[32];
            for (std::size_t j = 0; j < d.rows.size(); ++j) {
                std::vector<double> neg(d.values[j].size());
                for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -d.values[j][i];
                const auto order = rank_row(neg);
                report << d.rows[j] << ':';
                for (std::size_t r = 0; r < std::min<std::size_t>(3, order.size()); ++r) {
                    std::snprintf(buf, sizeof buf, "%.4f", d.values[j][order[r]]);
                    report << "  " << d.cols[order[r]] << " (" << buf << ')';
                }
                report << '\n';
            }
            break;
        }
    }

    result.report = report.str();
    out.write("report.txt", result.report);
    return result;
}

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config:
            return 2;
        case ErrorKind::parse:
        case ErrorKind::data:
        case ErrorKind::lookup:
        case ErrorKind::io:
            return 3;
        case ErrorKind::numeric:
        case ErrorKind::infeasible:
        case ErrorKind::conflict:
            return 4;
    }
    return 1;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    static std::atomic<unsigned long> counter{0};
    auto tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) +
           "." + std::to_string(counter++);
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        f.flush();
        if (!f) fail(ErrorKind::io, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorKind::io, "cannot rename onto '" + path.string() + "'");
    }
}

std::filesystem::path default_out_dir() {
    if (const char* env = std::getenv("FIELDALIGN_OUT_DIR"); env && *env) return env;
    return ".";
}

}  // namespace fieldalign
