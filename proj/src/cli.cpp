#include "fieldalign/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <ostream>
#include <sstream>

#include "fieldalign/pipeline.hpp"

namespace fieldalign {

namespace {

struct Flags {
    std::string scheme = "e1-w1-g2";
    std::string classifier = "asd:1e-8";
    std::string agg = "arith";
    std::optional<double> epsilon;
    std::string truth;
    std::string out;
    std::string format = "csv";
    std::string nul = "empty_is_nul";
    std::string sample;
    std::optional<std::uint64_t> seed;
    bool shuffle = false;
    std::optional<double> l2;
    bool confidence = false;
    bool one_to_one = false;
    std::string save_model;
};

std::pair<std::size_t, std::size_t> parse_sample(const std::string& s) {
    const auto colon = s.find(':');
    std::size_t start = 0, count = 0;
    auto num = [&](std::string_view part, std::size_t& v) {
        auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        return ec == std::errc{} && p == part.data() + part.size() && !part.empty();
    };
    if (colon == std::string::npos || !num(std::string_view(s).substr(0, colon), start) ||
        !num(std::string_view(s).substr(colon + 1), count)) {
        throw Error(Module::cli, ErrorKind::usage, "--sample expects START:COUNT, got '" + s + "'");
    }
    return {start, count};
}

std::vector<AggregationMethod> parse_methods(const std::string& list) {
    std::vector<AggregationMethod> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto m = parse_aggregation_method(item);
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) throw Error(Module::cli, ErrorKind::usage, "--agg needs at least one method");
    return out;
}

void add_common(CLI::App* cmd, Flags& f, bool training) {
    cmd->add_option("--out,-o", f.out, "Output directory (default $FIELDALIGN_OUT_DIR or .)");
    cmd->add_option("--format", f.format, "Input table format: csv or tsv")->capture_default_str();
    cmd->add_option("--nul", f.nul, "Empty cells: empty_is_nul or skip_empty")->capture_default_str();
    cmd->add_option("--sample", f.sample, "Use COUNT rows starting at row START (START:COUNT)");
    if (!training) return;
    cmd->add_option("--scheme", f.scheme, "Tokenization scheme e{0,1}-w{0,1}-gK")->capture_default_str();
    cmd->add_option("--classifier", f.classifier, "sgd:ETA:REPS, asd:EPS[:MAX_ITERS] or knn:K")
        ->capture_default_str();
    cmd->add_option("--seed", f.seed, "Seed for the sgd shuffle");
    cmd->add_flag("--shuffle", f.shuffle, "Shuffle sgd examples each pass");
    cmd->add_option("--l2", f.l2, "L2 penalty weight on the classifier weights");
    cmd->add_option("--truth", f.truth, "Ground-truth CSV (ds2_column,ds1_column) for top-1/2/3 scoring");
    cmd->add_flag("--confidence", f.confidence, "Report the L1 distance to the nearest assignment");
    cmd->add_flag("--one-to-one", f.one_to_one, "Confidence against an injective assignment");
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Instance-based field alignment between two tabular data sources", "fieldalign"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    Flags f;
    std::string train_path, test_path, a_path, b_path, matrix_path;

    auto* align = app.add_subcommand("align", "Train on one source, score the other's columns");
    align->add_option("--train", train_path, "Labelled source (DS1)")->required();
    align->add_option("--test", test_path, "Source to align (DS2)")->required();
    align->add_option("--agg", f.agg, "Comma list of arith, geom, geom_eps, cosine")->capture_default_str();
    align->add_option("--epsilon", f.epsilon, "geom_eps smoothing constant");
    align->add_option("--save-model", f.save_model, "Write the trained model as JSON");
    add_common(align, f, true);

    CLI::App* sym[2];
    for (int n = 0; n < 2; ++n) {
        sym[n] = app.add_subcommand(n == 0 ? "sym1" : "sym2",
                                    n == 0 ? "Symmetric alignment with one joint classifier"
                                           : "Symmetric alignment with one classifier per source");
        sym[n]->add_option("first", a_path, "First source")->required();
        sym[n]->add_option("second", b_path, "Second source")->required();
        add_common(sym[n], f, true);
    }

    auto* eval = app.add_subcommand("eval", "Score a saved alignment matrix");
    eval->add_option("--matrix", matrix_path, "Matrix JSON written by align/sym1/sym2")->required();
    eval->add_option("--truth", f.truth, "Ground-truth CSV (ds2_column,ds1_column)");
    eval->add_flag("--confidence", f.confidence, "Report the L1 distance to the nearest assignment");
    eval->add_flag("--one-to-one", f.one_to_one, "Confidence against an injective assignment");
    eval->add_option("--out,-o", f.out, "Output directory (default $FIELDALIGN_OUT_DIR or .)");

    auto* profile = app.add_subcommand("profile", "Jensen-Shannon distances between field profiles");
    profile->add_option("first", a_path, "First source")->required();
    profile->add_option("second", b_path, "Second source")->required();
    add_common(profile, f, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error [cli]: " << e.what() << '\n';
        return 2;
    }

    try {
        RunConfig cfg;
        if (align->parsed()) {
            cfg.command = Command::align;
            cfg.first = train_path;
            cfg.second = test_path;
            cfg.methods = parse_methods(f.agg);
        } else if (sym[0]->parsed() || sym[1]->parsed()) {
            cfg.command = sym[0]->parsed() ? Command::sym1 : Command::sym2;
            cfg.first = a_path;
            cfg.second = b_path;
        } else if (eval->parsed()) {
            cfg.command = Command::eval;
            cfg.matrix = matrix_path;
        } else {
            cfg.command = Command::profile;
            cfg.first = a_path;
            cfg.second = b_path;
        }
        cfg.format = parse_table_format(f.format);
        cfg.nul_policy = parse_nul_policy(f.nul);
        if (!f.sample.empty()) cfg.sample = parse_sample(f.sample);
        cfg.scheme = f.scheme;
        cfg.classifier = TrainConfig::parse(f.classifier);
        if (f.seed) cfg.classifier.seed = *f.seed;
        if (f.shuffle) cfg.classifier.shuffle = true;
        if (f.l2) cfg.classifier.l2 = *f.l2;
        cfg.classifier.validate();
        cfg.epsilon = f.epsilon;
        if (!f.truth.empty()) cfg.truth = f.truth;
        cfg.out_dir = f.out.empty() ? default_out_dir() : std::filesystem::path(f.out);
        cfg.confidence = f.confidence;
        cfg.one_to_one = f.one_to_one;
        if (!f.save_model.empty()) cfg.save_model = f.save_model;

        const auto result = run(cfg);
        out << result.report;
        return 0;
    } catch (const Error& e) {
        err << "error [" << to_string(e.module()) << "]: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "error [cli]: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace fieldalign
