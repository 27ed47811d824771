#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "fieldalign/align.hpp"
#include "fieldalign/classify.hpp"
#include "fieldalign/evaluate.hpp"
#include "fieldalign/featurize.hpp"
#include "fieldalign/ingest.hpp"
#include "fieldalign/pipeline.hpp"

namespace py = pybind11;
using namespace fieldalign;

namespace {

TrainConfig classifier_config(const std::string& spec, std::optional<std::uint64_t> seed, bool shuffle,
                              double l2) {
    auto cfg = TrainConfig::parse(spec);
    if (seed) cfg.seed = *seed;
    cfg.shuffle = shuffle;
    cfg.l2 = l2;
    cfg.validate();
    return cfg;
}

DataSource make_source(const std::string& name, const std::vector<std::pair<std::string, std::vector<std::string>>>& cols) {
    std::vector<Column> out;
    for (const auto& [n, cells] : cols) out.push_back({n, cells});
    return DataSource(name, std::move(out));
}

struct ModelHandle {
    Model model;
};

MatchingMode matching_mode(const std::string& s) {
    if (s == "sum") return MatchingMode::sum;
    if (s == "log_product") return MatchingMode::log_product;
    throw Error(Module::evaluate, ErrorKind::usage, "mode must be sum or log_product, got '" + s + "'");
}

py::dict meta_dict(const TrainingMeta& m) {
    py::dict d;
    d["method"] = m.method;
    d["hyperparameters"] = m.hyperparameters;
    d["objective"] = m.objective;
    d["log_likelihood"] = m.log_likelihood;
    d["iterations"] = m.iterations;
    d["converged"] = m.converged;
    d["warning"] = m.warning;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Instance-based field alignment between two tabular data sources";

    static py::handle error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = error_type(e.what());
            exc.attr("module") = std::string(to_string(e.module()));
            exc.attr("kind") = std::string(to_string(e.kind()));
            if (const auto* pe = dynamic_cast<const ParseError*>(&e)) exc.attr("row") = pe->row();
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.attr("NUL") = py::bytes(kNulCell);

    py::class_<DataSource>(m, "DataSource")
        .def(py::init(&make_source), py::arg("name"), py::arg("columns"))
        .def_property_readonly("name", &DataSource::name)
        .def_property_readonly("column_names", &DataSource::column_names)
        .def_property_readonly("num_columns", &DataSource::num_columns)
        .def("cells", [](const DataSource& ds, const std::string& col) {
            std::vector<std::optional<std::string>> out;
            for (const auto& c : ds.column(col).cells) {
                out.push_back(is_nul(c) ? std::nullopt : std::optional<std::string>(c));
            }
            return out;
        }, "Cells of one column; NUL cells become None.")
        .def("__len__", &DataSource::num_columns)
        .def("__repr__", [](const DataSource& ds) {
            return "<DataSource '" + ds.name() + "' with " + std::to_string(ds.num_columns()) + " columns>";
        });

    m.def("parse_table", [](std::string_view text, std::string name, const std::string& format, const std::string& nul) {
        return parse_table(text, std::move(name), parse_table_format(format), parse_nul_policy(nul));
    }, py::arg("text"), py::arg("name") = "table", py::arg("format") = "csv", py::arg("nul_policy") = "empty_is_nul");
    m.def("load_table", [](const std::filesystem::path& path, const std::string& format, const std::string& nul) {
        return load_table(path, parse_table_format(format), parse_nul_policy(nul));
    }, py::arg("path"), py::arg("format") = "csv", py::arg("nul_policy") = "empty_is_nul");
    m.def("sample_rows", &sample_rows, py::arg("ds"), py::arg("start"), py::arg("count"));
    m.def("value_histogram", [](const DataSource& ds, const std::string& col) {
        std::vector<std::pair<std::string, std::size_t>> out;
        for (const auto& [v, n] : value_histogram(ds, col).entries) out.emplace_back(display_cell(v), n);
        return out;
    }, py::arg("ds"), py::arg("column"));

    m.def("feature_counts", [](const std::string& cell, const std::string& scheme) {
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (const auto& [key, n] : feature_counts(cell, TokenizationScheme::parse(scheme))) {
            out.emplace_back(to_string(key.kind), key.text, n);
        }
        return out;
    }, py::arg("cell"), py::arg("scheme") = "e1-w1-g2", "(kind, text, count) per feature of one cell.");

    py::class_<ModelHandle>(m, "Model")
        .def_property_readonly("classes", [](const ModelHandle& h) { return model_classes(h.model); })
        .def_property_readonly("kind", [](const ModelHandle& h) {
            return std::holds_alternative<PlrmModel>(h.model) ? "plrm" : "knn";
        })
        .def_property_readonly("meta", [](const ModelHandle& h) -> py::object {
            if (const auto* p = std::get_if<PlrmModel>(&h.model)) return meta_dict(p->meta());
            return py::none();
        })
        .def("predict", [](const ModelHandle& h, const std::string& cell) { return predict(h.model, cell); },
             py::arg("cell"))
        .def("save", [](const ModelHandle& h, const std::filesystem::path& path) {
            const auto* p = std::get_if<PlrmModel>(&h.model);
            if (!p) throw Error(Module::classify, ErrorKind::usage, "only logistic models can be saved");
            std::ofstream out(path, std::ios::binary);
            p->save(out);
        }, py::arg("path"));
    m.def("load_model", [](const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(Module::classify, ErrorKind::io, "cannot open '" + path.string() + "'");
        return ModelHandle{PlrmModel::load(in)};
    }, py::arg("path"));

    m.def("train", [](const DataSource& ds, const std::string& scheme, const std::string& classifier,
                      std::optional<std::uint64_t> seed, bool shuffle, double l2) {
        const auto s = TokenizationScheme::parse(scheme);
        const auto cfg = classifier_config(classifier, seed, shuffle, l2);
        py::gil_scoped_release release;
        return ModelHandle{train(ds, s, cfg)};
    }, py::arg("ds"), py::arg("scheme") = "e1-w1-g2", py::arg("classifier") = "asd:1e-8",
       py::arg("seed") = py::none(), py::arg("shuffle") = false, py::arg("l2") = 0.0);

    py::class_<CellScoreTable>(m, "CellScoreTable")
        .def_readonly("classes", &CellScoreTable::classes)
        .def_readonly("columns", &CellScoreTable::columns)
        .def_readonly("groups", &CellScoreTable::groups);
    m.def("score_cells", [](const ModelHandle& h, const DataSource& ds) { return score_cells(h.model, ds); },
          py::arg("model"), py::arg("ds"));

    py::class_<AlignmentMatrix>(m, "AlignmentMatrix")
        .def_readonly("rows", &AlignmentMatrix::rows)
        .def_readonly("cols", &AlignmentMatrix::cols)
        .def_readonly("values", &AlignmentMatrix::values)
        .def_property_readonly("method", [](const AlignmentMatrix& a) { return std::string(to_string(a.method)); })
        .def_property_readonly("comparability",
                               [](const AlignmentMatrix& a) { return std::string(to_string(a.comparability)); })
        .def_readonly("epsilon", &AlignmentMatrix::epsilon)
        .def("to_csv", [](const AlignmentMatrix& a) { return matrix_to_csv(a); })
        .def("to_json", [](const AlignmentMatrix& a) { return matrix_to_json(a); })
        .def_static("from_json", [](std::string_view s) { return matrix_from_json(s); })
        .def("report", [](const AlignmentMatrix& a) { return matrix_report(a); })
        .def("__eq__", [](const AlignmentMatrix& a, const AlignmentMatrix& b) { return a == b; });

    m.def("aggregate", [](const CellScoreTable& scores, const std::string& method,
                          const CellScoreTable* self_scores, std::optional<double> epsilon) {
        AggregateOptions opt;
        opt.self_scores = self_scores;
        opt.epsilon = epsilon;
        return aggregate(scores, parse_aggregation_method(method), opt);
    }, py::arg("scores"), py::arg("method") = "arith", py::arg("self_scores") = nullptr,
       py::arg("epsilon") = py::none());

    m.def("align", [](const DataSource& ds1, const DataSource& ds2, const std::string& method,
                      const std::string& scheme, const std::string& classifier, std::optional<double> epsilon,
                      std::optional<std::uint64_t> seed, bool shuffle, double l2) {
        AlignmentSpec spec{TokenizationScheme::parse(scheme), classifier_config(classifier, seed, shuffle, l2),
                           parse_aggregation_method(method), epsilon};
        py::gil_scoped_release release;
        return compute_alignment(ds1, ds2, spec);
    }, py::arg("ds1"), py::arg("ds2"), py::arg("method") = "arith", py::arg("scheme") = "e1-w1-g2",
       py::arg("classifier") = "asd:1e-8", py::arg("epsilon") = py::none(), py::arg("seed") = py::none(),
       py::arg("shuffle") = false, py::arg("l2") = 0.0,
       "Train on ds1 and score ds2's columns, or run sym1/sym2.");

    m.def("best_matches", [](const AlignmentMatrix& a, std::size_t k) {
        std::vector<std::vector<std::pair<std::string, double>>> out;
        for (const auto& row : best_matches(a, k)) {
            auto& o = out.emplace_back();
            for (const auto& mt : row) o.emplace_back(mt.name, mt.value);
        }
        return out;
    }, py::arg("matrix"), py::arg("k") = 3);

    m.def("topk_score", [](const AlignmentMatrix& a, const std::map<std::string, std::string>& truth,
                           const std::vector<std::size_t>& ks) {
        const auto r = topk_score(a, GroundTruth{truth}, ks);
        py::dict d;
        d["ks"] = r.ks;
        d["hits"] = r.hits;
        d["total"] = r.total;
        d["triple"] = r.triple();
        d["skipped_rows"] = r.skipped_rows;
        return d;
    }, py::arg("matrix"), py::arg("truth"), py::arg("ks") = std::vector<std::size_t>{1, 2, 3});

    m.def("one_to_one_matching", [](const std::vector<std::vector<double>>& values, const std::string& mode) {
        const auto r = one_to_one_matching(values, matching_mode(mode));
        return std::make_pair(r.col_of_row, r.objective);
    }, py::arg("values"), py::arg("mode") = "sum", "Returns (column of each row, objective).");

    m.def("l1_confidence", [](const AlignmentMatrix& a, bool one_to_one) {
        const auto r = l1_confidence(a, one_to_one);
        py::dict d;
        d["l1_to_assignment"] = r.l1_to_assignment;
        d["assignment"] = r.assignment;
        d["normalized"] = r.normalized;
        d["lin_lik"] = r.lin_lik;
        d["log_lik"] = r.log_lik;
        return d;
    }, py::arg("matrix"), py::arg("one_to_one") = false);

    m.def("profile_distances", [](const DataSource& ds1, const DataSource& ds2) {
        const auto d = profile_distances(ds1, ds2);
        return std::make_tuple(d.rows, d.cols, d.values);
    }, py::arg("ds1"), py::arg("ds2"), "(rows, cols, values) of Jensen-Shannon profile distances.");
}
