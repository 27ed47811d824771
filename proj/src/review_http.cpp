#include "fieldalign/review_http.hpp"

#include <httplib.h>
#include <json.hpp>

#include <filesystem>

namespace fieldalign::review {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

json error_body(const Error& e) {
    json err{{"module", std::string(to_string(e.module()))},
             {"kind", std::string(to_string(e.kind()))},
             {"message", e.what()}};
    if (const auto* pe = dynamic_cast<const ParseError*>(&e)) err["row"] = pe->row();
    return {{"error", err}};
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            res.status = http_status(e.kind());
            res.set_content(error_body(e).dump(), kJson);
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(json{{"error", {{"module", "review"}, {"kind", "parse"},
                                            {"message", e.what()}}}}.dump(),
                            kJson);
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(json{{"error", {{"module", "review"}, {"kind", "internal"},
                                            {"message", e.what()}}}}.dump(),
                            kJson);
        }
    };
}

json matrix_view(const AlignmentMatrix& m) {
    return {{"rows", m.rows},
            {"cols", m.cols},
            {"values", m.values},
            {"method", std::string(to_string(m.method))},
            {"comparability", std::string(to_string(m.comparability))},
            {"epsilon", m.epsilon ? json(*m.epsilon) : json(nullptr)}};
}

json candidates_view(const Session& s) {
    const auto& m = s.ready_matrix();
    json rows = json::array();
    for (const auto& rc : candidate_list(m, s.state)) {
        json cands = json::array();
        for (const auto& c : rc.candidates) {
            cands.push_back({{"col", c.name}, {"value", c.value},
                             {"status", std::string(to_string(c.status))}});
        }
        rows.push_back({{"row", rc.row},
                        {"accepted", rc.accepted ? json(*rc.accepted) : json(nullptr)},
                        {"no_available_match", rc.no_available_match},
                        {"candidates", cands}});
    }
    return {{"session", s.id},
            {"one_to_one", s.config.one_to_one},
            {"comparability", std::string(to_string(m.comparability))},
            {"rows", rows}};
}

json summary_view(const Session& s) {
    json j{{"id", s.id},
           {"status", std::string(to_string(s.status))},
           {"created", s.created},
           {"updated", s.updated},
           {"ds1", s.ds1_name},
           {"ds2", s.ds2_name},
           {"method", std::string(to_string(s.config.method))},
           {"one_to_one", s.config.one_to_one},
           {"decisions", s.log.size()}};
    if (s.status == SessionStatus::failed) j["error"] = s.error;
    return j;
}

json session_view(const Session& s) {
    auto j = summary_view(s);
    j["config"] = {{"scheme", s.config.scheme},
                   {"classifier", s.config.classifier.to_string()},
                   {"seed", s.config.classifier.seed},
                   {"shuffle", s.config.classifier.shuffle},
                   {"l2", s.config.classifier.l2},
                   {"epsilon", s.config.epsilon ? json(*s.config.epsilon) : json(nullptr)},
                   {"format", std::string(to_string(s.config.format))},
                   {"nul_policy", std::string(to_string(s.config.nul_policy))}};
    if (s.status == SessionStatus::ready) {
        j["matrix"] = matrix_view(*s.matrix);
        j["candidates"] = candidates_view(s)["rows"];
    }
    return j;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(Module::review, ErrorKind::usage, "expected a boolean, got '" + v + "'");
}

double parse_number(const std::string& field, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(Module::review, ErrorKind::usage, field + ": expected a number, got '" + v + "'");
}

SessionConfig config_from_form(const httplib::Request& req) {
    SessionConfig c;
    auto field = [&](const char* name) -> std::optional<std::string> {
        if (req.has_file(name)) return req.get_file_value(name).content;
        if (req.has_param(name)) return req.get_param_value(name);
        return std::nullopt;
    };
    if (auto v = field("scheme")) c.scheme = *v;
    if (auto v = field("classifier")) c.classifier = TrainConfig::parse(*v);
    if (auto v = field("seed")) c.classifier.seed = static_cast<std::uint64_t>(parse_number("seed", *v));
    if (auto v = field("shuffle")) c.classifier.shuffle = parse_bool(*v);
    if (auto v = field("l2")) c.classifier.l2 = parse_number("l2", *v);
    if (auto v = field("method")) c.method = parse_aggregation_method(*v);
    if (auto v = field("epsilon")) c.epsilon = parse_number("epsilon", *v);
    if (auto v = field("one_to_one")) c.one_to_one = parse_bool(*v);
    if (auto v = field("format")) c.format = parse_table_format(*v);
    if (auto v = field("nul_policy")) c.nul_policy = parse_nul_policy(*v);
    return c;
}

std::string source_name(const httplib::MultipartFormData& f, const char* fallback) {
    const auto stem = std::filesystem::path(f.filename).stem().string();
    return stem.empty() ? fallback : stem;
}

}  // namespace

int http_status(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::lookup: return 404;
        case ErrorKind::conflict: return 409;
        case ErrorKind::infeasible:
        case ErrorKind::numeric: return 422;
        case ErrorKind::io: return 500;
        default: return 400;
    }
}

void install_routes(httplib::Server& server, SessionStore& store) {
    server.set_payload_max_length(store.options().max_upload_bytes);
    server.set_error_handler([&store](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
        std::string message = httplib::status_message(res.status);
        if (res.status == 413) {
            message = "upload exceeds the limit of " +
                      std::to_string(store.options().max_upload_bytes) + " bytes";
        }
        res.set_content(json{{"error", {{"module", "review"}, {"kind", "http"},
                                        {"message", message}}}}.dump(),
                        kJson);
        return httplib::Server::HandlerResponse::Handled;
    });

    server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", kJson);
    });

    server.Post("/v1/sessions", guarded([&store](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data() || !req.has_file("ds1") || !req.has_file("ds2")) {
            throw Error(Module::review, ErrorKind::usage,
                        "expected a multipart upload with files 'ds1' and 'ds2'");
        }
        const auto ds1 = req.get_file_value("ds1");
        const auto ds2 = req.get_file_value("ds2");
        const auto s = store.create(source_name(ds1, "ds1"), ds1.content, source_name(ds2, "ds2"),
                                    ds2.content, config_from_form(req));
        res.status = s.status == SessionStatus::ready ? 201 : 202;
        res.set_header("Location", "/v1/sessions/" + s.id);
        res.set_content(session_view(s).dump(), kJson);
    }));

    server.Get("/v1/sessions", guarded([&store](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& s : store.list()) list.push_back(summary_view(s));
        res.set_content(json{{"sessions", list}}.dump(), kJson);
    }));

    server.Get("/v1/sessions/:id", guarded([&store](const httplib::Request& req, httplib::Response& res) {
        res.set_content(session_view(store.get(req.path_params.at("id"))).dump(), kJson);
    }));

    server.Get("/v1/sessions/:id/candidates",
               guarded([&store](const httplib::Request& req, httplib::Response& res) {
                   res.set_content(candidates_view(store.get(req.path_params.at("id"))).dump(), kJson);
               }));

    server.Post("/v1/sessions/:id/decisions",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    const auto body = json::parse(req.body);
                    DecisionEvent e;
                    e.row = body.at("row").get<std::string>();
                    e.action = parse_action(body.at("action").get<std::string>());
                    if (e.action != Action::clear) e.col = body.at("col").get<std::string>();
                    const auto s = store.decide(req.path_params.at("id"), e);
                    res.set_content(candidates_view(s).dump(), kJson);
                }));

    server.Get("/v1/sessions/:id/suggestion",
               guarded([&store](const httplib::Request& req, httplib::Response& res) {
                   const auto s = store.get(req.path_params.at("id"));
                   json pairs = json::array();
                   for (const auto& p : suggest_completion(s.ready_matrix(), s.state)) {
                       pairs.push_back({{"row", p.row}, {"col", p.col}, {"value", p.value}});
                   }
                   res.set_content(json{{"session", s.id}, {"suggestion", pairs}}.dump(), kJson);
               }));

    server.Get("/v1/sessions/:id/export",
               guarded([&store](const httplib::Request& req, httplib::Response& res) {
                   const auto fmt = parse_export_format(
                       req.has_param("format") ? req.get_param_value("format") : "csv");
                   const auto s = store.get(req.path_params.at("id"));
                   const bool csv = fmt == ExportFormat::csv;
                   res.set_header("Content-Disposition", "attachment; filename=\"" + s.id +
                                                             (csv ? ".mapping.csv\"" : ".mapping.json\""));
                   res.set_content(export_mapping(s, fmt), csv ? "text/csv" : kJson);
               }));
}

}  // namespace fieldalign::review
