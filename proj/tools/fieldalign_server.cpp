#include <httplib.h>

#include <CLI11.hpp>
#include <csignal>
#include <iostream>

#include "fieldalign/review_http.hpp"

namespace {
httplib::Server* g_server = nullptr;
}

int main(int argc, char** argv) {
    CLI::App app{"Review service for candidate field alignments", "fieldalign-server"};
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string dir = "sessions";
    fieldalign::review::StoreOptions options;
    app.add_option("--host", host, "Address to bind")->capture_default_str();
    app.add_option("--port", port, "Port to listen on (0 picks a free one)")->capture_default_str();
    app.add_option("--sessions-dir", dir, "Directory holding one JSON file per session")
        ->capture_default_str();
    app.add_option("--max-upload", options.max_upload_bytes, "Largest accepted request body in bytes")
        ->capture_default_str();
    app.add_option("--async-threshold", options.async_cell_threshold,
                   "Align in the background above this many cells")
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        fieldalign::review::SessionStore store(dir, options);
        httplib::Server server;
        fieldalign::review::install_routes(server, store);
        g_server = &server;
        std::signal(SIGINT, [](int) { g_server->stop(); });
        std::signal(SIGTERM, [](int) { g_server->stop(); });
        if (port == 0) port = server.bind_to_any_port(host);
        else if (!server.bind_to_port(host, port)) port = -1;
        if (port < 0) {
            std::cerr << "error [review]: cannot bind " << host << '\n';
            return 3;
        }
        std::cout << "listening on http://" << host << ':' << port << std::endl;
        server.listen_after_bind();
        store.wait_idle();
    } catch (const fieldalign::Error& e) {
        std::cerr << "error [" << fieldalign::to_string(e.module()) << "]: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
