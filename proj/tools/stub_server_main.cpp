#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "stub_server.hpp"

namespace {
httplib::Server* g_server = nullptr;

void handle_signal(int) {
    if (g_server != nullptr) {
        g_server->stop();
    }
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic stand-in for the generate and embed endpoints"};
    std::string host = "127.0.0.1";
    int port = 8080;
    seasonal::stub::StubOptions options;
    app.add_option("--host", host, "listen address");
    app.add_option("--port", port, "listen port");
    app.add_option("--dim", options.dim, "embedding dimension")->check(CLI::Range(1, 65536));
    CLI11_PARSE(app, argc, argv);

    httplib::Server server;
    seasonal::stub::register_routes(server, options);
    g_server = &server;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    if (!server.bind_to_port(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << '\n';
        return 1;
    }
    std::cerr << "stub server on http://" << host << ":" << port << '\n';
    server.listen_after_bind();
    return 0;
}
