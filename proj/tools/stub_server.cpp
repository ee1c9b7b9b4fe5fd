#include "stub_server.hpp"

#include <cmath>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "seasonal/rng.hpp"

namespace seasonal::stub {

namespace {

using Json = nlohmann::json;

void reply_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(Json{{"error", message}}.dump(), "application/json");
}

}  // namespace

std::string generate_reply(std::string_view prompt) {
    const std::uint64_t h = derive_seed(0, prompt);
    bool yes = ((h >> 8) & 1U) != 0;
    enum { Structured, Loquacious, Unparseable } kind = Structured;
    if (h % 10 == 0) {
        kind = Unparseable;
    } else if (h % 10 <= 3) {
        kind = Loquacious;
    }
    if (prompt.find("stub:yes") != std::string_view::npos) yes = true;
    if (prompt.find("stub:no") != std::string_view::npos) yes = false;
    if (prompt.find("stub:loquacious") != std::string_view::npos) kind = Loquacious;
    if (prompt.find("stub:unparseable") != std::string_view::npos) kind = Unparseable;
    if (prompt.find("stub:yes") != std::string_view::npos || prompt.find("stub:no") != std::string_view::npos) {
        if (prompt.find("stub:loquacious") == std::string_view::npos) kind = Structured;
    }

    const char* answer = yes ? "yes" : "no";
    switch (kind) {
        case Unparseable:
            return "I am unable to judge this ad from the details given.";
        case Loquacious:
            return std::string("Let me think about the title, the body and the picture. Taking it all together I "
                               "would say ") +
                   answer + ", since the overall framing points that way.";
        case Structured:
            break;
    }
    return std::string("The title, body and image were reviewed against the event.\nANSWER: ") + answer;
}

std::vector<double> embed_vector(std::string_view content, std::size_t dim) {
    Rng rng(derive_seed(0x5eed, content));
    std::normal_distribution<double> normal;
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) {
        x /= norm;
    }
    return v;
}

void register_routes(httplib::Server& server, const StubOptions& options) {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok", "text/plain");
    });
    server.Post("/v1/generate", [](const httplib::Request& req, httplib::Response& res) {
        Json body;
        try {
            body = Json::parse(req.body);
        } catch (const Json::exception&) {
            return reply_error(res, 400, "body is not JSON");
        }
        if (!body.is_object() || !body.contains("prompt") || !body["prompt"].is_string()) {
            return reply_error(res, 400, "prompt is required");
        }
        const std::string prompt = body["prompt"];
        if (prompt.find("stub:fail") != std::string::npos) {
            return reply_error(res, 500, "forced failure");
        }
        res.set_content(Json{{"text", generate_reply(prompt)}}.dump(), "application/json");
    });
    server.Post("/v1/embed", [options](const httplib::Request& req, httplib::Response& res) {
        Json body;
        try {
            body = Json::parse(req.body);
        } catch (const Json::exception&) {
            return reply_error(res, 400, "body is not JSON");
        }
        if (!body.is_object() || !body.contains("items") || !body["items"].is_array() ||
            !body.contains("modality") || !body["modality"].is_string()) {
            return reply_error(res, 400, "items and modality are required");
        }
        const std::string modality = body["modality"];
        if (modality != "text" && modality != "image") {
            return reply_error(res, 400, "modality must be text or image");
        }
        const char* field = modality == "text" ? "text" : "image_ref";
        Json vectors = Json::array();
        for (const Json& item : body["items"]) {
            if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains(field) ||
                !item[field].is_string()) {
                return reply_error(res, 400, std::string("every item needs id and ") + field);
            }
            const std::string content = modality + ":" + item[field].get<std::string>();
            vectors.push_back({{"id", item["id"]}, {"values", embed_vector(content, options.dim)}});
        }
        res.set_content(Json{{"vectors", vectors}}.dump(), "application/json");
    });
}

StubServer::StubServer(StubOptions options)
    : options_(std::move(options)),
      generate_calls_(std::make_shared<std::atomic<std::size_t>>(0)),
      embed_calls_(std::make_shared<std::atomic<std::size_t>>(0)) {}

StubServer::~StubServer() {
    stop();
}

int StubServer::start(const std::string& host, int port) {
    server_ = std::make_unique<httplib::Server>();
    auto generate = generate_calls_;
    auto embed = embed_calls_;
    server_->set_pre_routing_handler([generate, embed](const httplib::Request& req, httplib::Response&) {
        if (req.path == "/v1/generate") ++*generate;
        if (req.path == "/v1/embed") ++*embed;
        return httplib::Server::HandlerResponse::Unhandled;
    });
    register_routes(*server_, options_);
    host_ = host;
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) {
        server_.reset();
        return -1;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void StubServer::stop() {
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
    server_.reset();
}

std::string StubServer::base_url() const {
    return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace seasonal::stub
