#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace seasonal::stub {

struct StubOptions {
    std::size_t dim = 16;
    std::string model_id = "stub-hash-v1";
};

/**
 * Reply to a generate prompt, a pure function of the prompt. Markers in the
 * prompt force a reply kind: "stub:yes", "stub:no", "stub:loquacious",
 * "stub:unparseable". Without a marker the kind and the answer follow a hash
 * of the prompt (1 in 10 unparseable, 3 in 10 loquacious, the rest
 * structured). A prompt holding "stub:fail" gets HTTP 500.
 */
std::string generate_reply(std::string_view prompt);

/// Unit-norm vector derived from a hash of `content`.
std::vector<double> embed_vector(std::string_view content, std::size_t dim);

/// Adds POST /v1/generate, POST /v1/embed and GET /healthz.
void register_routes(httplib::Server& server, const StubOptions& options);

/// In-process server on a background thread.
class StubServer {
public:
    explicit StubServer(StubOptions options = {});
    ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    std::string base_url() const;
    std::size_t generate_calls() const { return *generate_calls_; }
    std::size_t embed_calls() const { return *embed_calls_; }

private:
    StubOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;
    std::shared_ptr<std::atomic<std::size_t>> generate_calls_;
    std::shared_ptr<std::atomic<std::size_t>> embed_calls_;
};

}  // namespace seasonal::stub
