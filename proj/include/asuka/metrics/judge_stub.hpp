#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace asuka::metrics {

// Deterministic reply selection keyed on the request's image payload, stable
// under concurrent delivery order.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string stub_reply_for_image(const std::string& image_url) {
    switch (fnv1a(image_url) % 3) {
        case 0: return "The filled region blends naturally.\nANSWER: NO";
        case 1: return "A new object appears that the context does not support.\nANSWER: YES";
        default: return "I cannot tell what is going on in this picture at all.";
    }
}

// In-process chat-completions stub used by the test suites and the
// standalone tool. Modes: image-keyed scripted replies (default), a fixed
// reply, or N leading failures for retry testing.
class StubJudgeServer {
public:
    StubJudgeServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            const int n = request_count_.fetch_add(1);
            if (n < fail_first_) {
                res.status = 503;
                res.set_content("overloaded", "text/plain");
                return;
            }
            std::string reply;
            if (!fixed_reply_.empty()) {
                reply = fixed_reply_;
            } else {
                std::string image_url;
                try {
                    const auto body = nlohmann::json::parse(req.body);
                    for (const auto& part : body.at("messages").at(0).at("content"))
                        if (part.at("type") == "image_url")
                            image_url = part.at("image_url").at("url").get<std::string>();
                } catch (...) {
                    res.status = 400;
                    return;
                }
                reply = stub_reply_for_image(image_url);
            }
            nlohmann::json out;
            out["choices"] = {{{"message", {{"role", "assistant"}, {"content", reply}}}}};
            res.set_content(out.dump(), "application/json");
        });
    }

    ~StubJudgeServer() { stop(); }

    int start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port_;
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests_seen() const { return request_count_.load(); }

    void set_fixed_reply(std::string reply) { fixed_reply_ = std::move(reply); }
    void set_fail_first(int n) { fail_first_ = n; }
    void reset_counter() { request_count_ = 0; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> request_count_{0};
    std::string fixed_reply_;
    int fail_first_ = 0;
};

}  // namespace asuka::metrics
