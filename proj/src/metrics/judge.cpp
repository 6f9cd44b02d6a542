#include "asuka/metrics/judge.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace asuka::metrics {

using core::Image;
using nlohmann::json;

const char* kDefaultJudgePrompt =
    "The left panel shows an image with the region to be filled marked by a "
    "semi-transparent overlay. The right panel shows the inpainted result. "
    "Decide whether the inpainted region contains hallucinated objects: new "
    "elements that are not supported by the surrounding context. Think step "
    "by step if needed, then finish with a single final line of the form "
    "ANSWER: YES or ANSWER: NO.";

Image make_judge_composite(const Image& masked_input, const masks::Mask& mask,
                           const Image& result, double alpha, int gap_px) {
    if (masked_input.height != result.height || masked_input.width != result.width ||
        mask.height != masked_input.height || mask.width != masked_input.width)
        throw std::invalid_argument("make_judge_composite: panel dimensions differ");
    const std::int64_t H = masked_input.height, W = masked_input.width;
    const double overlay = 0.5;  // flat mid-gray
    Image out(H, 2 * W + gap_px, 1.0);  // gap stays white
    for (std::int64_t r = 0; r < H; ++r) {
        for (std::int64_t c = 0; c < W; ++c) {
            const double a = mask.at(r, c) ? alpha : 0.0;
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, c, ch) = (1.0 - a) * masked_input.at(r, c, ch) + a * overlay;
            for (int ch = 0; ch < 3; ++ch)
                out.at(r, W + gap_px + c, ch) = result.at(r, c, ch);
        }
    }
    return out;
}

std::optional<bool> parse_verdict(const std::string& reply) {
    // the last "ANSWER:" marker wins; tolerate case and surrounding noise
    std::string upper = reply;
    std::transform(upper.begin(), upper.end(), upper.begin(),
                   [](unsigned char c) { return char(std::toupper(c)); });
    const std::string marker = "ANSWER:";
    const auto pos = upper.rfind(marker);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t i = pos + marker.size();
    while (i < upper.size() && std::isspace(static_cast<unsigned char>(upper[i]))) ++i;
    if (upper.compare(i, 3, "YES") == 0) return true;
    if (upper.compare(i, 2, "NO") == 0) return false;
    return std::nullopt;
}

namespace {
const char* kBase64Chars = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}  // namespace

std::string base64_encode(const std::string& in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < in.size()) {
        const unsigned v = (unsigned(std::uint8_t(in[i])) << 16) |
                           (unsigned(std::uint8_t(in[i + 1])) << 8) | unsigned(std::uint8_t(in[i + 2]));
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out.push_back(kBase64Chars[v & 63]);
        i += 3;
    }
    if (i + 1 == in.size()) {
        const unsigned v = unsigned(std::uint8_t(in[i])) << 16;
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == in.size()) {
        const unsigned v = (unsigned(std::uint8_t(in[i])) << 16) |
                           (unsigned(std::uint8_t(in[i + 1])) << 8);
        out.push_back(kBase64Chars[(v >> 18) & 63]);
        out.push_back(kBase64Chars[(v >> 12) & 63]);
        out.push_back(kBase64Chars[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

namespace {
struct ParsedUrl {
    std::string host_port;
};

ParsedUrl parse_base_url(const std::string& url) {
    // httplib::Client accepts scheme://host:port directly
    return ParsedUrl{url};
}
}  // namespace

JudgeClient::JudgeClient(JudgeClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw std::invalid_argument("JudgeClient: base_url required");
    if (cfg_.max_in_flight < 1) throw std::invalid_argument("JudgeClient: max_in_flight must be >= 1");
}

JudgeVerdict JudgeClient::judge_hallucination(const Image& composite,
                                              const std::string& prompt_template) const {
    const std::string png = core::encode_png_rgb(composite);
    json body;
    body["model"] = cfg_.model_id;
    body["messages"] = json::array({json{
        {"role", "user"},
        {"content",
         json::array(
             {json{{"type", "text"}, {"text", prompt_template}},
              json{{"type", "image_url"},
                   {"image_url", json{{"url", "data:image/png;base64," + base64_encode(png)}}}}})}}});
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        httplib::Client client(parse_base_url(cfg_.base_url).host_port);
        client.set_connection_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        if (const char* token = std::getenv(cfg_.auth_token_env.c_str()))
            client.set_default_headers({{"Authorization", std::string("Bearer ") + token}});

        auto res = client.Post("/v1/chat/completions", payload, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;  // transient, retry
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;  // transient, retry
        }
        if (res->status != 200)
            throw TransportError("judge endpoint returned status " + std::to_string(res->status));

        std::string content;
        try {
            const json reply = json::parse(res->body);
            content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            throw ProtocolError(std::string("malformed judge reply: ") + e.what(), res->body);
        }
        const auto verdict = parse_verdict(content);
        if (!verdict)
            throw ProtocolError("judge reply carries no ANSWER: YES|NO line", content);
        JudgeVerdict out;
        out.hallucination = *verdict;
        out.raw_response = content;
        out.model_id = cfg_.model_id;
        return out;
    }
    throw TransportError("judge endpoint unreachable after retries: " + last_error);
}

std::vector<JudgeClient::ItemResult> JudgeClient::judge_batch(
    const std::vector<std::pair<std::string, Image>>& items,
    const std::string& prompt_template) const {
    std::vector<ItemResult> results(items.size());
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;
    std::size_t next = 0;
    std::vector<std::thread> threads;

    // bounded in-flight window with single-writer aggregation under the lock
    const int window = cfg_.max_in_flight;
    auto worker = [&](std::size_t idx) {
        const auto start = std::chrono::steady_clock::now();
        ItemResult r;
        r.id = items[idx].first;
        try {
            r.verdict = judge_hallucination(items[idx].second, prompt_template);
        } catch (const ProtocolError& e) {
            r.error = std::string("protocol: ") + e.what();
            JudgeVerdict v;
            v.raw_response = e.raw_response;
            r.verdict.reset();
            r.error += " | raw: " + e.raw_response;
        } catch (const TransportError& e) {
            r.error = std::string("transport: ") + e.what();
        }
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        std::lock_guard<std::mutex> lock(mu);
        results[idx] = std::move(r);
        --in_flight;
        cv.notify_all();
    };

    {
        std::unique_lock<std::mutex> lock(mu);
        while (next < items.size()) {
            cv.wait(lock, [&] { return in_flight < window; });
            ++in_flight;
            threads.emplace_back(worker, next);
            ++next;
        }
    }
    for (auto& t : threads) t.join();
    return results;
}

void save_judge_results(const std::filesystem::path& p,
                        const std::vector<JudgeClient::ItemResult>& results) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write judge results: " + p.string());
    for (const auto& r : results) {
        json j;
        j["id"] = r.id;
        if (r.verdict) {
            j["verdict"] = r.verdict->hallucination ? "yes" : "no";
            j["raw_response"] = r.verdict->raw_response;
        } else {
            j["verdict"] = nullptr;
            j["error"] = r.error;
        }
        j["latency_ms"] = r.latency_ms;
        out << j.dump() << "\n";
    }
}

}  // namespace asuka::metrics
