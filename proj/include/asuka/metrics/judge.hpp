#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "asuka/core/image.hpp"
#include "asuka/masks/mask.hpp"

namespace asuka::metrics {

// Two-panel judge input: masked input with a semi-transparent overlay on the
// left, inpainting result on the right, white gap between.
core::Image make_judge_composite(const core::Image& masked_input, const masks::Mask& mask,
                                 const core::Image& result, double alpha = 0.5, int gap_px = 16);

struct JudgeVerdict {
    bool hallucination = false;
    std::string raw_response;
    std::string model_id;
};

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when the reply carries no parsable verdict; preserves the raw text.
struct ProtocolError : std::runtime_error {
    ProtocolError(const std::string& msg, std::string raw)
        : std::runtime_error(msg), raw_response(std::move(raw)) {}
    std::string raw_response;
};

// The verdict contract demanded from the model: a final line "ANSWER: YES|NO".
extern const char* kDefaultJudgePrompt;

// Parses the constrained verdict token; nullopt when absent.
std::optional<bool> parse_verdict(const std::string& reply);

std::string base64_encode(const std::string& bytes);

struct JudgeClientConfig {
    std::string base_url;        // e.g. http://127.0.0.1:8080
    std::string model_id;
    std::string auth_token_env = "ASUKA_JUDGE_TOKEN";  // secrets only via environment
    int timeout_ms = 30000;
    int max_retries = 2;
    int max_in_flight = 4;
};

// Chat-completions-style client for one image plus text.
class JudgeClient {
public:
    explicit JudgeClient(JudgeClientConfig cfg);

    JudgeVerdict judge_hallucination(const core::Image& composite,
                                     const std::string& prompt_template) const;

    struct ItemResult {
        std::string id;
        std::optional<JudgeVerdict> verdict;  // empty on error
        std::string error;                    // "transport: ..." / "protocol: ..."
        std::int64_t latency_ms = 0;
    };

    // Bounded-window concurrent judging; order of results matches inputs.
    std::vector<ItemResult> judge_batch(const std::vector<std::pair<std::string, core::Image>>& items,
                                        const std::string& prompt_template) const;

    const JudgeClientConfig& config() const { return cfg_; }

private:
    JudgeClientConfig cfg_;
};

void save_judge_results(const std::filesystem::path& p,
                        const std::vector<JudgeClient::ItemResult>& results);

}  // namespace asuka::metrics
