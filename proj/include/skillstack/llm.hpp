#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "skillstack/generator.hpp"

namespace skillstack {

struct LlmConfig {
    std::string base_url;                      // scheme://host:port
    std::string path = "/v1/chat/completions"; // chat-completions style endpoint
    std::string model = "default";
    std::string api_key;                       // sent as a bearer token, never logged
    double temperature = 0.0;
    int max_tokens = 2048;
    int timeout_seconds = 60;
    int max_transport_retries = 2;
    std::string log_dir; // when set, request/response bodies are written here
};

// Connection-level failure: wire errors, bad status, protocol-shaped garbage.
// Counted as infrastructure, not as a model failure.
struct LlmTransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Prompt body, in fixed order: skill markdown, task (query, spaces, criteria),
// carried best with its score, feedback items in attempt order, then the
// response-format instructions.
std::string render_prompt(const TaskSpec& task, const SkillSet& skills,
                          const GeneratorSession& session);

// One chat completion against the configured endpoint; returns the assistant
// text and accumulates reported usage into *tokens when given. on_exchange,
// when set, sees each request/response body pair (for caller-side logging).
// Throws LlmTransportError on wire trouble or non-completion-shaped replies.
std::string complete_once(
    const LlmConfig& config, const std::string& prompt, long* tokens = nullptr,
    const std::function<void(const std::string&, const std::string&)>& on_exchange = {});

// First fenced code block's contents, tolerating a language tag after the
// opening fence; a completion that is itself a bare JSON object also counts.
std::optional<std::string> extract_first_json_block(std::string_view completion);

class LlmGenerator : public Generator {
  public:
    explicit LlmGenerator(LlmConfig config) : cfg_(std::move(config)) {}

    // One completion per proposal plus a single re-ask when the reply does
    // not contain a parseable plan; throws LlmTransportError on wire trouble.
    ProposeResult propose(const TaskSpec& task, const SkillSet& skills,
                          const GeneratorSession& session) override;
    std::string_view backend_name() const override { return "llm"; }
    long tokens_used() const override { return tokens_; }

  private:
    std::string complete(const std::string& prompt);
    void log_exchange(const std::string& request_body, const std::string& response_body);

    LlmConfig cfg_;
    int exchange_counter_ = 0;
    long tokens_ = 0;
};

} // namespace skillstack
