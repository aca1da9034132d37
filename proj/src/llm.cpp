#include "skillstack/llm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace skillstack {

using ordered_json = nlohmann::ordered_json;

std::string render_prompt(const TaskSpec& task, const SkillSet& skills,
                          const GeneratorSession& session) {
    const ordered_json task_doc = ordered_json::parse(serialize_task(task));

    std::string prompt;
    prompt += render_skill(skills);
    prompt += "\n## Task\n\n";
    prompt += task.query;
    prompt += "\n\nDesign space:\n```json\n";
    prompt += task_doc.at("design_space").dump(2);
    prompt += "\n```\n\nCriteria:\n```json\n";
    prompt += task_doc.at("gt_eval").at("criteria").dump(2);
    prompt += "\n```\n";

    if (session.carried_best) {
        prompt += "\n## Best candidate so far (carried from round " +
                  std::to_string(session.round_index - 1) + ")\n\n```json\n";
        prompt += serialize_plan(session.carried_best->plan);
        prompt += "\n```\n\nIts scores: sg=" + std::to_string(session.carried_best->report.sg) +
                  " cpf=" + std::to_string(session.carried_best->report.cpf) +
                  " bm=" + std::to_string(session.carried_best->report.bm) + ", margins [";
        const auto& outcomes = session.carried_best->report.outcomes;
        for (std::size_t i = 0; i < outcomes.size(); ++i)
            prompt += (i ? ", " : "") + std::to_string(outcomes[i].normalized_margin);
        prompt += "]\n";
    }
    if (!session.carried_errors.empty()) {
        prompt += "\n## Errors last round\n\n";
        for (const auto& [category, count] : session.carried_errors)
            prompt += "- " + category + ": " + std::to_string(count) + "\n";
    }

    prompt += "\n## Feedback this round\n\n";
    if (session.feedback_log.empty()) {
        prompt += "(none yet)\n";
    } else {
        for (const FeedbackItem& item : session.feedback_log)
            prompt += "- " + serialize_feedback(item) + "\n";
    }

    prompt += "\n## Instructions\n\n";
    prompt += "Propose an optimization plan for round " + std::to_string(session.round_index) +
              ", attempt " + std::to_string(session.attempt_index) +
              ". Reply with exactly one fenced JSON block shaped like\n"
              "{\"strategy_note\": str, \"init\": {\"kind\": "
              "\"midpoint\"|\"random_uniform\"|\"explicit\", ...}, "
              "\"optimizer\": {\"learning_rate\": num, \"steps\": int, \"restarts\": int, "
              "\"max_step\": num}, \"loss_terms\": [{\"criterion_index\": int}, ...], "
              "\"projection\": true}.\n"
              "Cover every criterion with exactly one loss term.\n";
    return prompt;
}

std::optional<std::string> extract_first_json_block(std::string_view completion) {
    const auto fence = completion.find("```");
    if (fence != std::string_view::npos) {
        auto start = completion.find('\n', fence);
        if (start == std::string_view::npos) return std::nullopt;
        ++start;
        const auto end = completion.find("```", start);
        if (end == std::string_view::npos) return std::nullopt;
        std::string_view block = completion.substr(start, end - start);
        while (!block.empty() && (block.back() == '\n' || block.back() == '\r'))
            block.remove_suffix(1);
        return std::string(block);
    }
    // bare-object replies are accepted too
    const auto first = completion.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && completion[first] == '{')
        return std::string(completion.substr(first));
    return std::nullopt;
}

void LlmGenerator::log_exchange(const std::string& request_body,
                                const std::string& response_body) {
    if (cfg_.log_dir.empty()) return;
    std::filesystem::create_directories(cfg_.log_dir);
    char name[32];
    std::snprintf(name, sizeof name, "%03d_request.json", exchange_counter_);
    std::ofstream(std::filesystem::path(cfg_.log_dir) / name) << request_body;
    std::snprintf(name, sizeof name, "%03d_response.json", exchange_counter_);
    std::ofstream(std::filesystem::path(cfg_.log_dir) / name) << response_body;
    ++exchange_counter_;
}

std::string complete_once(
    const LlmConfig& config, const std::string& prompt, long* tokens,
    const std::function<void(const std::string&, const std::string&)>& on_exchange) {
    httplib::Client client(config.base_url);
    client.set_connection_timeout(config.timeout_seconds);
    client.set_read_timeout(config.timeout_seconds);
    if (!config.api_key.empty()) client.set_bearer_token_auth(config.api_key);

    const ordered_json body{
        {"model", config.model},
        {"messages", ordered_json::array({ordered_json{{"role", "user"}, {"content", prompt}}})},
        {"temperature", config.temperature},
        {"max_tokens", config.max_tokens}};
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config.max_transport_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(200 << (attempt - 1)));
        auto res = client.Post(config.path, payload, "application/json");
        if (!res) {
            last_error = "connection failure: " + httplib::to_string(res.error());
            continue;
        }
        if (on_exchange) on_exchange(payload, res->body);
        if (res->status < 200 || res->status >= 300) {
            last_error = "endpoint returned status " + std::to_string(res->status);
            if (res->status >= 500) continue; // server hiccups are worth retrying
            throw LlmTransportError(last_error);
        }
        try {
            const auto doc = ordered_json::parse(res->body);
            if (tokens && doc.contains("usage") && doc["usage"].is_object() &&
                doc["usage"].contains("total_tokens") && doc["usage"]["total_tokens"].is_number())
                *tokens += doc["usage"]["total_tokens"].get<long>();
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw LlmTransportError(std::string("response body is not chat-completion shaped: ") +
                                    e.what());
        }
    }
    throw LlmTransportError(last_error.empty() ? "no response from endpoint" : last_error);
}

std::string LlmGenerator::complete(const std::string& prompt) {
    return complete_once(cfg_, prompt, &tokens_,
                         [this](const std::string& req, const std::string& res) {
                             log_exchange(req, res);
                         });
}

ProposeResult LlmGenerator::propose(const TaskSpec& task, const SkillSet& skills,
                                    const GeneratorSession& session) {
    std::string prompt = render_prompt(task, skills, session);
    std::string parse_failure;
    for (int ask = 0; ask < 2; ++ask) {
        if (ask == 1) {
            prompt += "\n## Retry\n\nYour previous reply could not be used: " + parse_failure +
                      ". Reply with ONLY one fenced JSON block.\n";
        }
        const std::string completion = complete(prompt);
        const auto block = extract_first_json_block(completion);
        if (!block) {
            parse_failure = "no fenced JSON block found";
            continue;
        }
        try {
            return parse_plan(*block);
        } catch (const PlanParseError& e) {
            parse_failure = e.what();
        }
    }
    return NoPlan{"completion did not contain a usable plan: " + parse_failure};
}

} // namespace skillstack
