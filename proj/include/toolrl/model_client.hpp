#pragma once

// External model client used by the trajectory-synthesis pipeline: a
// deterministic table-driven mock for tests and a chat-completion endpoint
// client with retries for real runs.

#include <cstdlib>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace toolrl::synth {

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ClientResult {
    bool ok = false;
    std::string text;
    std::string error;  // "timeout", "http-<status>", "script-exhausted", ...
};

class ModelClient {
public:
    virtual ~ModelClient() = default;
    // Pipeline prompts start with a stage marker line such as "[order] ...".
    virtual ClientResult submit(const std::string& prompt,
                                const std::vector<ChatMessage>& context) = 0;
};

// ---------------------------------------------------------------------------
// Table-driven mock. Responses are queued per stage marker and consumed in
// order; a response of "<<error:reason>>" simulates a client failure.

class MockClient : public ModelClient {
public:
    void enqueue(const std::string& marker, std::string response) {
        scripts_[marker].push_back(std::move(response));
    }

    ClientResult submit(const std::string& prompt, const std::vector<ChatMessage>&) override {
        std::string marker = extract_marker(prompt);
        auto it = scripts_.find(marker);
        if (it == scripts_.end() || it->second.empty())
            return {false, "", "script-exhausted"};
        std::string response = std::move(it->second.front());
        it->second.pop_front();
        if (response.rfind("<<error:", 0) == 0) {
            std::string reason = response.substr(8);
            if (!reason.empty() && reason.back() == '>') reason.pop_back();
            if (!reason.empty() && reason.back() == '>') reason.pop_back();
            return {false, "", reason};
        }
        return {true, std::move(response), ""};
    }

    static std::string extract_marker(const std::string& prompt) {
        if (prompt.empty() || prompt[0] != '[') return "";
        size_t close = prompt.find(']');
        if (close == std::string::npos) return "";
        std::string inside = prompt.substr(1, close - 1);
        size_t space = inside.find(' ');
        return space == std::string::npos ? inside : inside.substr(0, space);
    }

private:
    std::map<std::string, std::deque<std::string>> scripts_;
};

// ---------------------------------------------------------------------------
// Chat-completion endpoint client. One request per turn; bearer token read
// from an environment variable.

struct RemoteClientConfig {
    std::string base_url = "http://localhost:8080";
    std::string path = "/v1/chat/completions";
    std::string model = "glm-4.5v";
    double temperature = 0.7;
    int timeout_seconds = 30;
    int max_retries = 2;
    std::string token_env_var = "TOOLRL_API_TOKEN";
};

class RemoteClient : public ModelClient {
public:
    explicit RemoteClient(RemoteClientConfig config) : config_(std::move(config)) {}

    ClientResult submit(const std::string& prompt,
                        const std::vector<ChatMessage>& context) override {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& msg : context)
            messages.push_back({{"role", msg.role}, {"content", msg.content}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        nlohmann::json body{{"model", config_.model},
                            {"messages", messages},
                            {"temperature", config_.temperature}};

        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        httplib::Headers headers;
        if (const char* token = std::getenv(config_.token_env_var.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + token);

        std::string last_error = "timeout";
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            auto res = client.Post(config_.path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport-error";
                continue;
            }
            if (res->status >= 500) {
                last_error = "http-" + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) return {false, "", "http-" + std::to_string(res->status)};
            auto parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty())
                return {false, "", "bad-response"};
            const auto& choice = parsed["choices"][0];
            if (!choice.contains("message") || !choice["message"].contains("content"))
                return {false, "", "bad-response"};
            return {true, choice["message"]["content"].get<std::string>(), ""};
        }
        return {false, "", last_error};
    }

private:
    RemoteClientConfig config_;
};

}  // namespace toolrl::synth
