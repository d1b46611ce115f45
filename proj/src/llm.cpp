#include "semrag/llm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <regex>
#include <semaphore>
#include <thread>

namespace semrag {

namespace {

std::string substitute_prompt(std::string text, const std::string& prompt) {
    const std::string token = "$PROMPT";
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), prompt);
        pos += prompt.size();
    }
    return text;
}

} // namespace

void LlmConfig::validate() const {
    if (kind == Kind::remote && endpoint_url.empty()) {
        throw ConfigError("remote llm provider requires endpoint_url");
    }
    if (max_in_flight < 1) throw ConfigError("llm max_in_flight must be >= 1");
    if (max_retries < 0) throw ConfigError("llm max_retries must be >= 0");
    if (stub_mode != "script" && stub_mode != "echo") {
        throw ConfigError("llm stub_mode must be 'script' or 'echo', got '" + stub_mode + "'");
    }
}

StubScript StubScript::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open llm script: " + path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw ConfigError("llm script is not a JSON object: " + path);
    }

    StubScript script;
    if (doc.contains("mode")) {
        const std::string mode = doc["mode"].get<std::string>();
        if (mode == "echo") script.mode = Mode::echo;
        else if (mode == "script") script.mode = Mode::script;
        else throw ConfigError("llm script mode must be 'script' or 'echo', got '" + mode + "'");
    }
    if (doc.contains("default")) script.default_response = doc["default"].get<std::string>();
    if (doc.contains("rules")) {
        if (!doc["rules"].is_array()) throw ConfigError("llm script 'rules' must be an array");
        for (const auto& r : doc["rules"]) {
            if (!r.is_object() || !r.contains("match") || !r.contains("response")) {
                throw ConfigError("llm script rule needs 'match' and 'response': " + path);
            }
            StubRule rule;
            rule.match = r["match"].get<std::string>();
            rule.response = r["response"].get<std::string>();
            if (r.contains("regex")) rule.regex = r["regex"].get<bool>();
            script.rules.push_back(std::move(rule));
        }
    }
    return script;
}

StubLlm::StubLlm(StubScript script) : script_(std::move(script)) {}

std::string StubLlm::complete(const LlmRequest& req) {
    if (script_.mode == StubScript::Mode::echo) {
        if (req.prompt.empty()) throw ProviderError("llm returned empty response");
        return req.prompt;
    }
    const std::string haystack = req.system + "\n" + req.prompt;
    for (const auto& rule : script_.rules) {
        bool hit = false;
        if (rule.regex) {
            hit = std::regex_search(haystack, std::regex(rule.match));
        } else {
            hit = haystack.find(rule.match) != std::string::npos;
        }
        if (hit) {
            std::string out = substitute_prompt(rule.response, req.prompt);
            if (out.empty()) throw ProviderError("llm returned empty response");
            return out;
        }
    }
    if (script_.default_response.empty()) throw ProviderError("llm returned empty response");
    return substitute_prompt(script_.default_response, req.prompt);
}

std::string StubLlm::identity() const {
    return script_.mode == StubScript::Mode::echo
               ? "stub-chat(echo)"
               : "stub-chat(script," + std::to_string(script_.rules.size()) + " rules)";
}

struct RemoteLlm::Impl {
    LlmConfig config;
    std::counting_semaphore<4096> in_flight;

    explicit Impl(LlmConfig cfg)
        : config(std::move(cfg)), in_flight(config.max_in_flight) {}
};

RemoteLlm::RemoteLlm(LlmConfig config) {
    config.validate();
    impl_ = std::make_unique<Impl>(std::move(config));
}

RemoteLlm::~RemoteLlm() = default;

std::string RemoteLlm::identity() const {
    return "remote-chat(" + impl_->config.endpoint_url + "," + impl_->config.model_name + ")";
}

std::string RemoteLlm::complete(const LlmRequest& req) {
    const auto& cfg = impl_->config;

    nlohmann::json body;
    body["model"] = cfg.model_name;
    body["messages"] = nlohmann::json::array();
    if (!req.system.empty()) {
        body["messages"].push_back({{"role", "system"}, {"content", req.system}});
    }
    body["messages"].push_back({{"role", "user"}, {"content", req.prompt}});
    body["options"] = {{"temperature", req.temperature}};
    const std::string payload = body.dump();

    impl_->in_flight.acquire();
    struct Release {
        std::counting_semaphore<4096>& sem;
        ~Release() { sem.release(); }
    } release{impl_->in_flight};

    std::string last_transport_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            // 50ms, 100ms, 200ms, ...
            std::this_thread::sleep_for(std::chrono::milliseconds(50LL << (attempt - 1)));
        }
        httplib::Client client(cfg.endpoint_url);
        client.set_connection_timeout(0, cfg.timeout_ms * 1000);
        client.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
        client.set_write_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);

        auto res = client.Post("/api/chat", payload, "application/json");
        if (!res) {
            last_transport_error = httplib::to_string(res.error());
            continue;
        }
        // A delivered error payload is final; only transport failures retry.
        if (res->status != 200) {
            throw ProviderError("chat request: HTTP " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        }
        auto parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("message") ||
            !parsed["message"].is_object() || !parsed["message"].contains("content") ||
            !parsed["message"]["content"].is_string()) {
            throw ProviderError("chat request: malformed response body");
        }
        std::string content = parsed["message"]["content"].get<std::string>();
        if (content.empty()) throw ProviderError("chat request: empty response content");
        return content;
    }
    throw ProviderError("chat request: transport error after " +
                        std::to_string(cfg.max_retries + 1) + " attempts (" +
                        last_transport_error + ")");
}

std::unique_ptr<LlmClient> make_llm(const LlmConfig& config) {
    config.validate();
    if (config.kind == LlmConfig::Kind::remote) {
        return std::make_unique<RemoteLlm>(config);
    }
    StubScript script;
    if (!config.script_path.empty()) {
        script = StubScript::load(config.script_path);
    }
    if (config.stub_mode == "echo") script.mode = StubScript::Mode::echo;
    return std::make_unique<StubLlm>(std::move(script));
}

} // namespace semrag
