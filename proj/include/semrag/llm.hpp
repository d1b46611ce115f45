#pragma once

#include "semrag/error.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace semrag {

struct LlmRequest {
    std::string system;
    std::string prompt;
    int max_tokens = 1024;
    double temperature = 0.0; // pipeline-internal calls always pass 0
};

struct LlmConfig {
    enum class Kind { stub, remote };
    Kind kind = Kind::stub;
    std::string endpoint_url;
    std::string model_name = "stub-chat";
    int timeout_ms = 60000;
    int max_in_flight = 4;       // bounded concurrent remote requests
    int max_retries = 3;         // transport failures only
    std::string script_path;     // stub: optional rule script (JSON)
    std::string stub_mode = "script"; // "script" or "echo"

    void validate() const;
};

class LlmClient {
public:
    virtual ~LlmClient() = default;

    /// Returns the completion text. Deterministic for the stub. Throws
    /// ProviderError on transport failure (after retries) or empty response.
    virtual std::string complete(const LlmRequest& req) = 0;

    virtual std::string identity() const = 0;
};

/// One scripted response rule. `match` is a literal substring unless `regex`
/// is set, in which case it is an ECMAScript pattern searched in the text.
/// Rules are checked against system + "\n" + prompt; first match wins.
/// "$PROMPT" inside `response` expands to the request prompt.
struct StubRule {
    std::string match;
    std::string response;
    bool regex = false;
};

struct StubScript {
    enum class Mode { script, echo };
    Mode mode = Mode::script;
    std::vector<StubRule> rules;
    std::string default_response = "Insufficient information.";

    /// Loads {"mode": "script"|"echo", "rules": [{"match","response","regex"?},...],
    /// "default": string} from a JSON file.
    static StubScript load(const std::string& path);
};

class StubLlm final : public LlmClient {
public:
    explicit StubLlm(StubScript script);

    std::string complete(const LlmRequest& req) override;
    std::string identity() const override;

private:
    StubScript script_;
};

class RemoteLlm final : public LlmClient {
public:
    explicit RemoteLlm(LlmConfig config);
    ~RemoteLlm() override;

    std::string complete(const LlmRequest& req) override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::unique_ptr<LlmClient> make_llm(const LlmConfig& config);

} // namespace semrag
