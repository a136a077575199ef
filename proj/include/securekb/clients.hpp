#pragma once

#include "securekb/util.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

namespace securekb {

class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One interface for both the summarizer and the generation model: a prompt
/// in, a text completion out.
class TextClient {
public:
    virtual ~TextClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    virtual std::string name() const = 0;
};

struct ClientConfig {
    std::string kind = "stub";  // stub | http | replay
    std::string base_url;       // http kind; e.g. https://api.example.com/v1
    std::string model;
    std::string api_key_env = "SECUREKB_API_KEY";
    double temperature = 0.2;
    int max_retries = 3;
    int retry_backoff_ms = 500;
    int min_request_interval_ms = 0;  // crude rate limit
    std::string replay_transcript;    // replay kind
    std::string stub_mode = "digest";  // digest | echo | fixed
    std::string stub_text;
};

/// Deterministic offline stand-in. "digest" mode derives a short stable
/// text from the prompt; "echo" returns the prompt; "fixed" returns a
/// configured constant.
class StubClient : public TextClient {
public:
    explicit StubClient(std::string mode = "digest", std::string fixed_text = "")
        : mode_(std::move(mode)), fixed_(std::move(fixed_text))
    {
    }

    std::string complete(const std::string& prompt) override
    {
        if (mode_ == "echo") {
            return prompt;
        }
        if (mode_ == "fixed") {
            return fixed_;
        }
        return "stub:" + to_hex(fnv1a64(prompt));
    }

    std::string name() const override { return "stub:" + mode_; }

private:
    std::string mode_;
    std::string fixed_;
};

/// Replays a recorded transcript: responses are looked up by exact prompt,
/// consuming duplicates in recorded order.
class ReplayClient : public TextClient {
public:
    explicit ReplayClient(const std::filesystem::path& transcript_path)
    {
        std::ifstream in(transcript_path, std::ios::binary);
        if (!in) {
            throw ClientError("cannot open transcript: " + transcript_path.string());
        }
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) {
                continue;
            }
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                continue;
            }
            responses_[j.at("prompt").get<std::string>()].push_back(
                j.at("response").get<std::string>());
        }
    }

    std::string complete(const std::string& prompt) override
    {
        auto it = responses_.find(prompt);
        if (it == responses_.end() || it->second.empty()) {
            throw ClientError("transcript has no response for prompt");
        }
        std::string response = it->second.front();
        it->second.pop_front();
        return response;
    }

    std::string name() const override { return "replay"; }

private:
    std::map<std::string, std::deque<std::string>> responses_;
};

/// Wraps a client and logs every exchange as JSONL for audits and replay
/// builds.
class TranscriptRecorder : public TextClient {
public:
    TranscriptRecorder(std::unique_ptr<TextClient> inner, std::filesystem::path path)
        : inner_(std::move(inner)), path_(std::move(path))
    {
        std::filesystem::create_directories(path_.parent_path());
    }

    std::string complete(const std::string& prompt) override
    {
        std::string response = inner_->complete(prompt);
        auto now = std::chrono::system_clock::now().time_since_epoch();
        long ms = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
        nlohmann::json j{{"index", index_++},
                         {"prompt", prompt},
                         {"response", response},
                         {"timestamp_ms", ms}};
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << j.dump() << '\n';
        return response;
    }

    std::string name() const override { return inner_->name(); }

private:
    std::unique_ptr<TextClient> inner_;
    std::filesystem::path path_;
    int index_ = 0;
};

/// Retries transient failures with linear backoff; an empty response is
/// retried once before giving up.
class RetryingClient : public TextClient {
public:
    RetryingClient(std::unique_ptr<TextClient> inner, int max_retries, int backoff_ms)
        : inner_(std::move(inner)), max_retries_(max_retries), backoff_ms_(backoff_ms)
    {
    }

    std::string complete(const std::string& prompt) override
    {
        int empty_retries = 0;
        for (int attempt = 0;; ++attempt) {
            try {
                std::string response = inner_->complete(prompt);
                if (response.empty() && empty_retries == 0) {
                    ++empty_retries;
                    continue;
                }
                if (response.empty()) {
                    throw ClientError("empty response after retry");
                }
                return response;
            } catch (const ClientError&) {
                if (attempt >= max_retries_) {
                    throw;
                }
                if (backoff_ms_ > 0) {
                    std::this_thread::sleep_for(
                        std::chrono::milliseconds(backoff_ms_ * (attempt + 1)));
                }
            }
        }
    }

    std::string name() const override { return inner_->name(); }

private:
    std::unique_ptr<TextClient> inner_;
    int max_retries_;
    int backoff_ms_;
};

/// OpenAI-style chat completions endpoint. Credentials come from the
/// environment only; they never appear in configs or transcripts.
class HttpChatClient : public TextClient {
public:
    explicit HttpChatClient(ClientConfig config) : config_(std::move(config))
    {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key != nullptr) {
            api_key_ = key;
        }
        const char* base = std::getenv("SECUREKB_API_BASE");
        if (config_.base_url.empty() && base != nullptr) {
            config_.base_url = base;
        }
        if (config_.base_url.empty()) {
            throw ClientError("http client requires a base URL "
                              "(config or SECUREKB_API_BASE)");
        }
    }

    std::string complete(const std::string& prompt) override;

    std::string name() const override { return "http:" + config_.model; }

private:
    ClientConfig config_;
    std::string api_key_;
    std::chrono::steady_clock::time_point last_request_{};
};

/// Builds the configured client stack (transport + retry policy).
inline std::unique_ptr<TextClient> make_client(const ClientConfig& config)
{
    std::unique_ptr<TextClient> base;
    if (config.kind == "stub") {
        base = std::make_unique<StubClient>(config.stub_mode, config.stub_text);
    } else if (config.kind == "replay") {
        base = std::make_unique<ReplayClient>(config.replay_transcript);
    } else if (config.kind == "http") {
        base = std::make_unique<HttpChatClient>(config);
    } else {
        throw ClientError("unknown client kind: " + config.kind);
    }
    return std::make_unique<RetryingClient>(std::move(base), config.max_retries,
                                            config.retry_backoff_ms);
}

}  // namespace securekb

// httplib pulls in a large header; keep it out of the common include path
// unless the HTTP client is actually linked in.
#ifndef SECUREKB_NO_HTTP
#include <httplib.h>

namespace securekb {

inline std::string HttpChatClient::complete(const std::string& prompt)
{
    if (config_.min_request_interval_ms > 0) {
        auto now = std::chrono::steady_clock::now();
        auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(now - last_request_);
        if (elapsed.count() < config_.min_request_interval_ms) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                config_.min_request_interval_ms - elapsed.count()));
        }
    }
    last_request_ = std::chrono::steady_clock::now();

    std::string url = config_.base_url;
    std::string path = "/chat/completions";
    std::string host = url;
    if (auto scheme = host.find("://"); scheme != std::string::npos) {
        host = host.substr(scheme + 3);
    }
    if (auto slash = host.find('/'); slash != std::string::npos) {
        path = host.substr(slash) + path;
        host = host.substr(0, slash);
    }

    nlohmann::json body{{"model", config_.model},
                        {"temperature", config_.temperature},
                        {"messages", nlohmann::json::array({nlohmann::json{
                                         {"role", "user"}, {"content", prompt}}})}};
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }

    bool https = url.rfind("https://", 0) == 0;
    auto do_post = [&](auto& client) -> std::string {
        client.set_read_timeout(120, 0);
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            throw ClientError("request failed: " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw ClientError("endpoint returned status " + std::to_string(res->status));
        }
        nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw ClientError("endpoint returned malformed JSON");
        }
        try {
            return parsed.at("choices").at(0).at("message").at("content")
                .get<std::string>();
        } catch (const std::exception&) {
            throw ClientError("unexpected response shape");
        }
    };
    if (https) {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
        httplib::SSLClient client(host);
        return do_post(client);
#else
        throw ClientError("https endpoints require TLS support in this build");
#endif
    }
    httplib::Client client(host);
    return do_post(client);
}

}  // namespace securekb
#endif  // SECUREKB_NO_HTTP
