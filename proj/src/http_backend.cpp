#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "amaris/judge.hpp"
#include "amaris/memory.hpp"

namespace amaris {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    size_t scheme = base_url.find("://");
    size_t path = scheme == std::string::npos ? base_url.find('/') : base_url.find('/', scheme + 3);
    if (path == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path), prefix};
}

}  // namespace

HttpGatewayConfig HttpGatewayConfig::from_env() {
    HttpGatewayConfig c;
    c.base_url = env_or("AMARIS_JUDGE_BASE_URL", "");
    c.api_key = env_or("AMARIS_JUDGE_API_KEY", "");
    c.model = env_or("AMARIS_JUDGE_MODEL", c.model);
    const std::string scorer_model = env_or("AMARIS_JUDGE_MODEL_SCORER", "");
    if (!scorer_model.empty()) {
        c.model_overrides[JudgeRole::scorer] = scorer_model;
        c.model_overrides[JudgeRole::analyst] = scorer_model;  // scoring-tier model
    }
    const std::string updater_model = env_or("AMARIS_JUDGE_MODEL_UPDATER", "");
    if (!updater_model.empty()) c.model_overrides[JudgeRole::updater] = updater_model;
    return c;
}

struct HttpGateway::Impl {
    std::string origin;
    std::string path_prefix;
    std::mutex mu;
    std::condition_variable cv;
    int in_flight = 0;
};

HttpGateway::HttpGateway(HttpGatewayConfig config) : config_(std::move(config)), impl_(new Impl) {
    if (config_.base_url.empty()) throw Error("backend_unreachable", "no judge base url configured");
    std::tie(impl_->origin, impl_->path_prefix) = split_base_url(config_.base_url);
}

HttpGateway::~HttpGateway() = default;

void HttpGateway::backoff(int attempt) {
    int ms = config_.backoff_base_ms;
    for (int i = 1; i < attempt; ++i) ms *= 2;
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

json HttpGateway::invoke_once(JudgeRole role, const json& payload) {
    {
        std::unique_lock<std::mutex> lock(impl_->mu);
        impl_->cv.wait(lock, [&] { return impl_->in_flight < config_.max_in_flight; });
        ++impl_->in_flight;
    }
    struct Release {
        Impl* impl;
        ~Release() {
            std::lock_guard<std::mutex> lock(impl->mu);
            --impl->in_flight;
            impl->cv.notify_one();
        }
    } release{impl_.get()};

    std::string model = config_.model;
    if (auto it = config_.model_overrides.find(role); it != config_.model_overrides.end()) model = it->second;

    json body{{"model", model},
              {"messages",
               {{{"role", "system"}, {"content", "You are a precise evaluation component. Reply with one JSON object."}},
                {{"role", "user"}, {"content", render_payload_prompt(role, payload)}}}},
              {"temperature", config_.temperature}};

    httplib::Client client(impl_->origin);
    client.set_connection_timeout(config_.timeout_sec);
    client.set_read_timeout(config_.timeout_sec);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(impl_->path_prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw Error("backend_unreachable", "POST " + config_.base_url + "/chat/completions failed");
    if (res->status < 200 || res->status >= 300)
        throw Error("backend_unreachable", "judge returned HTTP " + std::to_string(res->status));

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const std::exception& e) {
        throw Error("malformed", std::string("judge reply is not JSON: ") + e.what());
    }
    const std::string content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    return parse_stage_output(role, content);
}

RemoteEmbedder::RemoteEmbedder(std::string base_url, std::string api_key, std::string model, size_t dimension)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), model_(std::move(model)), dim_(dimension) {}

std::vector<float> RemoteEmbedder::embed(const std::string& text) const {
    auto [origin, prefix] = split_base_url(base_url_);
    httplib::Client client(origin);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    json body{{"model", model_}, {"input", json::array({text})}};
    auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!res || res->status < 200 || res->status >= 300)
        throw Error("backend_unreachable", "embedding request failed");
    json reply = json::parse(res->body);
    std::vector<float> v = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
    if (v.size() != dim_) throw Error("schema_mismatch", "embedding dimension mismatch from remote embedder");
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (float& x : v) x = static_cast<float>(x / norm);
    }
    return v;
}

}  // namespace amaris
