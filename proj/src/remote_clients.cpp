#include "featurescope/embedding.hpp"
#include "featurescope/retrieval.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>

namespace featurescope {

namespace {

using nlohmann::json;

json post_json(const RemoteServiceConfig& cfg, const json& body) {
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout_seconds, 0);
    client.set_read_timeout(cfg.timeout_seconds, 0);
    client.set_write_timeout(cfg.timeout_seconds, 0);
    httplib::Headers headers;
    if (!cfg.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg.api_key_env.c_str()); key != nullptr && *key != '\0')
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(cfg.path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorCode::retryable, "remote service unreachable", cfg.base_url + ": " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        fail(ErrorCode::retryable, "remote service returned " + std::to_string(res->status), res->body.substr(0, 200));
    if (res->status != 200)
        fail(ErrorCode::unavailable, "remote service returned " + std::to_string(res->status), res->body.substr(0, 200));
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) fail(ErrorCode::retryable, "remote service returned malformed JSON");
    return parsed;
}

}  // namespace

RemoteEmbedder::RemoteEmbedder(RemoteServiceConfig config, int dimension)
    : config_(std::move(config)), dimension_(dimension) {
    if (dimension < 1) fail(ErrorCode::invalid_argument, "embedding dimension must be >= 1");
    if (config_.base_url.empty()) fail(ErrorCode::invalid_argument, "remote embedder needs a base URL");
}

VectorF RemoteEmbedder::embed(std::string_view text) const {
    if (text.empty()) fail(ErrorCode::invalid_argument, "cannot embed empty text");
    const json reply = post_json(config_, {{"model", config_.model}, {"input", std::string(text)}});
    const auto data = reply.find("data");
    if (data == reply.end() || !data->is_array() || data->empty() || !(*data)[0].contains("embedding"))
        fail(ErrorCode::retryable, "remote embedding reply has no data[0].embedding");
    const auto& values = (*data)[0]["embedding"];
    if (!values.is_array() || static_cast<int>(values.size()) != dimension_)
        fail(ErrorCode::shape_mismatch, "remote embedding has unexpected dimension",
             std::to_string(values.size()) + " vs " + std::to_string(dimension_));
    VectorF out(dimension_);
    for (int i = 0; i < dimension_; ++i) {
        if (!values[static_cast<std::size_t>(i)].is_number())
            fail(ErrorCode::retryable, "remote embedding contains a non-number");
        out(i) = values[static_cast<std::size_t>(i)].get<float>();
    }
    if (!out.allFinite() || out.norm() == 0.0f) fail(ErrorCode::retryable, "remote embedding is degenerate");
    return out;
}

RemoteRewriter::RemoteRewriter(RemoteServiceConfig config, std::string prompt_template)
    : config_(std::move(config)), prompt_template_(std::move(prompt_template)) {
    if (prompt_template_.find("{query}") == std::string::npos)
        fail(ErrorCode::invalid_argument, "rewrite prompt must contain {query}");
}

Rewrite RemoteRewriter::rewrite(const std::string& raw_text) const {
    if (raw_text.find_first_not_of(" \t\r\n") == std::string::npos)
        fail(ErrorCode::invalid_argument, "query text is empty");
    std::string prompt = prompt_template_;
    prompt.replace(prompt.find("{query}"), 7, raw_text);
    try {
        const json reply = post_json(
            config_, {{"model", config_.model}, {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}});
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        std::string text = content.get<std::string>();
        const auto b = text.find_first_not_of(" \t\r\n\"");
        const auto e = text.find_last_not_of(" \t\r\n\"");
        if (b == std::string::npos) return {raw_text, true};
        return {text.substr(b, e - b + 1), false};
    } catch (const std::exception&) {
        return {raw_text, true};
    }
}

}  // namespace featurescope
