#ifndef THIP_REMOTE_LABELER_HPP
#define THIP_REMOTE_LABELER_HPP

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "thip/error.hpp"
#include "thip/eventlog.hpp"

namespace thip {

/// Client settings for an external step labeler.
/// Wire protocol: POST {"text": ...} -> 200 {"labels": [...]}.
struct RemoteLabelerConfig {
    std::string endpoint;
    double timeout_seconds = 10.0;
    unsigned max_retries = 3;
    std::optional<std::string> auth_token;
    /// First retry delay; doubled on every further retry.
    double backoff_seconds = 0.05;

    void validate() const {
        if (!(timeout_seconds > 0)) throw Error(Errc::InvalidConfig, "labeler timeout must be positive");
        if (backoff_seconds < 0) throw Error(Errc::InvalidConfig, "labeler backoff must be non-negative");
        if (endpoint.rfind("http://", 0) != 0)
            throw Error(Errc::InvalidConfig, "labeler endpoint must be an http:// URL");
    }
};

namespace detail {

/// Splits "http://host:port/path" into ("http://host:port", "/path").
inline std::pair<std::string, std::string> split_endpoint(const std::string& url) {
    auto host_start = url.find("://");
    host_start = host_start == std::string::npos ? 0 : host_start + 3;
    auto slash = url.find('/', host_start);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

} // namespace detail

inline Trace extract_trace_remote(const std::string& text, const RemoteLabelerConfig& cfg,
                                  std::string case_id) {
    cfg.validate();
    auto [base, path] = detail::split_endpoint(cfg.endpoint);
    httplib::Client client(base);
    auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(cfg.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (cfg.auth_token) client.set_bearer_token_auth(*cfg.auth_token);

    const std::string body = nlohmann::json{{"text", text}}.dump();
    std::string last_failure = "no attempt made";
    for (unsigned attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            auto delay = cfg.backoff_seconds * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_failure = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_failure = "HTTP status " + std::to_string(res->status);
            continue;
        }
        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object())
            throw Error(Errc::LabelerBadResponse, "response body is not a JSON object");
        auto labels = reply.find("labels");
        if (labels == reply.end() || !labels->is_array() || labels->empty())
            throw Error(Errc::LabelerBadResponse, "missing or empty 'labels' field");
        Trace trace(std::move(case_id), {}, text);
        for (const auto& l : *labels) {
            if (!l.is_string() || !is_valid_label(l.get_ref<const std::string&>()))
                throw Error(Errc::LabelerBadResponse, "labels must be non-blank strings");
            trace.push_back(l.get<std::string>());
        }
        return trace;
    }
    throw Error(Errc::LabelerUnavailable, "gave up after " + std::to_string(cfg.max_retries + 1) +
                                              " attempts: " + last_failure);
}

} // namespace thip

#endif // THIP_REMOTE_LABELER_HPP
