#pragma once

#include <chrono>
#include <map>
#include <string>

#include <json.hpp>

namespace care::http {

struct Url {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;              // e.g. "/v1/chat/completions"
};

/// Splits an absolute http(s) URL; throws InvalidArgument otherwise.
Url parse_url(const std::string& url);

/// POSTs a JSON body and parses the JSON reply. Network failures and HTTP
/// status >= 400 raise RemoteUnavailable (with a body excerpt); timeouts raise
/// Timeout.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::milliseconds timeout);

}  // namespace care::http
