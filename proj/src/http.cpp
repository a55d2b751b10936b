#include "care/http.hpp"

#include <httplib.h>

#include "care/error.hpp"

namespace care::http {

Url parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "not an absolute URL: " + url);
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorCode::InvalidArgument, "unsupported scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  Url out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
    out.path = "/";
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  if (out.scheme_host_port.size() <= scheme_end + 3) throw Error(ErrorCode::InvalidArgument, "missing host: " + url);
  return out;
}

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::milliseconds timeout) {
  const auto u = parse_url(url);
  httplib::Client cli(u.scheme_host_port);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = cli.Post(u.path, h, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write) {
      // httplib reports an expired read/write deadline as a Read/Write error.
      throw Error(ErrorCode::Timeout, "no response from " + url + " (" + httplib::to_string(err) + ")");
    }
    if (err == httplib::Error::ConnectionTimeout) {
      throw Error(ErrorCode::Timeout, "connection to " + url + " timed out");
    }
    throw Error(ErrorCode::RemoteUnavailable, url + ": " + httplib::to_string(err));
  }
  if (res->status >= 400) {
    throw Error(ErrorCode::RemoteUnavailable,
                "HTTP " + std::to_string(res->status) + " from " + url + ": " + res->body.substr(0, 200));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::RemoteUnavailable, "non-JSON reply from " + url + ": " + res->body.substr(0, 200));
  }
}

}  // namespace care::http
