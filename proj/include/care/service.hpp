#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "care/error.hpp"
#include "care/pipeline.hpp"

namespace care {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// HTTP status for an error code: 400 validation, 404 not found,
/// 409 zero-probability evidence, 502 remote failure, 500 otherwise.
int http_status(ErrorCode code);

/// JSON API over a pipeline handle. dispatch() holds all routing so the
/// socket server and in-process callers share one code path.
class Service {
 public:
  explicit Service(std::shared_ptr<const PipelineHandle> handle);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::shared_ptr<const PipelineHandle> handle() const;
  /// Replaces the handle; requests already running keep the old one.
  void swap(std::shared_ptr<const PipelineHandle> next);

  ServiceResponse dispatch(const std::string& method, const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& params = {});

  /// Binds and serves until stop(). port 0 picks a free port (see port()).
  /// Throws BindFailure.
  void bind(const std::string& host, int port);
  void serve();
  void stop();
  int port() const { return port_; }

 private:
  ServiceResponse route(const std::shared_ptr<const PipelineHandle>& h, const std::string& method,
                        const std::string& path, const nlohmann::json& body,
                        const std::map<std::string, std::string>& params);

  mutable std::mutex mu_;
  std::shared_ptr<const PipelineHandle> handle_;
  struct Server;
  std::unique_ptr<Server> server_;
  int port_ = 0;
};

}  // namespace care
