#pragma once

#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "coeval/error.hpp"
#include "coeval/workspace.hpp"

namespace coeval {

enum class Role { expert, annotator, viewer };

std::string_view to_string(Role role);
Role parse_role(std::string_view s);

struct ApiSession {
  Role role = Role::viewer;
  std::string actor;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// bearer token -> session
  std::map<std::string, ApiSession> tokens;
};

/// Reads {"host", "port", "tokens": {"<token>": {"role", "actor"}}}.
ServiceConfig parse_service_config(const nlohmann::json& j);

/// HTTP status used for an error code in the JSON error envelope.
int http_status_for(Errc code);
nlohmann::json error_envelope(const Error& e);

/// JSON/HTTP front end over a Workspace. Long model batches run on
/// background threads (202 + polling + server-sent events).
class Service {
 public:
  Service(Workspace& workspace, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds (port 0 = any free port) and serves on a background thread.
  int start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();
  /// Waits for background draft and run jobs to finish.
  void wait_idle();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coeval
