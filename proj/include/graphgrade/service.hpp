#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace graphgrade::service {

struct ServiceConfig {
  std::filesystem::path dataset_root;
  std::string token;             // empty disables the X-Grader-Token check
  std::string cors_origin = "*";
  std::string host = "127.0.0.1";
};

/// HTTP/JSON annotation API over one dataset. Holds the dataset writer lock while alive.
class Server {
 public:
  explicit Server(ServiceConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(int port);
  /// Serves until stop(); call after bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace graphgrade::service
