#pragma once

// HTTP transport for Service. Requests travel as JSON over POST /api/message (one response envelope
// per request); server-initiated events stream over GET /api/events as server-sent events, each
// `data:` line carrying one envelope and `id:` its sequence number so clients can resume with
// Last-Event-ID or ?after=N. GET /api/metrics returns the aggregates. Anything else is served from
// an optional static directory.

#include <memory>
#include <string>

#include "arl/service.hpp"

namespace arl {

class HttpFrontend {
 public:
  explicit HttpFrontend(Service& service, std::string static_dir = {});
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Binds without serving; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call bind() first.
  void run();
  /// run() on a background thread; returns once the server accepts connections.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace arl
