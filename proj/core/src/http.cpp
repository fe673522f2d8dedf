#include "arl/http.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "arl/common.hpp"

namespace arl {

using nlohmann::json;

struct HttpFrontend::Impl {
  Service& service;
  httplib::Server server;
  std::thread worker;
  std::atomic<bool> stopping{false};
  bool bound = false;

  explicit Impl(Service& s) : service(s) {}
};

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(100);
constexpr int kKeepAlivePolls = 150;

std::uint64_t parse_after(const httplib::Request& req) {
  std::string raw;
  if (req.has_param("after")) raw = req.get_param_value("after");
  else if (req.has_header("Last-Event-ID")) raw = req.get_header_value("Last-Event-ID");
  if (raw.empty()) return 0;
  try {
    return std::stoull(raw);
  } catch (const std::exception&) {
    return 0;
  }
}

std::string sse_frame(const json& event) {
  return "id: " + std::to_string(event["seq"].get<std::uint64_t>()) + "\nevent: " + event["type"].get<std::string>() +
         "\ndata: " + event.dump() + "\n\n";
}

}  // namespace

HttpFrontend::HttpFrontend(Service& service, std::string static_dir) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  Impl* self = impl_.get();

  srv.Post("/api/message", [self](const httplib::Request& req, httplib::Response& res) {
    const json reply = self->service.handle_text(req.body);
    res.status = reply.value("type", std::string()) == "error" &&
                         reply["payload"].value("code", std::string()) == wire_error::malformed
                     ? 400
                     : 200;
    res.set_content(reply.dump(), "application/json");
  });

  srv.Get("/api/metrics", [self](const httplib::Request&, httplib::Response& res) {
    res.set_content(self->service.metrics().dump(), "application/json");
  });

  // ?once=1 drains what is already queued and closes, for clients that cannot hold a stream open.
  srv.Get("/api/events", [self](const httplib::Request& req, httplib::Response& res) {
    const std::string session = req.has_param("session_id") ? req.get_param_value("session_id") : "";
    auto cursor = std::make_shared<std::uint64_t>(parse_after(req));
    res.set_header("Cache-Control", "no-cache");
    if (req.has_param("once")) {
      std::string body;
      for (const auto& e : self->service.events_after(*cursor, session)) body += sse_frame(e);
      res.set_content(body, "text/event-stream");
      return;
    }
    auto idle = std::make_shared<int>(0);
    res.set_chunked_content_provider("text/event-stream", [self, session, cursor, idle](std::size_t, httplib::DataSink& sink) {
      if (self->stopping) return false;
      const auto events = self->service.events_after(*cursor, session);
      for (const auto& e : events) {
        const std::string frame = sse_frame(e);
        if (!sink.write(frame.data(), frame.size())) return false;
        *cursor = e["seq"].get<std::uint64_t>();
      }
      if (events.empty()) {
        if (++*idle >= kKeepAlivePolls) {
          *idle = 0;
          static const std::string ping = ": keep-alive\n\n";
          if (!sink.write(ping.data(), ping.size())) return false;
        }
        std::this_thread::sleep_for(kPollInterval);
      }
      return !self->stopping.load();
    });
  });

  if (!static_dir.empty()) {
    if (!std::filesystem::is_directory(static_dir)) throw ValidationError("static directory not found: " + static_dir);
    srv.set_mount_point("/", static_dir);
  }
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("could not bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  return bound;
}

void HttpFrontend::run() {
  if (!impl_->bound) throw Error("bind() before run()");
  impl_->server.listen_after_bind();
}

void HttpFrontend::start() {
  if (!impl_->bound) throw Error("bind() before start()");
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpFrontend::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace arl
