// Copyright 2026 The pushmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Websocket / HTTP front end of the live session. One io thread owns all
// sockets; one sim thread owns the SessionEngine. They meet only through the
// engine's command queue (io -> sim) and posted frame deliveries (sim -> io).

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/version.hpp>
#include <boost/beast/websocket.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <thread>

#include "pushmpc/service.hpp"

namespace pushmpc {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

std::string_view mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

}  // namespace

struct SessionServer::Impl {
  class WsSession;
  class HttpSession;

  Impl(SimConfig config, ServiceOptions opts)
      : options(std::move(opts)), engine(std::move(config)) {}

  ServiceOptions options;
  SessionEngine engine;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::thread sim_thread;

  std::mutex mutex;  // guards subscribers, stop_requested, callback
  std::condition_variable cv;
  std::vector<std::weak_ptr<WsSession>> subscribers;
  bool stop_requested = false;
  bool started = false;
  std::function<void(const Snapshot&)> callback;

  std::atomic<std::uint64_t> periods{0}, overruns{0}, frames_sent{0}, frames_dropped{0},
      clients{0}, bad_commands{0};
  std::atomic<double> last_t{0.0};

  void accept();
  void subscribe(const std::shared_ptr<WsSession>& s);
  void unsubscribe(const WsSession* s);
  void broadcast(const std::shared_ptr<const std::string>& frame);
  void sim_loop();
  std::string stats_json() const;

  void request_stop() {
    {
      std::lock_guard lock(mutex);
      stop_requested = true;
    }
    cv.notify_all();
  }
};

class SessionServer::Impl::WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Impl& impl) : ws_(std::move(socket)), impl_(impl) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->impl_.subscribe(self);
      self->read();
    });
  }

  /// Thread-safe: hands a frame to the io thread. Never blocks the caller.
  void deliver(std::shared_ptr<const std::string> frame) {
    net::post(ws_.get_executor(), [self = shared_from_this(), frame = std::move(frame)] {
      self->enqueue(frame);
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->impl_.unsubscribe(self.get());
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      try {
        self->impl_.engine.enqueue(decode_command(text));
      } catch (const CommandError& e) {
        ++self->impl_.bad_commands;
        nlohmann::json err{{"v", kSnapshotVersion}, {"error", e.what()}};
        self->enqueue(std::make_shared<const std::string>(err.dump()));
      }
      self->read();
    });
  }

  void enqueue(const std::shared_ptr<const std::string>& frame) {
    if (closed_) return;
    if (queue_.size() >= impl_.options.max_client_queue) {
      ++dropped_;
      ++impl_.frames_dropped;
      return;
    }
    queue_.push_back(frame);
    if (!writing_) write();
  }

  void write() {
    writing_ = true;
    ws_.async_write(net::buffer(*queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->closed_ = true;
                        self->queue_.clear();
                        self->impl_.unsubscribe(self.get());
                        return;
                      }
                      ++self->impl_.frames_sent;
                      self->queue_.pop_front();
                      if (self->queue_.empty()) {
                        self->writing_ = false;
                      } else {
                        self->write();
                      }
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  Impl& impl_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool writing_ = false;
  bool closed_ = false;
  std::uint64_t dropped_ = 0;
};

class SessionServer::Impl::HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (!ec) self->handle();
                     });
  }

 private:
  template <typename Body>
  void send(http::response<Body>&& res) {
    auto sp = std::make_shared<http::response<Body>>(std::move(res));
    sp->set(http::field::server, "pushmpc");
    sp->keep_alive(false);
    sp->prepare_payload();
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  void text(http::status status, std::string_view content_type, std::string body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, std::string(content_type));
    res.body() = std::move(body);
    send(std::move(res));
  }

  void handle() {
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), impl_)->run(std::move(req_));
      } else {
        text(http::status::not_found, "text/plain", "websocket endpoint is /ws\n");
      }
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      text(http::status::method_not_allowed, "text/plain", "GET only\n");
      return;
    }
    if (target == "/stats") {
      text(http::status::ok, "application/json", impl_.stats_json());
      return;
    }
    serve_static(target);
  }

  void serve_static(std::string target) {
    if (impl_.options.static_dir.empty()) {
      text(http::status::not_found, "text/plain", "no static bundle configured\n");
      return;
    }
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos) {
      text(http::status::bad_request, "text/plain", "bad path\n");
      return;
    }
    std::filesystem::path path = impl_.options.static_dir / target.substr(1);
    if (target.back() == '/') path /= "index.html";
    http::file_body::value_type body;
    beast::error_code ec;
    body.open(path.string().c_str(), beast::file_mode::scan, ec);
    if (ec) {
      text(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    http::response<http::file_body> res{std::piecewise_construct, std::make_tuple(std::move(body)),
                                        std::make_tuple(http::status::ok, req_.version())};
    res.set(http::field::content_type, std::string(mime_type(path)));
    send(std::move(res));
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Impl& impl_;
};

void SessionServer::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), *this)->run();
    accept();
  });
}

void SessionServer::Impl::subscribe(const std::shared_ptr<WsSession>& s) {
  {
    std::lock_guard lock(mutex);
    subscribers.push_back(s);
    clients = subscribers.size();
  }
  cv.notify_all();
}

void SessionServer::Impl::unsubscribe(const WsSession* s) {
  std::lock_guard lock(mutex);
  std::erase_if(subscribers, [s](const std::weak_ptr<WsSession>& w) {
    const auto p = w.lock();
    return !p || p.get() == s;
  });
  clients = subscribers.size();
}

void SessionServer::Impl::broadcast(const std::shared_ptr<const std::string>& frame) {
  std::vector<std::shared_ptr<WsSession>> targets;
  {
    std::lock_guard lock(mutex);
    for (const auto& w : subscribers) {
      if (auto p = w.lock()) targets.push_back(std::move(p));
    }
  }
  for (const auto& s : targets) s->deliver(frame);
}

void SessionServer::Impl::sim_loop() {
  using clock = std::chrono::steady_clock;
  if (options.wait_for_client) {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return stop_requested || !subscribers.empty(); });
    if (stop_requested) return;
  }
  const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(engine.loop().config().mpc.h / options.speed));
  auto deadline = clock::now() + period;
  for (;;) {
    {
      std::lock_guard lock(mutex);
      if (stop_requested) return;
    }
    const Snapshot snap = engine.tick();
    ++periods;
    last_t = snap.t;
    {
      std::function<void(const Snapshot&)> cb;
      {
        std::lock_guard lock(mutex);
        cb = callback;
      }
      if (cb) cb(snap);
    }
    broadcast(std::make_shared<const std::string>(encode_snapshot(snap)));

    // Late periods run late rather than skipping physics.
    const auto now = clock::now();
    if (now > deadline) {
      ++overruns;
      deadline = now;
    }
    std::unique_lock lock(mutex);
    cv.wait_until(lock, deadline, [&] { return stop_requested; });
    deadline += period;
  }
}

std::string SessionServer::Impl::stats_json() const {
  nlohmann::json j{{"periods", periods.load()},         {"overruns", overruns.load()},
                   {"frames_sent", frames_sent.load()}, {"frames_dropped", frames_dropped.load()},
                   {"clients", clients.load()},         {"bad_commands", bad_commands.load()},
                   {"t", last_t.load()}};
  return j.dump();
}

SessionServer::SessionServer(SimConfig config, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {
  if (!(impl_->options.speed > 0.0)) throw ParameterError("service speed must be positive");
  if (impl_->options.max_client_queue == 0) throw ParameterError("client queue must be >= 1");
}

SessionServer::~SessionServer() { stop(); }

void SessionServer::start() {
  Impl& im = *impl_;
  if (im.started) return;
  beast::error_code ec;
  const auto address = net::ip::make_address(im.options.address, ec);
  if (ec) throw std::runtime_error("bad listen address '" + im.options.address + "'");
  const tcp::endpoint endpoint{address, im.options.port};
  im.acceptor.open(endpoint.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(endpoint, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw std::runtime_error("cannot listen on " + im.options.address + ":" +
                             std::to_string(im.options.port) + ": " + ec.message());
  }
  im.started = true;
  im.accept();
  im.io_thread = std::thread([&im] { im.ioc.run(); });
  im.sim_thread = std::thread([&im] { im.sim_loop(); });
}

void SessionServer::stop() {
  Impl& im = *impl_;
  if (!im.started) return;
  im.request_stop();
  if (im.sim_thread.joinable()) im.sim_thread.join();
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
    std::vector<std::shared_ptr<Impl::WsSession>> open;
    {
      std::lock_guard lock(im.mutex);
      for (const auto& w : im.subscribers) {
        if (auto p = w.lock()) open.push_back(std::move(p));
      }
      im.subscribers.clear();
    }
    for (const auto& s : open) s->close();
  });
  // Let the close handlers run, then stop the loop.
  net::post(im.ioc, [&im] { im.ioc.stop(); });
  if (im.io_thread.joinable()) im.io_thread.join();
  im.started = false;
}

void SessionServer::wait(bool handle_signals) {
  Impl& im = *impl_;
  std::optional<net::signal_set> signals;
  if (handle_signals) {
    signals.emplace(im.ioc, SIGINT, SIGTERM);
    signals->async_wait([&im](beast::error_code ec, int) {
      if (!ec) im.request_stop();
    });
  }
  {
    std::unique_lock lock(im.mutex);
    im.cv.wait(lock, [&] { return im.stop_requested; });
  }
  if (signals) {
    net::post(im.ioc, [&signals] {
      beast::error_code ec;
      signals->cancel(ec);
    });
  }
  stop();
}

unsigned short SessionServer::port() const {
  beast::error_code ec;
  const auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : ep.port();
}

ServiceStats SessionServer::stats() const {
  const Impl& im = *impl_;
  return {im.periods.load(),        im.overruns.load(), im.frames_sent.load(),
          im.frames_dropped.load(), im.clients.load(),  im.bad_commands.load()};
}

void SessionServer::on_snapshot(std::function<void(const Snapshot&)> callback) {
  std::lock_guard lock(impl_->mutex);
  impl_->callback = std::move(callback);
}

int run_session(const SimConfig& config, const ServiceOptions& options) {
  SessionServer server(config, options);
  server.start();
  std::printf("pushmpc session on ws://%s:%u/ws (stats at /stats)\n", options.address.c_str(),
              static_cast<unsigned>(server.port()));
  std::fflush(stdout);
  server.wait(/*handle_signals=*/true);
  return 0;
}

}  // namespace pushmpc
