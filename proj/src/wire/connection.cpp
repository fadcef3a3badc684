#include "connection.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>

#include "microsim/wire.hpp"

namespace microsim::wire {

Connection::Connection(int fd) : fd_(fd) {}

Connection::~Connection() { ::close(fd_); }

void Connection::shutdown() { ::shutdown(fd_, SHUT_RDWR); }

bool Connection::fill() {
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n > 0) {
      buf_.append(chunk, static_cast<std::size_t>(n));
      return true;
    }
    if (n < 0 && errno == EINTR) continue;
    return false;
  }
}

bool Connection::send_raw(std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

bool Connection::handshake() {
  std::size_t end;
  while ((end = buf_.find("\r\n\r\n")) == std::string::npos) {
    if (buf_.size() > 16384 || !fill()) return false;
  }
  const std::string head = buf_.substr(0, end);
  buf_.erase(0, end + 4);
  std::string_view rest = head;
  const auto line_end = rest.find("\r\n");
  const std::string_view request = rest.substr(0, line_end);
  rest = line_end == std::string_view::npos ? std::string_view{} : rest.substr(line_end + 2);

  std::string key;
  bool upgrade = false;
  while (!rest.empty()) {
    const auto e = rest.find("\r\n");
    const std::string_view line = rest.substr(0, e);
    rest = e == std::string_view::npos ? std::string_view{} : rest.substr(e + 2);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    const std::string name = lower(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    if (name == "sec-websocket-key") key = std::string(value);
    if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
  }
  const bool path_ok = request.starts_with("GET /ws ") || request.starts_with("GET /ws?");
  if (!path_ok || !upgrade || key.empty()) {
    send_raw("HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
    return false;
  }
  return send_raw("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                  "Sec-WebSocket-Accept: " +
                  websocket_accept(key) + "\r\n\r\n");
}

std::optional<std::string> Connection::read_message() {
  if (!detected_) {
    while (buf_.size() < 4 && buf_.find('\n') == std::string::npos) {
      if (!fill()) return std::nullopt;
    }
    detected_ = true;
    if (buf_.starts_with("GET ")) {
      if (!handshake()) return std::nullopt;
      ws_ = true;
    }
  }
  if (!ws_) {
    std::size_t nl;
    while ((nl = buf_.find('\n')) == std::string::npos) {
      if (buf_.size() > kMaxMessage || !fill()) return std::nullopt;
    }
    std::string line = buf_.substr(0, nl);
    buf_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }
  std::string message;
  for (;;) {
    std::size_t used = 0;
    std::optional<WsFrame> f;
    try {
      while (!(f = decode_ws_frame(buf_, used))) {
        if (!fill()) return std::nullopt;
      }
    } catch (const std::exception&) {
      return std::nullopt;
    }
    buf_.erase(0, used);
    switch (static_cast<WsOpcode>(f->opcode)) {
      case WsOpcode::Ping: {
        std::lock_guard lk(write_mutex_);
        send_raw(encode_ws_frame(f->payload, WsOpcode::Pong));
        continue;
      }
      case WsOpcode::Pong:
        continue;
      case WsOpcode::Close: {
        std::lock_guard lk(write_mutex_);
        send_raw(encode_ws_frame(f->payload.substr(0, 2), WsOpcode::Close));
        return std::nullopt;
      }
      case WsOpcode::Text:
      case WsOpcode::Binary:
      case WsOpcode::Continuation:
        message += f->payload;
        if (message.size() > kMaxMessage) return std::nullopt;
        if (f->fin) return message;
        continue;
      default:
        return std::nullopt;
    }
  }
}

bool Connection::send_message(std::string_view body) {
  std::lock_guard lk(write_mutex_);
  if (ws_) return send_raw(encode_ws_frame(body, WsOpcode::Text));
  std::string line(body);
  line.push_back('\n');
  return send_raw(line);
}

}  // namespace microsim::wire
