#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace microsim::wire {

/// One accepted socket. Speaks NDJSON, or WebSocket after an HTTP upgrade to
/// /ws; the first bytes decide.
class Connection {
 public:
  explicit Connection(int fd);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Next message body. nullopt once the peer is gone or broke the framing.
  std::optional<std::string> read_message();
  /// Thread-safe. False if the socket is dead.
  bool send_message(std::string_view body);
  /// Unblocks read_message from another thread.
  void shutdown();
  bool websocket() const { return ws_; }

 private:
  bool fill();
  bool send_raw(std::string_view bytes);
  bool handshake();

  int fd_;
  std::string buf_;
  bool detected_ = false;
  bool ws_ = false;
  std::mutex write_mutex_;
};

}  // namespace microsim::wire
