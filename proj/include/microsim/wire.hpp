#pragma once

// NDJSON-over-TCP protocol server, with the same messages as WebSocket text
// frames on /ws.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "microsim/engine.hpp"

namespace microsim::wire {

inline constexpr int kProtocolVersion = 1;
/// Longest accepted message body.
inline constexpr std::size_t kMaxMessage = 1 << 20;
/// State broadcasts a slow session may have queued before the oldest is dropped.
inline constexpr std::size_t kMaxPendingStates = 4;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};
/// "HOST:PORT" or ":PORT".
std::optional<Endpoint> parse_endpoint(std::string_view text);

class BindError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string base64_encode(std::span<const std::uint8_t> data);
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);
/// float64 little-endian, then base64.
std::string encode_doubles(std::span<const double> values);

/// Sec-WebSocket-Accept for a client key.
std::string websocket_accept(std::string_view key);

struct WsFrame {
  bool fin = true;
  std::uint8_t opcode = 1;
  std::string payload;
};
enum class WsOpcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };
std::string encode_ws_frame(std::string_view payload, WsOpcode opcode,
                            std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt);
/// Decodes one frame from the front of buf. nullopt if incomplete; throws
/// std::runtime_error on oversized frames.
std::optional<WsFrame> decode_ws_frame(std::string_view buf, std::size_t& consumed);

/// Serves one simulation. Every state change goes through Simulation::post, so
/// requests take effect at tick boundaries on the engine thread.
class Server {
 public:
  /// Binds and starts accepting. Port 0 picks a free port.
  Server(engine::Simulation& sim, const Endpoint& at);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Closes the listening socket and every session.
  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace microsim::wire
