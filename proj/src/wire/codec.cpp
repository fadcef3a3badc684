#include <openssl/evp.h>

#include <charconv>
#include <cstring>

#include "microsim/wire.hpp"

namespace microsim::wire {

std::optional<Endpoint> parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) return std::nullopt;
  Endpoint e;
  const std::string_view host = text.substr(0, colon);
  const std::string_view port = text.substr(colon + 1);
  if (!host.empty()) e.host = std::string(host);
  unsigned value = 0;
  const auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc{} || end != port.data() + port.size() || port.empty() || value > 65535) return std::nullopt;
  e.port = static_cast<std::uint16_t>(value);
  return e;
}

std::string base64_encode(std::span<const std::uint8_t> data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) return std::nullopt;
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    const bool pad_ok = c == '=' && k + 2 >= text.size() && (k + 1 == text.size() || text[k + 1] == '=');
    if (!alnum && c != '+' && c != '/' && !pad_ok) return std::nullopt;
  }
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) return std::nullopt;
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string encode_doubles(std::span<const double> values) {
  std::vector<std::uint8_t> raw(values.size() * 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[k], 8);
    for (int b = 0; b < 8; ++b) raw[k * 8 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(raw);
}

std::string websocket_accept(std::string_view key) {
  const std::string text = std::string(key) + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha1(), nullptr);
  return base64_encode({digest, len});
}

std::string encode_ws_frame(std::string_view payload, WsOpcode opcode, std::optional<std::array<std::uint8_t, 4>> mask) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(opcode)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xff));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int b = 7; b >= 0; --b) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * b)) & 0xff));
  }
  if (mask) {
    out.append(reinterpret_cast<const char*>(mask->data()), 4);
    for (std::size_t k = 0; k < n; ++k) out.push_back(static_cast<char>(payload[k] ^ static_cast<char>((*mask)[k % 4])));
  } else {
    out.append(payload);
  }
  return out;
}

std::optional<WsFrame> decode_ws_frame(std::string_view buf, std::size_t& consumed) {
  if (buf.size() < 2) return std::nullopt;
  const auto byte = [&](std::size_t k) { return static_cast<std::uint8_t>(buf[k]); };
  WsFrame f;
  f.fin = (byte(0) & 0x80) != 0;
  f.opcode = byte(0) & 0x0f;
  const bool masked = (byte(1) & 0x80) != 0;
  std::uint64_t n = byte(1) & 0x7f;
  std::size_t at = 2;
  if (n == 126) {
    if (buf.size() < 4) return std::nullopt;
    n = (static_cast<std::uint64_t>(byte(2)) << 8) | byte(3);
    at = 4;
  } else if (n == 127) {
    if (buf.size() < 10) return std::nullopt;
    n = 0;
    for (std::size_t k = 2; k < 10; ++k) n = (n << 8) | byte(k);
    at = 10;
  }
  if (n > kMaxMessage) throw std::runtime_error("websocket frame too large");
  std::array<std::uint8_t, 4> key{};
  if (masked) {
    if (buf.size() < at + 4) return std::nullopt;
    for (std::size_t k = 0; k < 4; ++k) key[k] = byte(at + k);
    at += 4;
  }
  if (buf.size() < at + n) return std::nullopt;
  f.payload.assign(buf.substr(at, n));
  if (masked) {
    for (std::size_t k = 0; k < f.payload.size(); ++k) f.payload[k] = static_cast<char>(f.payload[k] ^ static_cast<char>(key[k % 4]));
  }
  consumed = at + n;
  return f;
}

}  // namespace microsim::wire
