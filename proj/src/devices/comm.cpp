#include <algorithm>
#include <cmath>

#include "microsim/devices.hpp"

namespace microsim::devices {

void check_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayload) throw PayloadTooLarge(payload.size());
}

bool can_receive(const Message& message, const ReceiverSpec& receiver, const Pose& receiver_pose,
                 std::span<const physics::Body> bodies, std::span<const std::size_t> receiver_bodies) {
  if (message.channel != kBroadcastChannel) {
    if (message.channel != receiver.channel) return false;
    if (message.emitter.infra_red != receiver.infra_red) return false;
  }
  const Vec2 from = message.emitter_pose.position();
  const Vec2 to = receiver_pose.position() - from;
  const double d = norm(to);
  if (message.emitter.range >= 0.0 && d > message.emitter.range) return false;
  if (!message.emitter.infra_red) return true;

  if (message.emitter.aperture >= 0.0 && d > 0.0) {
    const double off = std::abs(wrap_angle(std::atan2(to.y, to.x) - message.emitter_pose.theta));
    if (off > message.emitter.aperture / 2.0) return false;
  }
  if (d == 0.0) return true;
  std::vector<std::size_t> ignore(message.sender_bodies);
  ignore.insert(ignore.end(), receiver_bodies.begin(), receiver_bodies.end());
  const auto hit = physics::ray_cast(bodies, from, to * (1.0 / d), d, ignore);
  return !(hit.hit && hit.distance < d - 1e-9);
}

void sort_for_delivery(std::vector<Message>& messages) {
  std::stable_sort(messages.begin(), messages.end(), [](const Message& a, const Message& b) {
    if (a.send_tick != b.send_tick) return a.send_tick < b.send_tick;
    if (a.sender_order != b.sender_order) return a.sender_order < b.sender_order;
    return a.sequence < b.sequence;
  });
}

}  // namespace microsim::devices
