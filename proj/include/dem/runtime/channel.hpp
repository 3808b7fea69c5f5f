#pragma once

#include <memory>
#include <optional>

#include "dem/runtime/wire.hpp"

namespace dem::runtime {

/// One-directional, ordered, many-writer single-reader frame channel.
class Channel {
 public:
  virtual ~Channel() = default;

  /// Blocks while the channel is full. Returns false once closed.
  virtual bool send(const Frame& frame) = 0;
  /// Blocks until a frame arrives. Empty once closed and drained.
  virtual std::optional<Frame> receive() = 0;
  virtual std::optional<Frame> try_receive() = 0;
  /// Wakes every blocked sender and receiver.
  virtual void close() = 0;
};

enum class Overflow {
  kBlock,
  /// A full queue discards its oldest frame. For parameter broadcasts,
  /// where only the newest value matters.
  kDropOldest,
};

std::unique_ptr<Channel> make_in_process_channel(std::size_t capacity,
                                                 Overflow overflow = Overflow::kBlock);

/// Frames travel through a local socket pair as length-prefixed bytes,
/// after the DEMX1 stream header.
std::unique_ptr<Channel> make_socket_channel();

/// Socket channels ignore capacity and overflow; the kernel buffer bounds them.
std::unique_ptr<Channel> make_channel(bool socket, std::size_t capacity,
                                      Overflow overflow = Overflow::kBlock);

}  // namespace dem::runtime
