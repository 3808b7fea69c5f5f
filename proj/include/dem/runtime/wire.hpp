#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dem::runtime {

enum class MsgKind : std::uint8_t {
  kTheta = 1,     // manager -> worker: parameter broadcast
  kStats = 2,     // worker -> manager: E-step result
  kShutdown = 3,  // manager -> worker
  kError = 4,     // worker -> manager: failure, payload carries the message bytes
  kPeerStats = 5, // process -> process (all-pairs scheme)
};

/// Transport unit. On the wire: u32 body length, then
/// u8 kind | u32 subset_id | u64 iteration | f64[] payload, all little-endian.
struct Frame {
  MsgKind kind = MsgKind::kTheta;
  std::uint32_t subset_id = 0;
  std::uint64_t iteration = 0;
  std::vector<double> payload;

  bool operator==(const Frame&) const = default;
};

/// Written once at the start of every byte stream.
inline constexpr std::array<char, 5> kStreamMagic = {'D', 'E', 'M', 'X', '1'};

/// Fixed part of a frame body: kind + subset_id + iteration.
inline constexpr std::size_t kFrameHeaderBytes = 1 + 4 + 8;

/// Length prefix followed by the body.
std::vector<std::byte> encode_frame(const Frame& frame);

/// Decodes a frame body (without the length prefix).
Frame decode_frame_body(std::span<const std::byte> body);

/// Encodes a diagnostic string as a kError payload (one byte per f64).
std::vector<double> encode_text(std::string_view text);
std::string decode_text(std::span<const double> payload);

}  // namespace dem::runtime
