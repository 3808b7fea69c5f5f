#include "dem/runtime/wire.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include "dem/core/error.hpp"

namespace dem::runtime {
namespace {

void put_u8(std::vector<std::byte>& out, std::uint8_t v) { out.push_back(std::byte{v}); }

template <typename U>
void put_le(std::vector<std::byte>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U get_le(std::span<const std::byte> in, std::size_t offset) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(std::to_integer<std::uint8_t>(in[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::vector<std::byte> encode_frame(const Frame& frame) {
  const std::size_t body = kFrameHeaderBytes + 8 * frame.payload.size();
  if (body > std::numeric_limits<std::uint32_t>::max()) throw FormatError("frame too large");
  std::vector<std::byte> out;
  out.reserve(4 + body);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(body));
  put_u8(out, static_cast<std::uint8_t>(frame.kind));
  put_le<std::uint32_t>(out, frame.subset_id);
  put_le<std::uint64_t>(out, frame.iteration);
  for (double d : frame.payload) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
  return out;
}

Frame decode_frame_body(std::span<const std::byte> body) {
  if (body.size() < kFrameHeaderBytes || (body.size() - kFrameHeaderBytes) % 8 != 0) {
    throw FormatError("frame body has invalid length " + std::to_string(body.size()));
  }
  Frame f;
  const auto kind = std::to_integer<std::uint8_t>(body[0]);
  if (kind < 1 || kind > 5) throw FormatError("unknown frame kind " + std::to_string(kind));
  f.kind = static_cast<MsgKind>(kind);
  f.subset_id = get_le<std::uint32_t>(body, 1);
  f.iteration = get_le<std::uint64_t>(body, 5);
  const std::size_t n = (body.size() - kFrameHeaderBytes) / 8;
  f.payload.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.payload[i] = std::bit_cast<double>(get_le<std::uint64_t>(body, kFrameHeaderBytes + 8 * i));
  }
  return f;
}

std::vector<double> encode_text(std::string_view text) {
  std::vector<double> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<double>(c));
  return out;
}

std::string decode_text(std::span<const double> payload) {
  std::string out;
  out.reserve(payload.size());
  for (double d : payload) {
    if (!(d >= 0.0 && d < 256.0)) break;
    out.push_back(static_cast<char>(static_cast<unsigned char>(d)));
  }
  return out;
}

}  // namespace dem::runtime
