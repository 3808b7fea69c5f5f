#include "dem/runtime/channel.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <atomic>
#include <mutex>

#include "dem/core/error.hpp"

namespace dem::runtime {
namespace {

class QueueChannel final : public Channel {
 public:
  QueueChannel(std::size_t capacity, Overflow overflow)
      : capacity_(capacity == 0 ? 1 : capacity), overflow_(overflow) {}

  bool send(const Frame& frame) override {
    std::unique_lock lock(mu_);
    if (overflow_ == Overflow::kBlock) {
      not_full_.wait(lock, [&] { return closed_ || queue_.size() < capacity_; });
    } else if (queue_.size() >= capacity_) {
      queue_.pop_front();
    }
    if (closed_) return false;
    queue_.push_back(frame);
    not_empty_.notify_one();
    return true;
  }

  std::optional<Frame> receive() override {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !queue_.empty(); });
    return pop_locked();
  }

  std::optional<Frame> try_receive() override {
    std::lock_guard lock(mu_);
    return pop_locked();
  }

  void close() override {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::optional<Frame> pop_locked() {
    if (queue_.empty()) return std::nullopt;
    Frame f = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_one();
    return f;
  }

  std::size_t capacity_;
  Overflow overflow_;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<Frame> queue_;
  bool closed_ = false;
};

class SocketChannel final : public Channel {
 public:
  SocketChannel() {
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds_) != 0) {
      throw Error(std::string("socketpair failed: ") + std::strerror(errno));
    }
    std::lock_guard lock(write_mu_);
    write_all(reinterpret_cast<const std::byte*>(kStreamMagic.data()), kStreamMagic.size());
  }

  ~SocketChannel() override {
    ::close(fds_[0]);
    ::close(fds_[1]);
  }

  bool send(const Frame& frame) override {
    const auto bytes = encode_frame(frame);
    std::lock_guard lock(write_mu_);
    if (closed_) return false;
    return write_all(bytes.data(), bytes.size());
  }

  std::optional<Frame> receive() override {
    std::lock_guard lock(read_mu_);
    return read_frame_locked();
  }

  std::optional<Frame> try_receive() override {
    std::lock_guard lock(read_mu_);
    pollfd pfd{fds_[1], POLLIN, 0};
    if (::poll(&pfd, 1, 0) <= 0 || !(pfd.revents & (POLLIN | POLLHUP))) return std::nullopt;
    return read_frame_locked();
  }

  void close() override {
    closed_ = true;
    ::shutdown(fds_[0], SHUT_RDWR);
    ::shutdown(fds_[1], SHUT_RDWR);
  }

 private:
  bool write_all(const std::byte* data, std::size_t n) {
    while (n > 0) {
      const ssize_t w = ::send(fds_[0], data, n, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data += w;
      n -= static_cast<std::size_t>(w);
    }
    return true;
  }

  bool read_exact(std::byte* data, std::size_t n) {
    while (n > 0) {
      const ssize_t r = ::recv(fds_[1], data, n, 0);
      if (r == 0) return false;
      if (r < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data += r;
      n -= static_cast<std::size_t>(r);
    }
    return true;
  }

  std::optional<Frame> read_frame_locked() {
    if (!header_checked_) {
      std::array<char, kStreamMagic.size()> magic{};
      if (!read_exact(reinterpret_cast<std::byte*>(magic.data()), magic.size())) return std::nullopt;
      if (magic != kStreamMagic) throw FormatError("socket stream: bad magic header");
      header_checked_ = true;
    }
    std::array<std::byte, 4> len_bytes{};
    if (!read_exact(len_bytes.data(), len_bytes.size())) return std::nullopt;
    std::uint32_t len = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      len |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(len_bytes[i])) << (8 * i);
    }
    std::vector<std::byte> body(len);
    if (!read_exact(body.data(), body.size())) return std::nullopt;
    return decode_frame_body(body);
  }

  int fds_[2] = {-1, -1};
  std::mutex write_mu_, read_mu_;
  std::atomic<bool> closed_{false};
  bool header_checked_ = false;
};

}  // namespace

std::unique_ptr<Channel> make_in_process_channel(std::size_t capacity, Overflow overflow) {
  return std::make_unique<QueueChannel>(capacity, overflow);
}

std::unique_ptr<Channel> make_socket_channel() { return std::make_unique<SocketChannel>(); }

std::unique_ptr<Channel> make_channel(bool socket, std::size_t capacity, Overflow overflow) {
  if (socket) return make_socket_channel();
  return make_in_process_channel(capacity, overflow);
}

}  // namespace dem::runtime
