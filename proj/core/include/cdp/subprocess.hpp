#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <sys/types.h>

namespace cdp {

/// Bidirectional newline-framed text channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;

  /// Writes `line` plus '\n'. Throws Error when the peer is gone.
  virtual void write_line(std::string_view line) = 0;

  /// Next line without its terminator, or nullopt once `timeout` elapses.
  /// Throws Error on end of stream.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds timeout) = 0;
};

/// Line channel over a connected stream socket. Owns the descriptor.
class SocketChannel : public LineChannel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  ~SocketChannel() override;
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;

  void write_line(std::string_view line) override;
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override;

  /// Signals end of input to the peer.
  void shutdown_write();

  /// Connects to a Unix-domain stream socket.
  static std::unique_ptr<SocketChannel> connect_unix(const std::string& path);

 private:
  int fd_;
  std::string buffer_;
};

/// `/bin/sh -c command` with its stdin and stdout attached to a socket pair.
/// The child inherits stderr. Destruction closes its input, waits briefly,
/// then kills it.
class Subprocess : public LineChannel {
 public:
  explicit Subprocess(const std::string& command);
  ~Subprocess() override;
  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  void write_line(std::string_view line) override { channel_->write_line(line); }
  std::optional<std::string> read_line(std::chrono::milliseconds timeout) override {
    return channel_->read_line(timeout);
  }

  pid_t pid() const noexcept { return pid_; }

 private:
  std::unique_ptr<SocketChannel> channel_;
  pid_t pid_ = -1;
};

}  // namespace cdp
