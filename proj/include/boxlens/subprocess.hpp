// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "boxlens/error.hpp"

namespace boxlens {

/// Owning file descriptor.
class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) noexcept : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// Connected pair of stream sockets; convenient as an in-process duplex pipe.
inline std::pair<UniqueFd, UniqueFd> make_socket_pair() {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
    throw TransportError(std::string("socketpair: ") + std::strerror(errno));
  }
  return {UniqueFd(sv[0]), UniqueFd(sv[1])};
}

/// Writes all of `data`. Uses MSG_NOSIGNAL on sockets so a vanished peer
/// surfaces as TransportError rather than SIGPIPE.
inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("write to detector failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

/// Buffered newline splitter over a file descriptor.
class LineReader {
 public:
  explicit LineReader(int fd) : fd_(fd) {}

  enum class Status { line, timeout, eof };

  /// Waits up to `timeout` for a full line; the newline is stripped.
  Status read_line(std::string& line, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (const auto pos = buf_.find('\n'); pos != std::string::npos) {
        line.assign(buf_, 0, pos);
        buf_.erase(0, pos + 1);
        return Status::line;
      }
      if (eof_) {
        if (!buf_.empty()) {
          line = std::exchange(buf_, {});
          return Status::line;
        }
        return Status::eof;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return Status::timeout;
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (r == 0) return Status::timeout;
      char chunk[65536];
      const ssize_t n = ::read(fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        if (errno == ECONNRESET) {
          eof_ = true;
          continue;
        }
        throw TransportError(std::string("read from detector failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        eof_ = true;
        continue;
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buf_;
  bool eof_ = false;
};

/// A child process running `/bin/sh -c command` whose stdin and stdout are
/// one end of a socket pair. The parent end is handed out with take_stream().
class Subprocess {
 public:
  explicit Subprocess(const std::string& command) : command_(command) {
    auto [parent, child] = make_socket_pair();
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      ::dup2(child.get(), STDIN_FILENO);
      ::dup2(child.get(), STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    pid_ = pid;
    stream_ = std::move(parent);
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() { terminate(); }

  UniqueFd take_stream() { return std::move(stream_); }
  const std::string& command() const noexcept { return command_; }

  /// Exit description once the child has finished, empty while it runs.
  std::optional<std::string> exit_status() {
    reap(false);
    if (!status_) return std::nullopt;
    const int st = *status_;
    if (WIFEXITED(st)) return "exited with status " + std::to_string(WEXITSTATUS(st));
    if (WIFSIGNALED(st)) return "killed by signal " + std::to_string(WTERMSIG(st));
    return "stopped";
  }

  /// Waits briefly for a voluntary exit, then escalates to SIGTERM and SIGKILL.
  void terminate() noexcept {
    if (pid_ <= 0 || status_) return;
    stream_.reset();
    for (int sig : {0, SIGTERM, SIGKILL}) {
      if (sig != 0) ::kill(pid_, sig);
      for (int i = 0; i < 100; ++i) {
        if (reap(false)) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    reap(true);
  }

 private:
  bool reap(bool block) noexcept {
    if (status_) return true;
    if (pid_ <= 0) return false;
    int st = 0;
    const pid_t r = ::waitpid(pid_, &st, block ? 0 : WNOHANG);
    if (r == pid_) {
      status_ = st;
      return true;
    }
    return false;
  }

  std::string command_;
  pid_t pid_ = -1;
  UniqueFd stream_;
  std::optional<int> status_;
};

}  // namespace boxlens
