// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "boxlens/detector.hpp"
#include "boxlens/error.hpp"
#include "boxlens/protocol.hpp"
#include "boxlens/subprocess.hpp"

namespace boxlens {

struct ClientOptions {
  /// Deadline for the handshake and for each detect() call.
  std::chrono::milliseconds timeout{30000};
  /// Concurrency advertised through Detector::max_concurrency().
  std::size_t max_in_flight = 32;
};

/// Pipelined client for the detector wire protocol over one duplex stream.
/// Requests are written as they are submitted and a reader thread matches
/// responses to them by id, so completions may arrive in any order.
///
/// Any malformed line or unknown id poisons the connection: every pending
/// and future request fails with ProtocolError. End of stream fails them with
/// TransportError.
class ProtocolClient {
 public:
  ProtocolClient(UniqueFd stream, ClientOptions options = {},
                 std::function<std::string()> eof_diagnostic = {})
      : stream_(std::move(stream)), options_(options), eof_diagnostic_(std::move(eof_diagnostic)),
        reader_(std::make_unique<LineReader>(stream_.get())) {
    std::string line;
    switch (reader_->read_line(line, options_.timeout)) {
      case LineReader::Status::timeout:
        throw TransportError("timed out waiting for the detector handshake");
      case LineReader::Status::eof:
        throw TransportError("detector closed the stream before the handshake" + diagnostic());
      case LineReader::Status::line:
        break;
    }
    handshake_ = protocol::parse_handshake(line);
    thread_ = std::jthread([this](std::stop_token st) { read_loop(st); });
  }

  ProtocolClient(const ProtocolClient&) = delete;
  ProtocolClient& operator=(const ProtocolClient&) = delete;

  ~ProtocolClient() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
    fail_all(std::make_exception_ptr(TransportError("protocol client shut down")));
  }

  const protocol::Handshake& handshake() const noexcept { return handshake_; }
  const ClientOptions& options() const noexcept { return options_; }

  std::future<std::vector<Detection>> submit(const ImageRaster& img) {
    std::promise<std::vector<Detection>> promise;
    auto future = promise.get_future();
    std::uint64_t id;
    {
      std::lock_guard lock(mu_);
      if (broken_) std::rethrow_exception(broken_);
      id = next_id_++;
      pending_.emplace(id, Pending{std::move(promise), img.width(), img.height()});
    }
    const std::string line = protocol::encode_request(id, img).dump() + "\n";
    try {
      std::lock_guard lock(write_mu_);
      write_all(stream_.get(), line);
    } catch (...) {
      std::lock_guard lock(mu_);
      pending_.erase(id);
      throw;
    }
    return future;
  }

  std::vector<Detection> detect(const ImageRaster& img) {
    auto future = submit(img);
    if (future.wait_for(options_.timeout) != std::future_status::ready) {
      throw TransportError("detector did not answer within " +
                           std::to_string(options_.timeout.count()) + " ms");
    }
    return future.get();
  }

 private:
  struct Pending {
    std::promise<std::vector<Detection>> promise;
    int width;
    int height;
  };

  std::string diagnostic() const {
    if (!eof_diagnostic_) return {};
    const std::string d = eof_diagnostic_();
    return d.empty() ? std::string{} : " (" + d + ")";
  }

  void read_loop(std::stop_token st) {
    std::string line;
    while (!st.stop_requested()) {
      LineReader::Status status;
      try {
        status = reader_->read_line(line, std::chrono::milliseconds(50));
      } catch (...) {
        fail_all(std::current_exception());
        return;
      }
      if (status == LineReader::Status::timeout) continue;
      if (status == LineReader::Status::eof) {
        fail_all(std::make_exception_ptr(TransportError("detector closed the stream" + diagnostic())));
        return;
      }
      if (line.empty()) continue;
      if (!handle_line(line)) return;
    }
  }

  // Returns false once the connection is poisoned.
  bool handle_line(const std::string& line) {
    protocol::Response resp;
    try {
      resp = protocol::parse_response(line);
    } catch (const ProtocolError& e) {
      fail_all(std::make_exception_ptr(ProtocolError(std::string("fatal: ") + e.what())));
      return false;
    }

    std::optional<Pending> found;
    {
      std::lock_guard lock(mu_);
      if (auto it = pending_.find(resp.id); it != pending_.end()) {
        found = std::move(it->second);
        pending_.erase(it);
      }
    }
    if (!found) {
      fail_all(std::make_exception_ptr(
          ProtocolError("response id " + std::to_string(resp.id) + " matches no pending request")));
      return false;
    }
    Pending& p = *found;
    if (resp.error) {
      p.promise.set_exception(std::make_exception_ptr(TransportError("detector error: " + *resp.error)));
      return true;
    }
    if (resp.violation) {
      p.promise.set_exception(std::make_exception_ptr(ProtocolError(*resp.violation)));
      return true;
    }
    try {
      std::vector<Detection> dets;
      dets.reserve(resp.detections.size());
      for (const auto& d : resp.detections) {
        dets.push_back(protocol::parse_detection(d, std::make_pair(p.width, p.height)));
      }
      p.promise.set_value(std::move(dets));
    } catch (...) {
      p.promise.set_exception(std::current_exception());
    }
    return true;
  }

  void fail_all(std::exception_ptr error) {
    std::map<std::uint64_t, Pending> pending;
    {
      std::lock_guard lock(mu_);
      if (!broken_) broken_ = error;
      pending.swap(pending_);
    }
    for (auto& [id, p] : pending) p.promise.set_exception(error);
  }

  UniqueFd stream_;
  ClientOptions options_;
  std::function<std::string()> eof_diagnostic_;
  std::unique_ptr<LineReader> reader_;
  protocol::Handshake handshake_;

  std::mutex mu_;
  std::mutex write_mu_;
  std::uint64_t next_id_ = 0;
  std::map<std::uint64_t, Pending> pending_;
  std::exception_ptr broken_;

  std::jthread thread_;
};

/// Detector backed by a child process speaking the wire protocol.
class ExternalDetector final : public Detector {
 public:
  explicit ExternalDetector(const std::string& command, ClientOptions options = {})
      : process_(std::make_unique<Subprocess>(command)),
        client_(std::make_unique<ProtocolClient>(process_->take_stream(), options, [p = process_.get()] {
          return p->exit_status().value_or("");
        })) {}

  ~ExternalDetector() override {
    client_.reset();
    process_.reset();
  }

  DetectorCapabilities capabilities() const override { return client_->handshake().capabilities; }
  std::vector<Detection> detect(const ImageRaster& img) override { return client_->detect(img); }
  std::size_t max_concurrency() const override { return client_->options().max_in_flight; }

  const protocol::Handshake& handshake() const { return client_->handshake(); }
  ProtocolClient& client() { return *client_; }

 private:
  std::unique_ptr<Subprocess> process_;
  std::unique_ptr<ProtocolClient> client_;
};

/// external_detect: one round trip through an established client.
inline std::vector<Detection> external_detect(ProtocolClient& client, const ImageRaster& img) {
  return client.detect(img);
}

}  // namespace boxlens
