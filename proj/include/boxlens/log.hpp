// Copyright 2026 The BoxLens Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace boxlens {

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
struct WarningSink {
  std::mutex mu;
  WarningHandler handler = [](const std::string& msg) {
    std::cerr << "boxlens: warning: " << msg << '\n';
  };
};
inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}
}  // namespace detail

/// Replaces the process-wide warning handler; returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mu);
  std::swap(sink.handler, handler);
  return handler;
}

inline void warn(const std::string& msg) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mu);
  if (sink.handler) sink.handler(msg);
}

}  // namespace boxlens
