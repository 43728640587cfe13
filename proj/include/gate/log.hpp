#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace gate {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

namespace detail {
inline LogSink& log_sink() {
  static LogSink sink = [](LogLevel level, const std::string& msg) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::clog << (level == LogLevel::warning ? "[warn] " : "[info] ") << msg << '\n';
  };
  return sink;
}
}  // namespace detail

/// Replaces the process-wide log sink (tests install a capturing one).
inline void set_log_sink(LogSink sink) { detail::log_sink() = std::move(sink); }

inline void log(LogLevel level, const std::string& msg) {
  if (auto& sink = detail::log_sink()) sink(level, msg);
}

}  // namespace gate
