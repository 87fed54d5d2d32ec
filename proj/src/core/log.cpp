#include "cogest/core/log.hpp"

#include <iostream>
#include <mutex>

namespace cogest {

namespace {

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

void stderr_sink(LogLevel level, const std::string& message) {
  if (level == LogLevel::debug) return;
  static const char* names[] = {"debug", "info", "warning", "error"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

LogSink& current() {
  static LogSink sink = stderr_sink;
  return sink;
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(log_mutex());
  LogSink prev = std::move(current());
  current() = sink ? std::move(sink) : LogSink(stderr_sink);
  return prev;
}

void log(LogLevel level, const std::string& message) {
  std::lock_guard lock(log_mutex());
  current()(level, message);
}

}  // namespace cogest
