#ifndef COGEST_CORE_LOG_HPP_
#define COGEST_CORE_LOG_HPP_

#include <functional>
#include <string>

namespace cogest {

enum class LogLevel { debug, info, warning, error };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: stderr, info and above) and
/// returns the previous one.
LogSink set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log(LogLevel::warning, m); }

}  // namespace cogest

#endif  // COGEST_CORE_LOG_HPP_
