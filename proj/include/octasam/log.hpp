#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace octasam::log {

enum class Level { Debug, Info, Warn, Error };

using Sink = std::function<void(Level, std::string_view)>;

/// Replace the process-wide sink (default writes warnings and errors to stderr).
/// Returns the previous sink so tests can restore it.
Sink set_sink(Sink sink);

void write(Level level, std::string_view message);

inline void debug(std::string_view m) { write(Level::Debug, m); }
inline void info(std::string_view m) { write(Level::Info, m); }
inline void warn(std::string_view m) { write(Level::Warn, m); }
inline void error(std::string_view m) { write(Level::Error, m); }

}  // namespace octasam::log
